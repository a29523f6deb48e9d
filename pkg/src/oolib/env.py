"""Object Library grid worlds: Shapes (absolute moves) and Rush Hour (moves
relative to each object's heading).

A library holds N objects; a scene picks K of them. Positions are (row, col)
with row 0 at the top, so north decreases the row index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import AbsentObject, ConfigError, GridTooSmall, InvalidAction, UnsupportedGrid


class Shape(IntEnum):
    TRIANGLE_UP = 0
    TRIANGLE_DOWN = 1
    TRIANGLE_LEFT = 2
    TRIANGLE_RIGHT = 3
    SQUARE = 4
    CIRCLE = 5
    DIAMOND = 6
    CROSS = 7
    PENTAGON = 8
    STAR = 9


class Heading(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


class ShapesMove(IntEnum):
    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3


class CarMove(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    LEFT = 2
    RIGHT = 3


class Variant(IntEnum):
    SHAPES = 0
    RUSHHOUR = 1

    @classmethod
    def parse(cls, name) -> "Variant":
        if isinstance(name, Variant):
            return name
        key = str(name).replace("_", "").replace("-", "").lower()
        table = {"shapes": cls.SHAPES, "rushhour": cls.RUSHHOUR}
        if key not in table:
            raise ConfigError(f"unknown environment variant {name!r}")
        return table[key]


N_SHAPES = len(Shape)
N_COLORS = 10
N_HEADINGS = 4
N_PRIMITIVES = 4

# (drow, dcol) per compass heading
HEADING_DELTA = {
    Heading.NORTH: (-1, 0),
    Heading.EAST: (0, 1),
    Heading.SOUTH: (1, 0),
    Heading.WEST: (0, -1),
}
SHAPES_MOVE_HEADING = {
    ShapesMove.NORTH: Heading.NORTH,
    ShapesMove.SOUTH: Heading.SOUTH,
    ShapesMove.EAST: Heading.EAST,
    ShapesMove.WEST: Heading.WEST,
}
# clockwise quarter turns added to the heading
CAR_MOVE_TURN = {CarMove.FORWARD: 0, CarMove.RIGHT: 1, CarMove.BACKWARD: 2, CarMove.LEFT: 3}
TRIANGLE_HEADING = {
    Shape.TRIANGLE_UP: Heading.NORTH,
    Shape.TRIANGLE_RIGHT: Heading.EAST,
    Shape.TRIANGLE_DOWN: Heading.SOUTH,
    Shape.TRIANGLE_LEFT: Heading.WEST,
}

PALETTE = np.array(
    [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    shape: Shape
    color: int
    orientation: Heading = Heading.NORTH


class Library:
    """The vocabulary of N objects a scene can draw from."""

    def __init__(self, objects: Sequence[ObjectSpec], variant: Variant = Variant.SHAPES):
        self.objects = tuple(objects)
        self.variant = Variant(variant)
        ids = [o.id for o in self.objects]
        if ids != list(range(len(ids))):
            raise ConfigError("library ids must be contiguous from 0")
        pairs = {(int(o.shape), o.color) for o in self.objects}
        if len(pairs) != len(self.objects):
            raise ConfigError("(shape, color) pairs must be unique within a library")
        for o in self.objects:
            if not 0 <= o.color < N_COLORS:
                raise ConfigError(f"color {o.color} outside palette")

    @property
    def n(self) -> int:
        return len(self.objects)

    def __len__(self):
        return len(self.objects)

    def __getitem__(self, i) -> ObjectSpec:
        return self.objects[i]

    @classmethod
    def shapes(cls, n: int) -> "Library":
        # colors follow a fixed shuffle so that color order differs from id order
        if not 1 <= n <= N_SHAPES * N_COLORS:
            raise ConfigError(f"Shapes library supports 1..100 objects, got {n}")
        objs = []
        for i in range(n):
            q, r = divmod(i, N_SHAPES)
            objs.append(ObjectSpec(i, Shape(r), (7 * r + 3 + q) % N_COLORS, Heading.NORTH))
        return cls(objs, Variant.SHAPES)

    @classmethod
    def rush_hour(cls, n: int) -> "Library":
        tri = [Shape.TRIANGLE_UP, Shape.TRIANGLE_RIGHT, Shape.TRIANGLE_DOWN, Shape.TRIANGLE_LEFT]
        if not 1 <= n <= 4 * N_COLORS:
            raise ConfigError(f"Rush Hour library supports 1..40 objects, got {n}")
        objs = []
        for i in range(n):
            q, r = divmod(i, 4)
            shape = tri[r]
            objs.append(ObjectSpec(i, shape, (3 * q + 7 * r + 1) % N_COLORS, TRIANGLE_HEADING[shape]))
        return cls(objs, Variant.RUSHHOUR)

    @classmethod
    def make(cls, variant, n: int) -> "Library":
        v = Variant.parse(variant)
        return cls.shapes(n) if v == Variant.SHAPES else cls.rush_hour(n)


@dataclass(frozen=True)
class Scene:
    object_ids: Tuple[int, ...]

    def __init__(self, object_ids):
        ids = tuple(sorted(int(i) for i in object_ids))
        if len(set(ids)) != len(ids):
            raise ConfigError(f"scene has repeated ids: {ids}")
        object.__setattr__(self, "object_ids", ids)

    @property
    def k(self) -> int:
        return len(self.object_ids)

    def validate(self, library: Library):
        n = library.n
        if not 1 < self.k < n:
            raise ConfigError(f"scene size must satisfy 1 < K < N, got K={self.k}, N={n}")
        for i in self.object_ids:
            if not 0 <= i < n:
                raise ConfigError(f"object id {i} not in library of size {n}")

    def __contains__(self, i):
        return i in self.object_ids

    def __iter__(self):
        return iter(self.object_ids)

    def __len__(self):
        return len(self.object_ids)


@dataclass(frozen=True)
class ActionId:
    object_id: int
    primitive: int

    @property
    def flat(self) -> int:
        return N_PRIMITIVES * self.object_id + self.primitive

    @classmethod
    def from_flat(cls, index: int) -> "ActionId":
        return cls(*divmod(int(index), N_PRIMITIVES))


@dataclass(frozen=True)
class EnvState:
    library: Library = field(repr=False, compare=False)
    scene: Scene
    positions: Tuple[Tuple[int, int], ...]  # aligned with scene.object_ids
    grid_w: int = 5
    grid_h: int = 5

    @property
    def variant(self) -> Variant:
        return self.library.variant

    def position_of(self, object_id: int) -> Tuple[int, int]:
        return self.positions[self.scene.object_ids.index(object_id)]

    def position_map(self) -> Dict[int, Tuple[int, int]]:
        return dict(zip(self.scene.object_ids, self.positions))

    def key(self):
        return (self.scene.object_ids, self.positions)


@dataclass
class Observation:
    slot_features: np.ndarray  # (K, F)
    slot_order: np.ndarray  # slot index -> object id


def feature_dim() -> int:
    return N_SHAPES + N_COLORS + N_HEADINGS + 2


def move_heading(spec: ObjectSpec, primitive: int, variant: Variant) -> Heading:
    if not 0 <= primitive < N_PRIMITIVES:
        raise InvalidAction(f"primitive {primitive} out of range")
    if variant == Variant.SHAPES:
        return SHAPES_MOVE_HEADING[ShapesMove(primitive)]
    return Heading((int(spec.orientation) + CAR_MOVE_TURN[CarMove(primitive)]) % 4)


def step(state: EnvState, action: ActionId) -> Tuple[EnvState, bool]:
    """Apply one move. Blocked moves (off-grid or into an occupied cell)
    leave the state untouched and report moved=False."""
    if not 0 <= action.primitive < N_PRIMITIVES:
        raise InvalidAction(f"primitive {action.primitive} out of range")
    if action.object_id not in state.scene:
        raise AbsentObject(f"object {action.object_id} is not in scene {state.scene.object_ids}")
    spec = state.library[action.object_id]
    dr, dc = HEADING_DELTA[move_heading(spec, action.primitive, state.variant)]
    slot = state.scene.object_ids.index(action.object_id)
    r, c = state.positions[slot]
    target = (r + dr, c + dc)
    if not (0 <= target[0] < state.grid_h and 0 <= target[1] < state.grid_w):
        return state, False
    if target in state.positions:
        return state, False
    positions = list(state.positions)
    positions[slot] = target
    return EnvState(state.library, state.scene, tuple(positions), state.grid_w, state.grid_h), True


def reset(library: Library, scene: Scene, rng_seed, grid_w: int = 5, grid_h: int = 5) -> EnvState:
    scene.validate(library)
    if scene.k > grid_w * grid_h:
        raise GridTooSmall(f"{scene.k} objects do not fit on a {grid_w}x{grid_h} grid")
    rng = np.random.default_rng(rng_seed)
    cells = rng.choice(grid_w * grid_h, size=scene.k, replace=False)
    positions = tuple((int(c) // grid_w, int(c) % grid_w) for c in cells)
    return EnvState(library, scene, positions, grid_w, grid_h)


def object_features(spec: ObjectSpec, pos, grid_w: int, grid_h: int) -> np.ndarray:
    f = np.zeros(feature_dim())
    f[int(spec.shape)] = 1.0
    f[N_SHAPES + spec.color] = 1.0
    f[N_SHAPES + N_COLORS + int(spec.orientation)] = 1.0
    f[-2] = pos[0] / grid_h
    f[-1] = pos[1] / grid_w
    return f


def state_features(state: EnvState) -> np.ndarray:
    """Features of the present objects in ascending id order, shape (K, F)."""
    return np.stack(
        [object_features(state.library[i], p, state.grid_w, state.grid_h)
         for i, p in zip(state.scene.object_ids, state.positions)]
    )


def observe(state: EnvState, rng: np.random.Generator) -> Observation:
    feats = state_features(state)
    perm = rng.permutation(state.scene.k)
    order = np.asarray(state.scene.object_ids)[perm]
    return Observation(feats[perm], order)


# ---------------------------------------------------------------- rendering

CELL = 10


def _glyph_mask(shape: Shape) -> np.ndarray:
    """Boolean CELL x CELL mask for a shape glyph."""
    y, x = np.mgrid[0:CELL, 0:CELL] + 0.5
    cy = cx = CELL / 2
    u, v = x - cx, y - cy  # v grows downward
    r = CELL / 2 - 0.5
    if shape == Shape.SQUARE:
        return (np.abs(u) <= r - 0.5) & (np.abs(v) <= r - 0.5)
    if shape == Shape.CIRCLE:
        return u * u + v * v <= r * r
    if shape == Shape.DIAMOND:
        return np.abs(u) + np.abs(v) <= r
    if shape == Shape.CROSS:
        return (np.abs(u) <= 1.5) | (np.abs(v) <= 1.5)
    if shape in (Shape.TRIANGLE_UP, Shape.TRIANGLE_DOWN, Shape.TRIANGLE_LEFT, Shape.TRIANGLE_RIGHT):
        # apex points along the heading
        along = {Shape.TRIANGLE_UP: -v, Shape.TRIANGLE_DOWN: v,
                 Shape.TRIANGLE_LEFT: -u, Shape.TRIANGLE_RIGHT: u}[shape]
        across = u if shape in (Shape.TRIANGLE_UP, Shape.TRIANGLE_DOWN) else v
        t = (r - along) / (2 * r)  # 0 at apex, 1 at base
        return (t >= 0) & (t <= 1) & (np.abs(across) <= t * r)
    ang = np.arctan2(u, -v)
    rad = np.sqrt(u * u + v * v)
    if shape == Shape.PENTAGON:
        sector = 2 * np.pi / 5
        a = np.mod(ang, sector) - sector / 2
        return rad * np.cos(a) <= r * np.cos(sector / 2)
    if shape == Shape.STAR:
        sector = 2 * np.pi / 5
        a = np.abs(np.mod(ang, sector) - sector / 2) / (sector / 2)
        return rad <= r * (0.45 + 0.55 * a)
    raise ValueError(shape)


def render_ppm(state: EnvState) -> bytes:
    """Binary PPM (P6) of a 5x5 state, 10x10 pixels per cell on black."""
    if (state.grid_w, state.grid_h) != (5, 5):
        raise UnsupportedGrid(f"rendering needs a 5x5 grid, got {state.grid_w}x{state.grid_h}")
    img = np.zeros((5 * CELL, 5 * CELL, 3), dtype=np.uint8)
    for oid, (r, c) in zip(state.scene.object_ids, state.positions):
        spec = state.library[oid]
        block = img[r * CELL:(r + 1) * CELL, c * CELL:(c + 1) * CELL]
        block[_glyph_mask(spec.shape)] = PALETTE[spec.color]
    header = f"P6\n{5 * CELL} {5 * CELL}\n255\n".encode("ascii")
    return header + img.tobytes()


def empty_state(library: Library, grid_w=5, grid_h=5) -> EnvState:
    """State with no objects, useful for background-only rendering."""
    return EnvState(library, Scene(()), (), grid_w, grid_h)
