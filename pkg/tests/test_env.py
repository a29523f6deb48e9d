import numpy as np
import pytest
from hypothesis import given, strategies as st

from oolib import env
from oolib.env import (ActionId, CarMove, EnvState, Heading, Library, Scene, Shape, ShapesMove, Variant,
                       feature_dim, observe, render_ppm, reset, step)
from oolib.errors import AbsentObject, ConfigError, GridTooSmall, InvalidAction, UnsupportedGrid


def make_state(lib, placements, w=5, h=5):
    ids = sorted(placements)
    return EnvState(lib, Scene(ids), tuple(placements[i] for i in ids), w, h)


SHAPES = Library.shapes(10)
RUSH = Library.rush_hour(10)


def test_library_invariants():
    for lib in (SHAPES, RUSH, Library.shapes(100), Library.rush_hour(40)):
        assert [o.id for o in lib.objects] == list(range(lib.n))
        assert len({(int(o.shape), o.color) for o in lib.objects}) == lib.n
    for o in RUSH.objects:
        assert env.TRIANGLE_HEADING[o.shape] == o.orientation
    assert all(o.orientation == Heading.NORTH for o in SHAPES.objects)


def test_library_rejects_duplicates():
    o = env.ObjectSpec(0, Shape.SQUARE, 1)
    with pytest.raises(ConfigError):
        Library([o, env.ObjectSpec(1, Shape.SQUARE, 1)])


def test_scene_validation():
    with pytest.raises(ConfigError):
        Scene([1, 2]).validate(Library.shapes(2))
    with pytest.raises(ConfigError):
        Scene([3]).validate(SHAPES)
    with pytest.raises(ConfigError):
        Scene([1, 12]).validate(SHAPES)
    assert Scene([4, 1, 3]).object_ids == (1, 3, 4)


def test_action_flat_index():
    a = ActionId(3, 2)
    assert a.flat == 14
    assert ActionId.from_flat(14) == a


def test_rush_hour_east_right_moves_south():
    assert RUSH[1].orientation == Heading.EAST
    s = make_state(RUSH, {1: (2, 2), 0: (4, 4)})
    s2, moved = step(s, ActionId(1, CarMove.RIGHT))
    assert moved and s2.position_of(1) == (3, 2)


def test_rush_hour_south_right_moves_west():
    assert RUSH[2].orientation == Heading.SOUTH
    s = make_state(RUSH, {2: (2, 2), 0: (4, 4)})
    s2, moved = step(s, ActionId(2, CarMove.RIGHT))
    assert moved and s2.position_of(2) == (2, 1)


def test_rush_hour_north_table():
    s = make_state(RUSH, {0: (2, 2), 1: (4, 4)})
    expect = {CarMove.FORWARD: (1, 2), CarMove.BACKWARD: (3, 2), CarMove.LEFT: (2, 1), CarMove.RIGHT: (2, 3)}
    for prim, pos in expect.items():
        assert step(s, ActionId(0, prim))[0].position_of(0) == pos


def test_shapes_north_at_boundary_blocked():
    s = make_state(SHAPES, {0: (0, 3), 1: (4, 4)})
    s2, moved = step(s, ActionId(0, ShapesMove.NORTH))
    assert not moved and s2 == s


def test_shapes_blocked_by_neighbour():
    s = make_state(SHAPES, {0: (2, 2), 1: (1, 2)})
    s2, moved = step(s, ActionId(0, ShapesMove.NORTH))
    assert not moved and s2 == s


def test_shapes_compass():
    s = make_state(SHAPES, {0: (2, 2), 1: (4, 4)})
    expect = {ShapesMove.NORTH: (1, 2), ShapesMove.SOUTH: (3, 2), ShapesMove.EAST: (2, 3), ShapesMove.WEST: (2, 1)}
    for prim, pos in expect.items():
        assert step(s, ActionId(0, prim))[0].position_of(0) == pos


def test_step_errors():
    s = make_state(SHAPES, {0: (2, 2), 1: (4, 4)})
    with pytest.raises(AbsentObject):
        step(s, ActionId(5, 0))
    with pytest.raises(InvalidAction):
        step(s, ActionId(0, 4))


def test_reset():
    scene = Scene([0, 2, 4, 6, 8])
    a = reset(SHAPES, scene, 7)
    assert a == reset(SHAPES, scene, 7)
    assert len(set(a.positions)) == 5
    assert all(0 <= r < 5 and 0 <= c < 5 for r, c in a.positions)
    with pytest.raises(GridTooSmall):
        reset(Library.shapes(30), Scene(range(26)), 0)


def test_feature_encoding():
    spec = SHAPES[0]
    assert spec.shape == Shape.TRIANGLE_UP and spec.color == 3 and spec.orientation == Heading.NORTH
    f = env.object_features(spec, (1, 2), 5, 5)
    expect = np.zeros(feature_dim())
    expect[0] = 1
    expect[10 + 3] = 1
    expect[20 + 0] = 1
    expect[-2:] = [0.2, 0.4]
    np.testing.assert_array_equal(f, expect)


def test_observe_rows_follow_order():
    s = reset(SHAPES, Scene([1, 4, 7]), 3)
    rng = np.random.default_rng(0)
    full = dict(zip(s.scene.object_ids, env.state_features(s)))
    for _ in range(20):
        obs = observe(s, rng)
        assert sorted(obs.slot_order) == [1, 4, 7]
        for row, oid in zip(obs.slot_features, obs.slot_order):
            np.testing.assert_array_equal(row, full[int(oid)])


def test_observe_order_frequency_k2():
    s = reset(SHAPES, Scene([2, 5]), 0)
    rng = np.random.default_rng(1)
    first = [int(observe(s, rng).slot_order[0]) for _ in range(10000)]
    assert abs(np.mean(np.array(first) == 2) - 0.5) <= 0.05


def test_observe_uniform_chi_square():
    # K=3: 6 orders, chi-square 0.999 quantile with 5 dof is 20.5
    s = reset(SHAPES, Scene([0, 3, 9]), 0)
    rng = np.random.default_rng(2)
    counts = {}
    n = 6000
    for _ in range(n):
        key = tuple(observe(s, rng).slot_order)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    chi2 = sum((c - n / 6) ** 2 / (n / 6) for c in counts.values())
    assert chi2 < 20.5


def _pixels(data):
    header = b"P6\n50 50\n255\n"
    assert data.startswith(header)
    return np.frombuffer(data[len(header):], dtype=np.uint8).reshape(50, 50, 3)


def test_render_empty_black():
    img = _pixels(render_ppm(env.empty_state(SHAPES)))
    assert not img.any()


def test_render_square_in_corner_cell():
    sq = [o.id for o in SHAPES.objects if o.shape == Shape.SQUARE][0]
    s = EnvState(SHAPES, Scene([sq]), ((0, 0),), 5, 5)
    img = _pixels(render_ppm(s))
    ys, xs = np.nonzero(img.any(axis=-1))
    assert len(ys) > 0 and ys.max() <= 9 and xs.max() <= 9
    assert (img[ys, xs] == env.PALETTE[SHAPES[sq].color]).all()


def test_render_deterministic_and_grid_guard():
    s = reset(SHAPES, Scene([0, 1, 2, 3, 4]), 5)
    assert render_ppm(s) == render_ppm(s)
    with pytest.raises(UnsupportedGrid):
        render_ppm(reset(SHAPES, Scene([0, 1]), 0, 3, 3))


def test_glyphs_distinct():
    masks = {sh: env._glyph_mask(sh).tobytes() for sh in Shape}
    assert len(set(masks.values())) == len(Shape)


@st.composite
def states_and_actions(draw):
    variant = draw(st.sampled_from([Variant.SHAPES, Variant.RUSHHOUR]))
    lib = Library.make(variant, 10)
    k = draw(st.integers(2, 6))
    ids = draw(st.lists(st.integers(0, 9), min_size=k, max_size=k, unique=True))
    w, h = draw(st.integers(3, 6)), draw(st.integers(3, 6))
    s = reset(lib, Scene(ids), draw(st.integers(0, 2 ** 32)), w, h)
    a = ActionId(draw(st.sampled_from(sorted(ids))), draw(st.integers(0, 3)))
    return s, a


@given(states_and_actions())
def test_step_changes_at_most_one_position(sa):
    s, a = sa
    s2, moved = step(s, a)
    diff = sum(p != q for p, q in zip(s.positions, s2.positions))
    assert diff == (1 if moved else 0)
    assert len(set(s2.positions)) == len(s2.positions)
    assert all(0 <= r < s.grid_h and 0 <= c < s.grid_w for r, c in s2.positions)
    assert step(s, a) == (s2, moved)


@given(states_and_actions())
def test_opposite_moves_are_inverse(sa):
    # forward/backward and left/right undo each other (Shapes: north/south, east/west)
    s, a = sa
    s2, moved = step(s, a)
    if moved:
        inverse = {0: 1, 1: 0, 2: 3, 3: 2}[a.primitive]
        back, moved_back = step(s2, ActionId(a.object_id, inverse))
        assert moved_back and back == s
