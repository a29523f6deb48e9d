"""Permutations of small degree and their action on scenes.

Images are stored 0-based. Cycle notation in text uses 1-based labels, so
"(123)(45)" sends label 3 to label 1.
"""
from __future__ import annotations

import itertools
import re
from typing import Iterable, List, Sequence

from .env import Scene
from .errors import DegreeMismatch, DegreeTooLarge, LabelOutOfRange, MalformedCycles, OutOfRange, RepeatedLabel

MAX_ENUM_DEGREE = 8


class Permutation:
    __slots__ = ("image",)

    def __init__(self, image: Iterable[int]):
        img = tuple(int(i) for i in image)
        if sorted(img) != list(range(len(img))):
            raise ValueError(f"not a permutation: {img}")
        self.image = img

    @property
    def n(self) -> int:
        return len(self.image)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(range(n))

    def __call__(self, i: int) -> int:
        return self.image[i]

    def __eq__(self, other):
        return isinstance(other, Permutation) and self.image == other.image

    def __hash__(self):
        return hash(self.image)

    def __repr__(self):
        return f"Permutation({to_cycles(self) or '()'}, n={self.n})"

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for i, j in enumerate(self.image):
            inv[j] = i
        return Permutation(inv)

    def __matmul__(self, other: "Permutation") -> "Permutation":
        return compose(self, other)

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.image))


def compose(p: Permutation, q: Permutation) -> Permutation:
    """(p o q)(i) = p(q(i))."""
    if p.n != q.n:
        raise DegreeMismatch(f"cannot compose degree {p.n} with degree {q.n}")
    return Permutation(p.image[j] for j in q.image)


_CYCLE = re.compile(r"\(([^()]*)\)")


def _labels(body: str) -> List[int]:
    body = body.strip()
    if not body:
        return []
    if "," in body or " " in body:
        parts = [t for t in re.split(r"[,\s]+", body) if t]
    else:
        parts = list(body)
    try:
        return [int(t) for t in parts]
    except ValueError:
        raise MalformedCycles(f"non-numeric label in cycle ({body})") from None


def parse_cycles(text: str, n: int) -> Permutation:
    """Parse disjoint cycles over labels 1..n.

    Labels inside a cycle may be written run together ("(123)") when every
    label is a single digit, or separated by commas/spaces ("(1, 12)").
    """
    text = text.strip()
    rest = _CYCLE.sub("", text)
    if rest.strip():
        raise MalformedCycles(f"unexpected text outside cycles: {rest.strip()!r}")
    image = list(range(n))
    seen = set()
    for body in _CYCLE.findall(text):
        labels = _labels(body)
        for lab in labels:
            if not 1 <= lab <= n:
                raise LabelOutOfRange(f"label {lab} outside 1..{n}")
            if lab in seen:
                raise RepeatedLabel(f"label {lab} appears more than once")
            seen.add(lab)
        for a, b in zip(labels, labels[1:] + labels[:1]):
            image[a - 1] = b - 1
    return Permutation(image)


def to_cycles(p: Permutation) -> str:
    """Cycle notation with 1-based labels, fixed points omitted."""
    seen = set()
    out = []
    sep = "" if p.n < 10 else ","
    for start in range(p.n):
        if start in seen or p.image[start] == start:
            continue
        cyc = []
        i = start
        while i not in seen:
            seen.add(i)
            cyc.append(str(i + 1))
            i = p.image[i]
        out.append("(" + sep.join(cyc) + ")")
    return "".join(out)


def apply_to_scene(p: Permutation, scene: Scene) -> Scene:
    for i in scene.object_ids:
        if not 0 <= i < p.n:
            raise DegreeMismatch(f"object {i} outside permutation degree {p.n}")
    return Scene(p.image[i] for i in scene.object_ids)


def enumerate_group(n: int) -> List[Permutation]:
    """All n! permutations, lexicographic by image."""
    if n > MAX_ENUM_DEGREE:
        raise DegreeTooLarge(f"refusing to enumerate {n}! permutations")
    if n < 0:
        raise OutOfRange("degree must be non-negative")
    return [Permutation(t) for t in itertools.permutations(range(n))]


def binom(n: int, k: int) -> int:
    if not 0 <= k <= n:
        raise OutOfRange(f"binom needs 0 <= k <= n, got n={n}, k={k}")
    k = min(k, n - k)
    num = den = 1
    for j in range(1, k + 1):
        num *= n - k + j
        den *= j
    return num // den
