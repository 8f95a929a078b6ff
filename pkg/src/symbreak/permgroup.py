"""Exact permutation arithmetic and stabilizer-chain machinery.

Permutations are stored in one-line notation over {0..n-1}. The composition
convention is fixed project-wide as ``compose(a, b)(i) = a(b(i))``: ``b`` acts
first. Stabilizer chains give exact membership tests, group orders (arbitrary
precision), and uniform random sampling without enumerating the group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Covers the n^2 pair lift for sequence length 64; anything larger is a bug
# in the caller, not a workload we support.
DEGREE_CAP = 4096


def _validate_images(images: np.ndarray) -> None:
    n = images.size
    if images.ndim != 1 or n < 1:
        raise ValueError("permutation needs a non-empty 1-d image array")
    if n > DEGREE_CAP:
        raise ValueError(f"degree {n} exceeds cap {DEGREE_CAP}")
    if images.min() < 0 or images.max() >= n:
        raise ValueError("images out of range: not a permutation of 0..n-1")
    if np.bincount(images, minlength=n).max() != 1:
        raise ValueError("repeated image: not a bijection")


class Permutation:
    """Immutable permutation of {0..n-1} in one-line notation."""

    __slots__ = ("images",)

    def __init__(self, images):
        arr = np.array(images, dtype=np.int64)
        _validate_images(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "images", arr)

    @property
    def degree(self) -> int:
        return self.images.size

    def __call__(self, point: int) -> int:
        return int(self.images[point])

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.images, np.arange(self.degree)))

    def inverse(self) -> "Permutation":
        inv = np.empty(self.degree, dtype=np.int64)
        inv[self.images] = np.arange(self.degree)
        return Permutation(inv)

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(
            self.images, other.images
        )

    def __hash__(self) -> int:
        return hash(self.images.tobytes())

    def __repr__(self) -> str:
        return f"Permutation([{', '.join(map(str, self.images))}])"

    def to_string(self) -> str:
        """Serialize as e.g. ``perm(10): 1,0,2,3,4,5,6,7,8,9``."""
        return f"perm({self.degree}): " + ",".join(map(str, self.images))

    @staticmethod
    def from_string(text: str) -> "Permutation":
        head, _, body = text.partition(":")
        head = head.strip()
        if not (head.startswith("perm(") and head.endswith(")")):
            raise ValueError(f"bad permutation header: {head!r}")
        degree = int(head[5:-1])
        images = [int(tok) for tok in body.strip().split(",")]
        if len(images) != degree:
            raise ValueError(
                f"declared degree {degree} but {len(images)} images given"
            )
        return Permutation(images)


def identity(n: int) -> Permutation:
    return Permutation(np.arange(n))


def compose(a: Permutation, b: Permutation) -> Permutation:
    """Product a*b with b applied first: result(i) = a(b(i))."""
    if a.degree != b.degree:
        raise ValueError(f"degree mismatch: {a.degree} vs {b.degree}")
    return Permutation(a.images[b.images])


def inverse(p: Permutation) -> Permutation:
    return p.inverse()


@dataclass(frozen=True)
class GeneratorSet:
    """Generators of a permutation group; an empty list is the trivial group."""

    degree: int
    gens: tuple

    def __init__(self, degree: int, gens):
        if degree < 1 or degree > DEGREE_CAP:
            raise ValueError(f"degree must be in 1..{DEGREE_CAP}, got {degree}")
        gens = tuple(gens)
        for g in gens:
            if g.degree != degree:
                raise ValueError(
                    f"generator degree {g.degree} != group degree {degree}"
                )
        object.__setattr__(self, "degree", degree)
        object.__setattr__(self, "gens", gens)

    def nontrivial_gens(self):
        return [g for g in self.gens if not g.is_identity()]


@dataclass
class _Level:
    """One stabilizer-chain level: a base point with its basic orbit."""

    point: int
    gens: list = field(default_factory=list)  # image arrays fixing earlier base points
    orbit: list = field(default_factory=list)  # BFS order, orbit[0] == point
    transversal: dict = field(default_factory=dict)  # orbit point -> image array


@dataclass
class StrongGenChain:
    """Base and strong generating set for a permutation group."""

    degree: int
    base: list
    levels: list  # list[_Level]
    strong_gens: list  # list[Permutation]

    def order(self) -> int:
        return math.prod(len(lv.orbit) for lv in self.levels)


def _rebuild_level(level: _Level, degree: int) -> None:
    ident = np.arange(degree)
    level.transversal = {level.point: ident}
    level.orbit = [level.point]
    qi = 0
    while qi < len(level.orbit):
        a = level.orbit[qi]
        qi += 1
        ta = level.transversal[a]
        for s in level.gens:
            b = int(s[a])
            if b not in level.transversal:
                # t_b = s o t_a, so t_b(point) = s(t_a(point)) = s(a) = b
                level.transversal[b] = s[ta]
                level.orbit.append(b)


def _strip(p: np.ndarray, levels, start: int):
    """Sift p through levels[start:]; return (residue, stop level index)."""
    for i in range(start, len(levels)):
        lv = levels[i]
        b = int(p[lv.point])
        if b == lv.point:
            continue
        t = lv.transversal.get(b)
        if t is None:
            return p, i
        inv_t = np.empty(t.size, dtype=np.int64)
        inv_t[t] = np.arange(t.size)
        p = inv_t[p]
    return p, len(levels)


def schreier_sims(gs: GeneratorSet) -> StrongGenChain:
    """Deterministic Schreier-Sims: every Schreier generator is sifted.

    Works bottom-up through the base, keeping the invariant that all deeper
    levels are complete for the current strong set. Base points are the
    smallest point moved by the generator forcing the new level, so the chain
    is reproducible for a fixed generator order.
    """
    n = gs.degree
    ident = np.arange(n)
    strong: list[np.ndarray] = []
    seen: set[bytes] = set()
    base: list[int] = []
    levels: list = []

    def add_strong(arr: np.ndarray) -> None:
        key = arr.tobytes()
        if key not in seen:
            seen.add(key)
            strong.append(arr)

    def ensure_base(arr: np.ndarray) -> None:
        # every strong generator must move some base point
        if all(int(arr[b]) == b for b in base):
            base.append(int(np.nonzero(arr != ident)[0][0]))
            levels.append(None)

    for g in gs.nontrivial_gens():
        arr = np.asarray(g.images)
        add_strong(arr)
        ensure_base(arr)

    def rebuild(i: int) -> _Level:
        # level i's orbit closes under ALL strong gens fixing base[0..i-1],
        # including generators discovered at deeper levels
        lv = _Level(base[i])
        lv.gens = [g for g in strong if all(int(g[b]) == b for b in base[:i])]
        _rebuild_level(lv, n)
        levels[i] = lv
        return lv

    i = len(base) - 1
    while i >= 0:
        lv = rebuild(i)
        dirty = False
        for a in lv.orbit:
            ta = lv.transversal[a]
            for s in lv.gens:
                sa = s[ta]  # s o t_a
                tb = lv.transversal[int(s[a])]
                if np.array_equal(sa, tb):
                    continue  # this Schreier generator is the identity
                inv_tb = np.empty(n, dtype=np.int64)
                inv_tb[tb] = ident
                residue, j = _strip(inv_tb[sa], levels, i + 1)
                if not np.array_equal(residue, ident):
                    # residue fixes base[0..j-1]; levels deeper than j keep
                    # their completeness, so resume the sweep at j
                    add_strong(residue)
                    ensure_base(residue)
                    i = j
                    dirty = True
                    break
            if dirty:
                break
        if not dirty:
            i -= 1

    chain = StrongGenChain(
        degree=n,
        base=list(base),
        levels=levels,
        strong_gens=[Permutation(arr) for arr in strong],
    )
    for g in gs.gens:
        if not contains(chain, g):  # pragma: no cover - construction guarantee
            raise AssertionError("input generator failed membership after build")
    return chain


def contains(chain: StrongGenChain, p: Permutation) -> bool:
    """Membership by sifting: true iff p strips to the identity."""
    if p.degree != chain.degree:
        raise ValueError(f"degree mismatch: {p.degree} vs {chain.degree}")
    residue, stop = _strip(np.asarray(p.images), chain.levels, 0)
    return stop == len(chain.levels) and bool(
        np.array_equal(residue, np.arange(chain.degree))
    )


def order(chain: StrongGenChain) -> int:
    """Exact group order: product of basic orbit lengths."""
    return chain.order()


def orbit(gs: GeneratorSet, point: int) -> list:
    """Orbit of a point under the generators, in deterministic BFS order."""
    if not 0 <= point < gs.degree:
        raise ValueError(f"point {point} out of range for degree {gs.degree}")
    seen = {point}
    out = [point]
    qi = 0
    while qi < len(out):
        a = out[qi]
        qi += 1
        for g in gs.gens:
            b = g(a)
            if b not in seen:
                seen.add(b)
                out.append(b)
    return out


def random_element(chain: StrongGenChain, rng: np.random.Generator) -> Permutation:
    """Uniform group element: one uniformly chosen coset rep per level."""
    img = np.arange(chain.degree)
    for lv in chain.levels:
        pick = lv.orbit[int(rng.integers(len(lv.orbit)))]
        img = img[lv.transversal[pick]]
    return Permutation(img)
