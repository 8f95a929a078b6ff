"""Node and edge-orbit colorings: the symmetry-breaking objects.

``edge_orbits`` partitions ordered node pairs under the diagonal action of a
permutation group; any permutation preserving the resulting coloring lies in
the 2-closure of the group. The production path runs BFS directly on pairs
using generator images (cost O(r*n^2)); ``lift_generator`` keeps the literal
degree-n^2 lift available so tests can cross-check the two routes, and
``brute_force_edge_orbits`` is the all-elements oracle for small degrees.

Orbit ids are canonical: scanning row-major, the first cell of each orbit
claims the next id. Masked cells (after ``restrict_support``) use the
sentinel id ``num_orbits`` — one past the live ids, never learnable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .permgroup import (
    DEGREE_CAP,
    GeneratorSet,
    Permutation,
    schreier_sims,
)

EDGE_DEGREE_CAP = 64  # n^2 must stay within DEGREE_CAP
BRUTE_FORCE_CAP = 8


@dataclass(frozen=True)
class NodeOrbitVector:
    n: int
    colors: np.ndarray  # shape (n,), canonical ids starting at 0
    num_orbits: int

    def to_csv(self) -> str:
        return ",".join(map(str, self.colors)) + "\n"

    @staticmethod
    def from_csv(text: str) -> "NodeOrbitVector":
        colors = np.array([int(t) for t in text.strip().split(",")], dtype=np.int64)
        return NodeOrbitVector(colors.size, colors, int(colors.max()) + 1)


@dataclass(frozen=True)
class EdgeOrbitMatrix:
    n: int
    colors: np.ndarray  # shape (n, n) int64
    num_orbits: int  # live orbit count; sentinel id == num_orbits if present

    @property
    def sentinel(self) -> int:
        return self.num_orbits

    def live_mask(self) -> np.ndarray:
        return self.colors < self.num_orbits

    def to_csv(self) -> str:
        return "\n".join(",".join(map(str, row)) for row in self.colors) + "\n"

    @staticmethod
    def from_csv(text: str, num_orbits: int | None = None) -> "EdgeOrbitMatrix":
        rows = [r for r in text.strip().split("\n") if r]
        colors = np.array(
            [[int(t) for t in r.split(",")] for r in rows], dtype=np.int64
        )
        if colors.ndim != 2 or colors.shape[0] != colors.shape[1]:
            raise ValueError("edge-orbit CSV must be a square matrix")
        if num_orbits is None:
            num_orbits = int(colors.max()) + 1
        return EdgeOrbitMatrix(colors.shape[0], colors, num_orbits)


@dataclass(frozen=True)
class SupportMask:
    n: int
    keep: np.ndarray  # (n, n) bool

    @staticmethod
    def full(n: int) -> "SupportMask":
        return SupportMask(n, np.ones((n, n), dtype=bool))

    def is_generator_invariant(self, gs: GeneratorSet) -> bool:
        for g in gs.gens:
            img = np.asarray(g.images)
            if not np.array_equal(self.keep[np.ix_(img, img)], self.keep):
                return False
        return True


def _canonicalize(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel ids by first row-major occurrence; returns (colors, count)."""
    flat = raw.ravel()
    remap: dict[int, int] = {}
    out = np.empty_like(flat)
    for idx, value in enumerate(flat.tolist()):
        new = remap.get(value)
        if new is None:
            new = len(remap)
            remap[value] = new
        out[idx] = new
    return out.reshape(raw.shape), len(remap)


def lift_generator(sigma: Permutation) -> Permutation:
    """Diagonal lift to pairs: (a, b) -> (sigma(a), sigma(b)), pair index a*n+b."""
    n = sigma.degree
    if n * n > DEGREE_CAP:
        raise ValueError(f"lift degree {n * n} exceeds cap {DEGREE_CAP}")
    img = np.asarray(sigma.images)
    lifted = (img[:, None] * n + img[None, :]).ravel()
    return Permutation(lifted)


def node_orbits(gs: GeneratorSet) -> NodeOrbitVector:
    n = gs.degree
    raw = -np.ones(n, dtype=np.int64)
    images = [np.asarray(g.images) for g in gs.gens]
    next_id = 0
    for start in range(n):
        if raw[start] >= 0:
            continue
        raw[start] = next_id
        queue = [start]
        while queue:
            a = queue.pop()
            for img in images:
                b = int(img[a])
                if raw[b] < 0:
                    raw[b] = next_id
                    queue.append(b)
        next_id += 1
    return NodeOrbitVector(n, raw, next_id)


def edge_orbits(gs: GeneratorSet) -> EdgeOrbitMatrix:
    """Orbit coloring of ordered pairs via BFS on generator images."""
    n = gs.degree
    if n > EDGE_DEGREE_CAP:
        raise ValueError(f"degree {n} exceeds edge-orbit cap {EDGE_DEGREE_CAP}")
    images = [np.asarray(g.images) for g in gs.gens]
    raw = -np.ones((n, n), dtype=np.int64)
    next_id = 0
    for i in range(n):
        for j in range(n):
            if raw[i, j] >= 0:
                continue
            raw[i, j] = next_id
            queue = [(i, j)]
            while queue:
                a, b = queue.pop()
                for img in images:
                    c, d = int(img[a]), int(img[b])
                    if raw[c, d] < 0:
                        raw[c, d] = next_id
                        queue.append((c, d))
            next_id += 1
    return EdgeOrbitMatrix(n, raw, next_id)


def preserves_colors(p: Permutation, a2: EdgeOrbitMatrix) -> bool:
    """True iff p permutes cells within orbits, i.e. p is in the 2-closure."""
    if p.degree != a2.n:
        raise ValueError(f"degree mismatch: {p.degree} vs {a2.n}")
    img = np.asarray(p.images)
    return bool(np.array_equal(a2.colors[np.ix_(img, img)], a2.colors))


def _all_elements(gs: GeneratorSet) -> np.ndarray:
    """Every group element as an image row, via chain transversal products."""
    chain = schreier_sims(gs)
    elements = np.arange(gs.degree, dtype=np.int64)[None, :]
    # G^(i) = union over coset reps t of t o G^(i+1): build deepest level first
    # and left-multiply, so every (rep choice per level) is a distinct element.
    for lv in reversed(chain.levels):
        reps = [lv.transversal[pt] for pt in lv.orbit]
        elements = np.concatenate([rep[elements] for rep in reps])
    return elements


def brute_force_edge_orbits(gs: GeneratorSet) -> EdgeOrbitMatrix:
    """Oracle: unite (i,j) with (s(i), s(j)) for every group element s."""
    n = gs.degree
    if n > BRUTE_FORCE_CAP:
        raise ValueError(f"brute force capped at degree {BRUTE_FORCE_CAP}")
    elements = _all_elements(gs)
    pair_ids = np.arange(n * n)
    mapped = (elements[:, :, None] * n + elements[:, None, :]).reshape(len(elements), -1)
    edges = np.unique(
        np.stack([np.broadcast_to(pair_ids, mapped.shape).ravel(), mapped.ravel()], axis=1),
        axis=0,
    )
    parent = list(range(n * n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges.tolist():
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    raw = np.array([find(q) for q in range(n * n)], dtype=np.int64).reshape(n, n)
    colors, count = _canonicalize(raw)
    return EdgeOrbitMatrix(n, colors, count)


def restrict_support(a2: EdgeOrbitMatrix, mask: SupportMask) -> EdgeOrbitMatrix:
    """Keep masked-in cells' relative coloring; masked-out cells go sentinel."""
    if mask.n != a2.n:
        raise ValueError(f"size mismatch: {mask.n} vs {a2.n}")
    kept = a2.colors[mask.keep]
    remap: dict[int, int] = {}
    for value in kept.tolist():
        if value not in remap:
            remap[value] = len(remap)
    live = len(remap)
    out = np.full((a2.n, a2.n), live, dtype=np.int64)
    idx = np.nonzero(mask.keep)
    out[idx] = [remap[v] for v in a2.colors[idx].tolist()]
    return EdgeOrbitMatrix(a2.n, out, live)


def combine_colorings(a: EdgeOrbitMatrix, b: EdgeOrbitMatrix) -> EdgeOrbitMatrix:
    """Common refinement: cells equal iff equal in both inputs."""
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n}")
    width = int(b.colors.max()) + 1
    paired = a.colors * width + b.colors
    colors, count = _canonicalize(paired)
    return EdgeOrbitMatrix(a.n, colors, count)
