"""Empirical equivariance checks and symmetry-discovery analysis.

Equivariance of a model whose only symmetry-breaking inputs are orbit-keyed
tables is structural: it holds for any parameters, so the check is a sanity
harness, not a proof. The non-equivariance witness is an existence search;
injectivity of a trained network cannot be certified, so a miss is reported,
never asserted here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .groupcatalog import parse_group, to_generators
from .nn import Model, no_grad, HEAD_EQUIVARIANT
from .orbitclosure import EdgeOrbitMatrix, edge_orbits, preserves_colors
from .permgroup import Permutation, random_element, schreier_sims


@dataclass
class EquivarianceReport:
    group: str
    samples: int
    tol: float
    max_residual: float
    per_perm_worst: dict  # permutation string -> worst residual over inputs
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


@dataclass
class WitnessReport:
    threshold: float
    inputs_tried: int
    results: list  # per permutation: {perm, found, max_residual}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


@dataclass
class DiscoveryReport:
    full_group: str
    mis_group: str
    degenerate: bool  # no mergeable pairs (groups coincide on pairs)
    initial_ratio: float | None
    trained_ratio: float | None
    mergeable_pairs: list
    initial_distances: list
    trained_distances: list

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def distances_csv(matrix) -> str:
        return "\n".join(",".join(repr(float(v)) for v in row) for row in matrix) + "\n"


def _residual(model: Model, a2: EdgeOrbitMatrix, task: str, x: np.ndarray,
              g: Permutation, node_orbits=None) -> float:
    img = np.asarray(g.images)
    gx = np.empty_like(x)
    gx[img] = x
    with no_grad():
        y = model.forward(a2, x, task=task, node_orbits=node_orbits).data
        ygx = model.forward(a2, gx, task=task, node_orbits=node_orbits).data
    if model.cfg.head_mode == HEAD_EQUIVARIANT:
        permuted = np.empty_like(y)
        permuted[img] = y
        return float(np.abs(permuted - ygx).max())
    return float(np.abs(y - ygx).max())


def check_equivariance(
    model: Model,
    a2: EdgeOrbitMatrix,
    group_text: str,
    n_samples: int = 100,
    tol: float = 1e-4,
    task: str | None = None,
    node_orbits=None,
    seed: int = 0,
) -> EquivarianceReport:
    """Sample (g, input) pairs and measure the commutation residual."""
    task = task or next(iter(model.bindings))
    gens = to_generators(parse_group(group_text))
    for g in gens.gens:
        if not preserves_colors(g, a2):
            raise ValueError(
                f"generator {g.to_string()} does not preserve the edge coloring; "
                "the group does not match this symmetry-breaking input"
            )
        if node_orbits is not None:
            img = np.asarray(g.images)
            if not np.array_equal(node_orbits.colors[img], node_orbits.colors):
                raise ValueError("generator does not fix the node coloring")
    chain = schreier_sims(gens)
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = model.bindings[task].vocab
    worst: dict[str, float] = {}
    max_res = 0.0
    for _ in range(n_samples):
        g = random_element(chain, rng)
        x = rng.integers(0, vocab, size=a2.n)
        r = _residual(model, a2, task, x, g, node_orbits)
        key = g.to_string()
        worst[key] = max(worst.get(key, 0.0), r)
        max_res = max(max_res, r)
    return EquivarianceReport(
        group=group_text,
        samples=n_samples,
        tol=tol,
        max_residual=max_res,
        per_perm_worst=worst,
        passed=max_res <= tol,
    )


def witness_non_equivariance(
    model: Model,
    a2: EdgeOrbitMatrix,
    outside_perms: list,
    n_inputs: int = 100,
    threshold: float = 1e-2,
    task: str | None = None,
    node_orbits=None,
    seed: int = 0,
) -> WitnessReport:
    """Search for an input where an outside permutation breaks commutation.

    Every permutation must genuinely fail ``preserves_colors``: an element of
    the 2-closure (e.g. any transposition against alternating-group orbits)
    is rejected here because the model cannot distinguish it from the group.
    """
    task = task or next(iter(model.bindings))
    for p in outside_perms:
        if preserves_colors(p, a2):
            raise ValueError(
                f"{p.to_string()} preserves the edge coloring: it lies in the "
                "2-closure, so no witness can exist"
            )
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = model.bindings[task].vocab
    results = []
    for p in outside_perms:
        best = 0.0
        found = False
        for _ in range(n_inputs):
            x = rng.integers(0, vocab, size=a2.n)
            r = _residual(model, a2, task, x, p, node_orbits)
            best = max(best, r)
            if r > threshold:
                found = True
                break
        results.append(
            {"perm": p.to_string(), "found": found, "max_residual": best}
        )
    return WitnessReport(threshold=threshold, inputs_tried=n_inputs, results=results)


def _refinement_map(mis: EdgeOrbitMatrix, full: EdgeOrbitMatrix) -> np.ndarray:
    """mis-color -> full-color, or error if mis does not refine full."""
    mapping = -np.ones(mis.num_orbits, dtype=np.int64)
    for c_mis, c_full in zip(mis.colors.ravel(), full.colors.ravel()):
        if mapping[c_mis] < 0:
            mapping[c_mis] = c_full
        elif mapping[c_mis] != c_full:
            raise ValueError(
                "the misspecified coloring does not refine the full one"
            )
    return mapping


def _pairwise_distances(table: np.ndarray) -> np.ndarray:
    diff = table[:, None, :] - table[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def analyze_discovery(
    init_model: Model,
    trained_model: Model,
    full_group_text: str,
    mis_group_text: str,
    task: str | None = None,
) -> DiscoveryReport:
    """Did training merge edge embeddings the larger group would identify?

    The merge ratio is the mean distance between embedding rows whose orbit
    pairs fuse under the full group, divided by the mean distance between
    rows that stay distinct. Discovery shows up as the ratio dropping.
    """
    task = task or next(iter(trained_model.bindings))
    full = edge_orbits(to_generators(parse_group(full_group_text)))
    mis = edge_orbits(to_generators(parse_group(mis_group_text)))
    if full.n != mis.n:
        raise ValueError("group degrees differ")
    mapping = _refinement_map(mis, full)

    merge_pairs = []
    separate_pairs = []
    for c1 in range(mis.num_orbits):
        for c2 in range(c1 + 1, mis.num_orbits):
            (merge_pairs if mapping[c1] == mapping[c2] else separate_pairs).append(
                (c1, c2)
            )

    def ratio(table):
        if not merge_pairs:
            return None
        d = _pairwise_distances(table)
        merged = float(np.mean([d[i, j] for i, j in merge_pairs]))
        if not separate_pairs:
            return merged
        return merged / float(np.mean([d[i, j] for i, j in separate_pairs]))

    init_table = np.asarray(init_model.params[f"edge:{task}/table"].data, dtype=np.float64)
    trained_table = np.asarray(
        trained_model.params[f"edge:{task}/table"].data, dtype=np.float64
    )
    if init_table.shape[0] != mis.num_orbits:
        raise ValueError("edge table size does not match the misspecified coloring")
    return DiscoveryReport(
        full_group=full_group_text,
        mis_group=mis_group_text,
        degenerate=not merge_pairs,
        initial_ratio=ratio(init_table),
        trained_ratio=ratio(trained_table),
        mergeable_pairs=[list(p) for p in merge_pairs],
        initial_distances=_pairwise_distances(init_table).tolist(),
        trained_distances=_pairwise_distances(trained_table).tolist(),
    )
