"""Synthetic sequence tasks with equivariant and invariant labels.

Eight tasks over integer token sequences. Equivariant labels are per-position
bits, invariant labels are integer scalars (booleans encoded 0/1 so a single
regression head covers them). Generation is reproducible: record i draws from
an RNG stream keyed by (seed, i), so regenerating any prefix is bit-identical.

Tie handling for the cyclic window tasks marks the union of all maximising
windows. Marking a single canonical window cannot commute with cyclic shifts
(a rotation-invariant input admits no equivariant choice of one window), and
label equivariance is exact here by contract; the union rule is deterministic
and reproduces the published single-max examples unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groupcatalog import GroupExpr, parse_group
from .permgroup import Permutation

EQUIVARIANT = "eq"
INVARIANT = "inv"

UNIT_RECORDS = {EQUIVARIANT: 2500, INVARIANT: 8000}

DEFAULT_WINDOW = 3

_EQ_CAPABLE = {
    "intersect",
    "symmetricdifference",
    "palindrome",
    "monotonerun",
    "cyclicsum",
    "cyclicproduct",
}
_INV_ONLY = {"detectcapital", "longestpalindrome", "signofpermutation"}
TASK_NAMES = sorted(_EQ_CAPABLE | _INV_ONLY)

_WINDOWED = {"palindrome", "monotonerun", "cyclicsum", "cyclicproduct"}


def default_group_text(name: str, n: int, mode: str) -> str:
    """Target symmetry group per task; the invariant one-sided difference is
    only invariant within halves, so its inv-mode group drops the swap."""
    if name in ("intersect", "symmetricdifference"):
        if name == "symmetricdifference" and mode == INVARIANT:
            half = n // 2
            return f"S({half})xS({half})"
        return f"Intersect({n})"
    if name in ("palindrome", "monotonerun"):
        return f"Rev({n})"
    if name in ("cyclicsum", "cyclicproduct"):
        return f"C({n})"
    if name == "detectcapital":
        return f"FixFirst({n})"
    if name == "longestpalindrome":
        return f"S({n})"
    if name == "signofpermutation":
        return f"A({n})"
    raise ValueError(f"unknown task {name!r}")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    n: int
    vocab: int
    mode: str  # EQUIVARIANT or INVARIANT
    window: int = DEFAULT_WINDOW
    group: GroupExpr = None

    def __post_init__(self):
        if self.name not in TASK_NAMES:
            raise ValueError(f"unknown task {self.name!r}; valid: {TASK_NAMES}")
        if self.mode not in (EQUIVARIANT, INVARIANT):
            raise ValueError(f"mode must be {EQUIVARIANT!r} or {INVARIANT!r}")
        if self.mode == EQUIVARIANT and self.name in _INV_ONLY:
            raise ValueError(f"{self.name} has no equivariant labels")
        if self.n < 1 or self.vocab < 1:
            raise ValueError("n and vocab must be positive")
        if self.name in ("intersect", "symmetricdifference") and self.n % 2:
            raise ValueError(f"{self.name} needs an even sequence length")
        if self.name == "detectcapital" and self.vocab % 2:
            raise ValueError("detectcapital needs an even vocab (lower/upper halves)")
        if self.name == "signofpermutation" and self.vocab != self.n:
            raise ValueError("signofpermutation inputs are permutations: vocab == n")
        if self.name in _WINDOWED and self.window < 1:
            raise ValueError("window must be positive")
        if self.group is None:
            object.__setattr__(
                self, "group", parse_group(default_group_text(self.name, self.n, self.mode))
            )
        if self.group.degree != self.n:
            raise ValueError(
                f"group degree {self.group.degree} != sequence length {self.n}"
            )


@dataclass(frozen=True)
class Record:
    input: tuple  # n token indices
    eq: tuple | None  # n bits, or None for invariant-only records
    inv: int | None


@dataclass(frozen=True)
class Dataset:
    spec: TaskSpec
    seed: int
    records: tuple


def _cover(n: int, starts, length: int, cyclic: bool) -> np.ndarray:
    bits = np.zeros(n, dtype=np.int64)
    for s in starts:
        for t in range(length):
            bits[(s + t) % n if cyclic else s + t] = 1
    return bits


def label(spec: TaskSpec, tokens) -> tuple:
    """(eq bits or None, invariant scalar) for one input sequence."""
    x = [int(t) for t in tokens]
    n = spec.n
    if len(x) != n:
        raise ValueError(f"input length {len(x)} != {n}")
    if any(t < 0 or t >= spec.vocab for t in x):
        raise ValueError("token out of vocab range")
    name, k = spec.name, spec.window

    if name in ("intersect", "symmetricdifference"):
        half = n // 2
        a, b = x[:half], x[half:]
        sa, sb = set(a), set(b)
        if name == "intersect":
            eq = [int(t in sb) for t in a] + [int(t in sa) for t in b]
            inv = len(sa & sb)
        else:
            eq = [int(t not in sb) for t in a] + [int(t not in sa) for t in b]
            inv = len(sa - sb)
        return (tuple(eq) if spec.mode == EQUIVARIANT else None, inv)

    if name in ("palindrome", "monotonerun"):
        starts = []
        for s in range(n - k + 1):
            w = x[s : s + k]
            if name == "palindrome":
                hit = w == w[::-1]
            else:
                hit = all(p < q for p, q in zip(w, w[1:])) or all(
                    p > q for p, q in zip(w, w[1:])
                )
            if hit:
                starts.append(s)
        eq = _cover(n, starts, k, cyclic=False)
        inv = int(bool(starts))
        return (tuple(eq.tolist()) if spec.mode == EQUIVARIANT else None, inv)

    if name in ("cyclicsum", "cyclicproduct"):
        scores = []
        for s in range(n):
            w = [x[(s + t) % n] for t in range(k)]
            if name == "cyclicsum":
                scores.append(sum(w))
            else:
                p = 1
                for t in w:
                    p *= t
                scores.append(p)
        best = max(scores)
        starts = [s for s in range(n) if scores[s] == best]
        eq = _cover(n, starts, k, cyclic=True)
        return (tuple(eq.tolist()) if spec.mode == EQUIVARIANT else None, int(best))

    if name == "detectcapital":
        v = spec.vocab // 2
        upper = [t >= v for t in x]
        proper = all(upper) or not any(upper) or (upper[0] and not any(upper[1:]))
        return None, int(proper)

    if name == "longestpalindrome":
        counts = np.bincount(x, minlength=spec.vocab)
        pairs = int((counts // 2).sum()) * 2
        return None, pairs + int((counts % 2).any())

    if name == "signofpermutation":
        if sorted(x) != list(range(n)):
            raise ValueError("input must be a permutation of 0..n-1")
        inversions = sum(
            1 for i in range(n) for j in range(i + 1, n) if x[i] > x[j]
        )
        return None, inversions % 2

    raise ValueError(f"unknown task {name!r}")  # pragma: no cover


def _record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _sample_input(spec: TaskSpec, rng: np.random.Generator) -> list:
    if spec.name == "signofpermutation":
        return rng.permutation(spec.n).tolist()
    if spec.name == "detectcapital":
        # 50/50 mix of properly capitalized strings and random-case negatives
        v = spec.vocab // 2
        if rng.random() < 0.5:
            letters = rng.integers(0, v, size=spec.n)
            pattern = int(rng.integers(3))
            if pattern == 0:  # all upper
                letters = letters + v
            elif pattern == 1:  # first upper, rest lower
                letters[0] += v
            return letters.tolist()
        return rng.integers(0, spec.vocab, size=spec.n).tolist()
    return rng.integers(0, spec.vocab, size=spec.n).tolist()


def generate(spec: TaskSpec, count: int, seed: int) -> Dataset:
    if count <= 0:
        raise ValueError("count must be positive")
    records = []
    for i in range(count):
        tokens = _sample_input(spec, _record_rng(seed, i))
        eq, inv = label(spec, tokens)
        if spec.mode == EQUIVARIANT:
            records.append(Record(tuple(tokens), eq, None))
        else:
            records.append(Record(tuple(tokens), None, inv))
    return Dataset(spec, seed, tuple(records))


def apply_group_action(spec: TaskSpec, g: Permutation, record: Record) -> Record:
    """Permute positions: output[g(i)] = input[i]; labels ride along."""
    if g.degree != spec.n:
        raise ValueError(f"degree mismatch: {g.degree} vs {spec.n}")
    img = np.asarray(g.images)
    moved = np.empty(spec.n, dtype=np.int64)
    moved[img] = np.asarray(record.input)
    eq = None
    if record.eq is not None:
        bits = np.empty(spec.n, dtype=np.int64)
        bits[img] = np.asarray(record.eq)
        eq = tuple(bits.tolist())
    return Record(tuple(moved.tolist()), eq, record.inv)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_to_text(ds))


def dataset_to_text(ds: Dataset) -> str:
    spec = ds.spec
    header = (
        f"task={spec.name} n={spec.n} vocab={spec.vocab} "
        f"count={len(ds.records)} seed={ds.seed} mode={spec.mode}"
    )
    if spec.name in _WINDOWED and spec.window != DEFAULT_WINDOW:
        header += f" k={spec.window}"
    lines = [header]
    for r in ds.records:
        eq = " ".join(map(str, r.eq)) if r.eq is not None else "-"
        inv = str(r.inv) if r.inv is not None else "-"
        lines.append(" ".join(map(str, r.input)) + "\t" + eq + "\t" + inv)
    return "\n".join(lines) + "\n"


def load_dataset(path=None, text=None) -> Dataset:
    if text is None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.rstrip("\n").split("\n")
    fields = dict(tok.split("=", 1) for tok in lines[0].split())
    spec = TaskSpec(
        name=fields["task"],
        n=int(fields["n"]),
        vocab=int(fields["vocab"]),
        mode=fields["mode"],
        window=int(fields.get("k", DEFAULT_WINDOW)),
    )
    count = int(fields["count"])
    records = []
    for line in lines[1:]:
        raw_in, raw_eq, raw_inv = line.split("\t")
        records.append(
            Record(
                tuple(int(t) for t in raw_in.split()),
                None if raw_eq == "-" else tuple(int(t) for t in raw_eq.split()),
                None if raw_inv == "-" else int(raw_inv),
            )
        )
    if len(records) != count:
        raise ValueError(f"header count {count} != {len(records)} records")
    return Dataset(spec, int(fields["seed"]), tuple(records))
