"""Named group constructors and the group-expression mini-language.

Grammar (whitespace-insensitive)::

    expr := atom ('x' atom)*          products concatenate degrees with offsets
    atom := S(n) | C(n) | A(n) | Rev(n) | I(n) | FixFirst(n) | Intersect(n)
          | Patch(rows, cols, p)
          | Involutions(n; (a b)(c d)..., (e f)..., ...)

Points are 0-indexed. Parse errors carry the byte offset of the offending
token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .permgroup import GeneratorSet, Permutation


class GroupParseError(ValueError):
    """Parse failure with the byte offset where it happened."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Atom:
    name: str  # S, C, A, Rev, I, FixFirst, Intersect, Patch, Involutions
    args: tuple  # ints for simple atoms; (rows, cols, p); (n, involutions)

    @property
    def degree(self) -> int:
        if self.name == "Patch":
            rows, cols, _ = self.args
            return rows * cols
        return self.args[0]


@dataclass(frozen=True)
class GroupExpr:
    """Product of atoms; degrees concatenate left to right."""

    atoms: tuple

    @property
    def degree(self) -> int:
        return sum(a.degree for a in self.atoms)

    def pretty(self) -> str:
        return "x".join(_pretty_atom(a) for a in self.atoms)


def _pretty_atom(a: Atom) -> str:
    if a.name == "Patch":
        return "Patch({},{},{})".format(*a.args)
    if a.name == "Involutions":
        n, invs = a.args
        body = ", ".join(
            "".join(f"({i} {j})" for i, j in inv) for inv in invs
        )
        return f"Involutions({n}; {body})"
    return f"{a.name}({a.args[0]})"


_SIMPLE = {"S", "C", "A", "Rev", "I", "FixFirst", "Intersect"}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch: str):
        self._skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise GroupParseError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def _int(self) -> int:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            raise GroupParseError("expected an integer", start)
        return int(self.text[start : self.pos])

    def _name(self) -> str:
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (
            self.text[self.pos].isalnum() or self.text[self.pos] == "_"
        ):
            self.pos += 1
        if self.pos == start:
            raise GroupParseError("expected a constructor name", start)
        return self.text[start : self.pos]

    def parse(self) -> GroupExpr:
        atoms = [self._atom()]
        while True:
            self._skip_ws()
            if self.pos < len(self.text) and self.text[self.pos] == "x":
                self.pos += 1
                atoms.append(self._atom())
            else:
                break
        self._skip_ws()
        if self.pos != len(self.text):
            raise GroupParseError("trailing input after expression", self.pos)
        return GroupExpr(tuple(atoms))

    def _atom(self) -> Atom:
        name_start = self.pos
        name = self._name()
        if name in _SIMPLE:
            self._expect("(")
            n = self._int()
            self._expect(")")
            return _check_atom(Atom(name, (n,)), name_start)
        if name == "Patch":
            self._expect("(")
            rows = self._int()
            self._expect(",")
            cols = self._int()
            self._expect(",")
            p = self._int()
            self._expect(")")
            return _check_atom(Atom("Patch", (rows, cols, p)), name_start)
        if name == "Involutions":
            self._expect("(")
            n = self._int()
            self._expect(";")
            invs = [self._involution()]
            while self._peek() == ",":
                self._expect(",")
                invs.append(self._involution())
            self._expect(")")
            atom = Atom("Involutions", (n, tuple(invs)))
            return _check_atom(atom, name_start)
        raise GroupParseError(f"unknown constructor {name!r}", name_start)

    def _involution(self) -> tuple:
        pairs = []
        while self._peek() == "(":
            start = self.pos
            self._expect("(")
            i = self._int()
            j = self._int()
            self._expect(")")
            if i == j:
                raise GroupParseError("transposition needs two distinct points", start)
            pairs.append((i, j))
        if not pairs:
            raise GroupParseError("expected at least one (i j) pair", self.pos)
        return tuple(pairs)


def _check_atom(atom: Atom, offset: int) -> Atom:
    name = atom.name
    if name == "Patch":
        rows, cols, p = atom.args
        if rows < 1 or cols < 1 or p < 1:
            raise GroupParseError("Patch sizes must be positive", offset)
        if rows % p or cols % p:
            raise GroupParseError("patch size must divide rows and cols", offset)
        return atom
    if name == "Involutions":
        n, invs = atom.args
        if n < 1:
            raise GroupParseError("degree must be positive", offset)
        seen = set()
        for inv in invs:
            for i, j in inv:
                if i >= n or j >= n:
                    raise GroupParseError(f"point out of range for degree {n}", offset)
                if i in seen or j in seen:
                    raise GroupParseError("overlapping involution pairs", offset)
                seen.update((i, j))
        return atom
    n = atom.args[0]
    if n < 1:
        raise GroupParseError("degree must be positive", offset)
    if name == "Intersect" and n % 2:
        raise GroupParseError("Intersect needs an even degree", offset)
    return atom


def parse_group(text: str) -> GroupExpr:
    return _Parser(text).parse()


def _adjacent_transpositions(n: int):
    gens = []
    for i in range(n - 1):
        img = np.arange(n)
        img[[i, i + 1]] = img[[i + 1, i]]
        gens.append(img)
    return gens


def _atom_generators(atom: Atom):
    """Generator image-arrays for one atom, in local coordinates 0..deg-1."""
    name = atom.name
    if name == "S":
        n = atom.args[0]
        return _adjacent_transpositions(n)
    if name == "C":
        n = atom.args[0]
        if n == 1:
            return []
        return [np.roll(np.arange(n), -1)]  # i -> i+1 mod n
    if name == "A":
        n = atom.args[0]
        gens = []
        for i in range(n - 2):
            img = np.arange(n)
            img[[i, i + 1, i + 2]] = img[[i + 1, i + 2, i]]
            gens.append(img)
        return gens
    if name == "Rev":
        n = atom.args[0]
        if n == 1:
            return []
        return [np.arange(n)[::-1].copy()]
    if name == "I":
        return []
    if name == "FixFirst":
        n = atom.args[0]
        gens = []
        for i in range(1, n - 1):
            img = np.arange(n)
            img[[i, i + 1]] = img[[i + 1, i]]
            gens.append(img)
        return gens
    if name == "Intersect":
        n = atom.args[0]
        half = n // 2
        gens = []
        for lo in (0, half):
            for i in range(lo, lo + half - 1):
                img = np.arange(n)
                img[[i, i + 1]] = img[[i + 1, i]]
                gens.append(img)
        if half >= 1:
            swap = np.concatenate([np.arange(half, n), np.arange(half)])
            gens.append(swap)
        return gens
    if name == "Involutions":
        n, invs = atom.args
        gens = []
        for inv in invs:
            img = np.arange(n)
            for i, j in inv:
                img[[i, j]] = img[[j, i]]
            gens.append(img)
        return gens
    if name == "Patch":
        rows, cols, p = atom.args
        n = rows * cols
        gens = []
        for pr in range(0, rows, p):
            for pc in range(0, cols, p):
                cells = [
                    (pr + r) * cols + (pc + c)
                    for r in range(p)
                    for c in range(p)
                ]
                for a, b in zip(cells, cells[1:]):
                    img = np.arange(n)
                    img[[a, b]] = img[[b, a]]
                    gens.append(img)
        return gens
    raise ValueError(f"unknown atom {name!r}")  # pragma: no cover


def to_generators(expr: GroupExpr) -> GeneratorSet:
    """Concrete generators; product atoms act on disjoint index blocks."""
    degree = expr.degree
    gens = []
    offset = 0
    for atom in expr.atoms:
        for img in _atom_generators(atom):
            full = np.arange(degree)
            full[offset : offset + atom.degree] = img + offset
            gens.append(Permutation(full))
        offset += atom.degree
    return GeneratorSet(degree, gens)
