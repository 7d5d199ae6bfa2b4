"""Exact Pauli-string algebra on a periodic qubit chain.

A Pauli string on L sites is stored as two L-bit masks: bit i of ``x_mask``
is set iff site i carries X or Y, bit i of ``z_mask`` iff it carries Z or Y.
Products, commutation checks and translations are then O(1) bit operations.
Phases live in coefficients, never inside a string.

Operators are sparse complex combinations of Pauli strings.  All norms and
inner products are the normalized Frobenius ones,

    (A|B) = tr(A^dag B) / 2^L,

in which every Pauli string has unit norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

MAX_SITES = 32

# Coefficients below PRUNE_REL * norm are dropped after every arithmetic op.
PRUNE_REL = 1e-14

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {bits: letter for letter, bits in _LETTER_BITS.items()}
_PHASES = (1 + 0j, 1j, -1 + 0j, -1j)


@dataclass(frozen=True)
class PauliString:
    """A tensor product of I/X/Y/Z on ``length`` sites, phase-free."""

    length: int
    x_mask: int
    z_mask: int

    def __post_init__(self):
        if not 1 <= self.length <= MAX_SITES:
            raise ValueError(f"length must be in [1, {MAX_SITES}], got {self.length}")
        full = (1 << self.length) - 1
        if not (0 <= self.x_mask <= full and 0 <= self.z_mask <= full):
            raise ValueError("mask outside the L-bit range")

    @classmethod
    def identity(cls, length: int) -> "PauliString":
        return cls(length, 0, 0)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Build from a label like ``"ZYI"``; character i is the site-i letter."""
        x = z = 0
        for i, letter in enumerate(label):
            try:
                bx, bz = _LETTER_BITS[letter]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {letter!r} in {label!r}") from None
            x |= bx << i
            z |= bz << i
        return cls(len(label), x, z)

    @property
    def label(self) -> str:
        return "".join(
            _BITS_LETTER[(self.x_mask >> i) & 1, (self.z_mask >> i) & 1]
            for i in range(self.length)
        )

    def site(self, i: int) -> str:
        return _BITS_LETTER[(self.x_mask >> i) & 1, (self.z_mask >> i) & 1]

    @property
    def support_size(self) -> int:
        return (self.x_mask | self.z_mask).bit_count()

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def sort_key(self) -> tuple[int, int]:
        return (self.x_mask, self.z_mask)

    def translate(self, shift: int) -> "PauliString":
        """Cyclically move site i to site (i + shift) mod L."""
        return PauliString(
            self.length,
            _rotate(self.x_mask, shift, self.length),
            _rotate(self.z_mask, shift, self.length),
        )

    def __repr__(self) -> str:
        return f"PauliString({self.label!r})"


def _rotate(mask: int, shift: int, length: int) -> int:
    shift %= length
    if shift == 0:
        return mask
    full = (1 << length) - 1
    return ((mask << shift) | (mask >> (length - shift))) & full


def _check_lengths(a, b) -> None:
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} != {b.length}")


def multiply(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Return (phase, r) with p*q = phase*r and phase in {1, i, -1, -i}.

    The phase exponent follows from writing each string as
    i^{|x & z|} X^x Z^z and counting the Z-past-X transpositions.
    """
    _check_lengths(p, q)
    x = p.x_mask ^ q.x_mask
    z = p.z_mask ^ q.z_mask
    k = (
        (p.x_mask & p.z_mask).bit_count()
        + (q.x_mask & q.z_mask).bit_count()
        - (x & z).bit_count()
        + 2 * (p.z_mask & q.x_mask).bit_count()
    )
    return _PHASES[k % 4], PauliString(p.length, x, z)


def commutes(p: PauliString, q: PauliString) -> bool:
    """True iff [p, q] = 0, via the symplectic form; else p and q anticommute."""
    _check_lengths(p, q)
    return ((p.x_mask & q.z_mask).bit_count() + (p.z_mask & q.x_mask).bit_count()) % 2 == 0


def translate(p: PauliString, shift: int) -> PauliString:
    return p.translate(shift)


class OperatorVector:
    """Sparse expansion of an operator over Pauli strings.

    Immutable by convention: all arithmetic returns new instances, and the
    stored coefficient map is pruned at ``PRUNE_REL`` relative to the norm.
    """

    __slots__ = ("length", "_terms")

    def __init__(self, length: int, terms: dict[PauliString, complex] | None = None,
                 prune: bool = True):
        self.length = length
        tmap = dict(terms) if terms else {}
        if prune and tmap:
            tmap = _pruned(tmap)
        self._terms = tmap

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, length: int) -> "OperatorVector":
        return cls(length)

    @classmethod
    def identity(cls, length: int) -> "OperatorVector":
        return cls(length, {PauliString.identity(length): 1.0 + 0j})

    @classmethod
    def from_string(cls, p: PauliString, coeff: complex = 1.0) -> "OperatorVector":
        return cls(p.length, {p: complex(coeff)})

    @classmethod
    def from_terms(cls, length: int,
                   terms: Iterable[tuple[PauliString, complex]]) -> "OperatorVector":
        acc: dict[PauliString, complex] = {}
        for p, c in terms:
            if p.length != length:
                raise ValueError("term length mismatch")
            acc[p] = acc.get(p, 0j) + complex(c)
        return cls(length, acc)

    @classmethod
    def from_labels(cls, terms: Iterable[tuple[str, complex]]) -> "OperatorVector":
        pairs = [(PauliString.from_label(lbl), c) for lbl, c in terms]
        if not pairs:
            raise ValueError("no terms given; use zero(length) instead")
        return cls.from_terms(pairs[0][0].length, pairs)

    # -- access --------------------------------------------------------

    def terms(self) -> Iterator[tuple[PauliString, complex]]:
        """Iterate terms in the canonical (x_mask, z_mask) order."""
        for p in sorted(self._terms, key=PauliString.sort_key):
            yield p, self._terms[p]

    def coefficient(self, p: PauliString) -> complex:
        return self._terms.get(p, 0j)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorVector):
            return NotImplemented
        return self.length == other.length and self._terms == other._terms

    def __hash__(self):
        return None  # unhashable; dict-backed

    # -- linear structure ----------------------------------------------

    def __add__(self, other: "OperatorVector") -> "OperatorVector":
        _check_lengths(self, other)
        acc = dict(self._terms)
        for p, c in other._terms.items():
            acc[p] = acc.get(p, 0j) + c
        return OperatorVector(self.length, acc)

    def __sub__(self, other: "OperatorVector") -> "OperatorVector":
        _check_lengths(self, other)
        acc = dict(self._terms)
        for p, c in other._terms.items():
            acc[p] = acc.get(p, 0j) - c
        return OperatorVector(self.length, acc)

    def __mul__(self, scalar: complex) -> "OperatorVector":
        s = complex(scalar)
        return OperatorVector(self.length, {p: c * s for p, c in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> "OperatorVector":
        return self * (1.0 / complex(scalar))

    def __neg__(self) -> "OperatorVector":
        return self * -1.0

    def __matmul__(self, other: "OperatorVector") -> "OperatorVector":
        """Operator product, exact Pauli algebra with phases."""
        _check_lengths(self, other)
        acc: dict[PauliString, complex] = {}
        for p, cp in self._terms.items():
            for q, cq in other._terms.items():
                phase, r = multiply(p, q)
                acc[r] = acc.get(r, 0j) + cp * cq * phase
        return OperatorVector(self.length, acc)

    def dagger(self) -> "OperatorVector":
        return OperatorVector(self.length,
                              {p: c.conjugate() for p, c in self._terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol * max(1.0, abs(c)) for c in self._terms.values())

    # -- metric --------------------------------------------------------

    def norm(self) -> float:
        return sum(abs(c) ** 2 for c in self._terms.values()) ** 0.5

    def normalized(self) -> "OperatorVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero operator")
        return self / n

    def inner(self, other: "OperatorVector") -> complex:
        """(self|other) = tr(self^dag other) / 2^L."""
        _check_lengths(self, other)
        a, b = self._terms, other._terms
        if len(b) < len(a):
            return sum(a[p].conjugate() * c for p, c in b.items() if p in a)
        return sum(c.conjugate() * b[p] for p, c in a.items() if p in b)

    def size(self) -> float:
        """Coefficient-weighted average support size; undefined for zero."""
        wsum = 0.0
        total = 0.0
        for p, c in self._terms.items():
            w = abs(c) ** 2
            wsum += w * p.support_size
            total += w
        if total == 0.0:
            raise ValueError("size of the zero operator is undefined")
        return wsum / total

    def size_moment(self, power: int = 2) -> float:
        """<S^power> over the |c_P|^2 weight distribution (normalized)."""
        wsum = 0.0
        total = 0.0
        for p, c in self._terms.items():
            w = abs(c) ** 2
            wsum += w * p.support_size ** power
            total += w
        if total == 0.0:
            raise ValueError("moments of the zero operator are undefined")
        return wsum / total

    def translate(self, shift: int) -> "OperatorVector":
        return OperatorVector(self.length,
                              {p.translate(shift): c for p, c in self._terms.items()},
                              prune=False)

    def prune(self, threshold: float) -> "OperatorVector":
        """Drop coefficients with |c| below an absolute threshold."""
        return OperatorVector(
            self.length,
            {p: c for p, c in self._terms.items() if abs(c) >= threshold},
            prune=False,
        )

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        """One term per line: ``<label> <re> <im>``; round-trips exactly."""
        lines = [f"{p.label} {c.real!r} {c.imag!r}" for p, c in self.terms()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, length: int | None = None) -> "OperatorVector":
        terms = []
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {ln}: expected '<label> <re> <im>', got {raw!r}")
            p = PauliString.from_label(parts[0])
            terms.append((p, complex(float(parts[1]), float(parts[2]))))
        if not terms:
            if length is None:
                raise ValueError("empty operator text and no length given")
            return cls.zero(length)
        if length is not None and terms[0][0].length != length:
            raise ValueError("label length does not match requested length")
        return cls.from_terms(terms[0][0].length, terms)

    def __repr__(self) -> str:
        shown = ", ".join(f"{c:+.4g}*{p.label}" for p, c in list(self.terms())[:4])
        more = "" if len(self) <= 4 else f", ... ({len(self)} terms)"
        return f"OperatorVector({shown}{more})"


def _pruned(tmap: dict[PauliString, complex]) -> dict[PauliString, complex]:
    norm2 = sum(abs(c) ** 2 for c in tmap.values())
    if norm2 == 0.0:
        return {}
    cut = PRUNE_REL * norm2 ** 0.5
    return {p: c for p, c in tmap.items() if abs(c) >= cut}


def commutator(a: OperatorVector, b: OperatorVector) -> OperatorVector:
    """[a, b] = ab - ba, using that Pauli strings either commute or anticommute."""
    _check_lengths(a, b)
    acc: dict[PauliString, complex] = {}
    for p, cp in a._terms.items():
        for q, cq in b._terms.items():
            if commutes(p, q):
                continue
            phase, r = multiply(p, q)
            # anticommuting strings: pq - qp = 2 pq
            acc[r] = acc.get(r, 0j) + 2.0 * cp * cq * phase
    return OperatorVector(a.length, acc)


def inner(a: OperatorVector, b: OperatorVector) -> complex:
    return a.inner(b)


def size(a: OperatorVector) -> float:
    return a.size()
