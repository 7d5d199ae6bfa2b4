"""The Lindbladian as a sparse matrix over translation-momentum sectors.

The generator in the Heisenberg picture acts on an operator O as

    dO/dt = i[H, O] + sum_j gamma_j (L_j^dag O L_j - {L_j^dag L_j, O} / 2),

and its Schrodinger-picture adjoint (acting on density matrices) flips the
sign of the Hamiltonian part and swaps the jump placement.  For
translation-invariant H and site-uniform noise the generator commutes with
the lattice translation superoperator, so it block-diagonalizes over
momentum sectors of the Pauli-string basis.

Basis vectors of the sector with momentum k = 2 pi n / L are

    b_r = (1/sqrt(d)) sum_{t=0}^{d-1} e^{-ikt} T^t[r],

where r is the lexicographically minimal representative of a translation
orbit of period d (admissible iff e^{ikd} = 1).  These are eigenvectors of
the translation superoperator with phase e^{+ik}; at k = 0 they are
Hermitian and every matrix in this module is real.
"""

from __future__ import annotations

import cmath
import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .pauli import OperatorVector, PauliString, commutes, multiply
from .models import NoiseChannelSpec

_ASSEMBLY_DROP = 1e-14

_DIRECTIONS = ("adjoint", "forward")


@functools.lru_cache(maxsize=8)
def _orbit_tables(length: int):
    """Per-string lookup tables: orbit representative, shift, period.

    For every code c = (x_mask << L) | z_mask: ``rep[c]`` is the minimal code
    in its translation orbit, ``shift[c]`` the s with c = T^s[rep[c]], and
    ``period[c]`` the orbit period (a divisor of L).
    """
    L = length
    n = 4**L
    codes = np.arange(n, dtype=np.uint64)
    mask = np.uint64((1 << L) - 1)
    shift_l = np.uint64(L)
    one = np.uint64(1)
    lm1 = np.uint64(L - 1)

    x = codes >> shift_l
    z = codes & mask
    rep = codes.copy()
    best_t = np.zeros(n, dtype=np.int64)  # t achieving the minimum: rep = T^t[code]
    period = np.full(n, L, dtype=np.int64)
    cx, cz = x, z
    for t in range(1, L):
        cx = ((cx << one) | (cx >> lm1)) & mask
        cz = ((cz << one) | (cz >> lm1)) & mask
        cur = (cx << shift_l) | cz
        back = (cur == codes) & (period == L)
        period[back] = t
        better = cur < rep
        rep[better] = cur[better]
        best_t[better] = t
    # c = T^{-t*}[rep] would be wrong way round: rep = T^{t*}[c], so c = T^{L-t*}[rep]
    shift = (L - best_t) % L
    shift = np.mod(shift, period)
    return rep, shift.astype(np.int64), period


@dataclass
class SectorBasis:
    """Orthonormal momentum-resolved orbit basis of the Pauli-string space."""

    length: int
    momentum_index: int
    reps: np.ndarray  # ascending orbit-representative codes, uint64
    periods: np.ndarray
    index: dict[int, int] = field(repr=False)
    sizes: np.ndarray = field(repr=False)  # support size per representative

    @property
    def k(self) -> float:
        return 2.0 * np.pi * self.momentum_index / self.length

    @property
    def dimension(self) -> int:
        return len(self.reps)

    def rep_string(self, i: int) -> PauliString:
        code = int(self.reps[i])
        return PauliString(self.length, code >> self.length, code & ((1 << self.length) - 1))

    def _phases(self) -> np.ndarray:
        return np.exp(1j * self.k * np.arange(self.length))

    def project(self, op: OperatorVector) -> np.ndarray:
        """Coefficient vector of the orthogonal projection of ``op`` onto the sector."""
        if op.length != self.length:
            raise ValueError("operator length does not match the basis")
        rep_of, shift_of, _ = _orbit_tables(self.length)
        phases = self._phases()
        v = np.zeros(self.dimension, dtype=complex)
        for p, c in op._terms.items():
            code = (p.x_mask << self.length) | p.z_mask
            i = self.index.get(int(rep_of[code]))
            if i is None:
                continue
            v[i] += c * phases[shift_of[code]] / np.sqrt(self.periods[i])
        return v

    def expand(self, vec: np.ndarray) -> OperatorVector:
        """OperatorVector represented by a sector coefficient vector."""
        if len(vec) != self.dimension:
            raise ValueError("vector length does not match the basis dimension")
        L = self.length
        terms: dict[PauliString, complex] = {}
        k = self.k
        for i, coeff in enumerate(vec):
            if coeff == 0:
                continue
            d = int(self.periods[i])
            rep = self.rep_string(i)
            w = complex(coeff) / np.sqrt(d)
            for t in range(d):
                terms[rep.translate(t)] = w * cmath.exp(-1j * k * t)
        return OperatorVector(L, terms)


def build_sector_basis(length: int, momentum_index: int) -> SectorBasis:
    if not 0 <= momentum_index < length:
        raise ValueError("momentum index must satisfy 0 <= n < L")
    rep_of, _, period_of = _orbit_tables(length)
    codes = np.arange(4**length, dtype=np.uint64)
    is_rep = rep_of == codes
    reps = codes[is_rep]
    periods = period_of[is_rep]
    admissible = (momentum_index * periods) % length == 0
    reps = reps[admissible]
    periods = periods[admissible]
    index = {int(c): i for i, c in enumerate(reps)}
    x = reps >> np.uint64(length)
    z = reps & np.uint64((1 << length) - 1)
    support = x | z
    sizes = np.array([int(s).bit_count() for s in support], dtype=np.int64)
    return SectorBasis(length, momentum_index, reps, periods, index, sizes)


# ---------------------------------------------------------------------------
# string-level action of the generator

def _hamiltonian_terms(h: OperatorVector) -> list[tuple[PauliString, float]]:
    terms = []
    for p, c in h._terms.items():
        if abs(c.imag) > 1e-12 * max(1.0, abs(c)):
            raise ValueError("Hamiltonian must be Hermitian with real string coefficients")
        terms.append((p, c.real))
    return terms


def _act_on_string(h_terms, noise: NoiseChannelSpec, p: PauliString, coeff: complex,
                   direction: str, out: dict[PauliString, complex]) -> None:
    """Accumulate the generator action on ``coeff * p`` into ``out``.

    Hamiltonian part: i[H, p] (adjoint) or -i[H, p] (forward), string by
    string; only anticommuting H terms contribute, each as 2*c*phase times
    the product string.  Dissipator: closed per-site forms of the two noise
    channels (cross-checked against the dense oracle in the tests).
    """
    sign = 1.0 if direction == "adjoint" else -1.0
    for t, c in h_terms:
        if commutes(t, p):
            continue
        phase, r = multiply(t, p)
        out[r] = out.get(r, 0j) + sign * 2j * c * phase * coeff

    gamma = noise.gamma
    L = p.length
    if noise.kind == "depolarizing":
        # D[P] = -gamma * S(P) * P, both directions (Hermitian jumps)
        w = -gamma * p.support_size * coeff
        if w != 0:
            out[p] = out.get(p, 0j) + w
        return

    # dephasing+decay: Z_j at rate gamma and S^-_j at rate gamma
    diag = 0.0
    for i in range(L):
        letter = p.site(i)
        if letter == "I":
            if direction == "forward":
                # rho-picture decay sources Z_i out of an identity factor
                q = PauliString(L, p.x_mask, p.z_mask | (1 << i))
                out[q] = out.get(q, 0j) - gamma * coeff
        elif letter == "Z":
            diag += gamma
            if direction == "adjoint":
                # Heisenberg decay: Z -> -gamma (Z + I) on this factor
                q = PauliString(L, p.x_mask, p.z_mask & ~(1 << i))
                out[q] = out.get(q, 0j) - gamma * coeff
        else:  # X or Y: dephasing 2*gamma + decay gamma/2
            diag += 2.5 * gamma
    if diag != 0.0:
        out[p] = out.get(p, 0j) - diag * coeff


def apply_lindbladian(h: OperatorVector, noise: NoiseChannelSpec, op: OperatorVector,
                      direction: str = "adjoint") -> OperatorVector:
    """Matrix-free action of the generator on an operator."""
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    if h.length != op.length or noise.length != op.length:
        raise ValueError("length mismatch between Hamiltonian, noise, and operator")
    h_terms = _hamiltonian_terms(h)
    out: dict[PauliString, complex] = {}
    for p, c in op._terms.items():
        _act_on_string(h_terms, noise, p, c, direction, out)
    return OperatorVector(op.length, out)


# ---------------------------------------------------------------------------
# sector-matrix assembly

@dataclass
class SparseSuperoperator:
    """Generator matrix over one momentum sector, row-compressed."""

    basis: SectorBasis
    matrix: scipy.sparse.csr_matrix = field(repr=False)
    direction: str
    hamiltonian: OperatorVector = field(repr=False)
    noise: NoiseChannelSpec = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @property
    def is_real(self) -> bool:
        return self.matrix.dtype.kind == "f"

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump_coo(self, path) -> None:
        """Write ``row col re im`` lines, deterministically ordered."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            for i in order:
                val = complex(coo.data[i])
                fh.write(f"{coo.row[i]} {coo.col[i]} {val.real!r} {val.imag!r}\n")


def _is_translation_invariant(op: OperatorVector) -> bool:
    return op.translate(1) == op


def assemble(h: OperatorVector, noise: NoiseChannelSpec, basis: SectorBasis,
             direction: str = "adjoint", include_hamiltonian: bool = True,
             include_dissipator: bool = True) -> SparseSuperoperator:
    """Generator matrix over ``basis``, built column by column.

    Each basis representative is pushed through the string-level action and
    the resulting strings are folded back onto orbit representatives:
    a string T^s[r] contributes c * sqrt(d_a / d_b) * e^{iks} to the matrix
    element (b_r | G[b_a]).
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    if h.length != basis.length or noise.length != basis.length:
        raise ValueError("length mismatch between Hamiltonian, noise, and basis")
    if not _is_translation_invariant(h):
        raise ValueError("Hamiltonian must be translation-invariant for sector assembly")

    L = basis.length
    h_terms = _hamiltonian_terms(h) if include_hamiltonian else []
    noise_used = noise if include_dissipator else _NO_NOISE(L)
    rep_of, shift_of, _ = _orbit_tables(L)
    phases = np.exp(1j * basis.k * np.arange(L))
    k_zero = basis.momentum_index == 0
    sqrt_d = np.sqrt(basis.periods.astype(float))

    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for a in range(basis.dimension):
        p = basis.rep_string(a)
        out: dict[PauliString, complex] = {}
        _act_on_string(h_terms, noise_used, p, 1.0 + 0j, direction, out)
        if not out:
            continue
        da = sqrt_d[a]
        col_acc: dict[int, complex] = {}
        for q, c in out.items():
            code = (q.x_mask << L) | q.z_mask
            b = basis.index.get(int(rep_of[code]))
            if b is None:
                continue  # orbit not admissible at this momentum
            w = c * da / sqrt_d[b]
            if not k_zero:
                w *= phases[shift_of[code]]
            col_acc[b] = col_acc.get(b, 0j) + w
        for b, w in col_acc.items():
            if abs(w) > _ASSEMBLY_DROP:
                rows.append(b)
                cols.append(a)
                vals.append(w)

    data = np.array(vals, dtype=complex)
    if k_zero and (len(data) == 0 or np.max(np.abs(data.imag)) < 1e-12):
        data = data.real
    mat = scipy.sparse.coo_matrix((data, (rows, cols)),
                                  shape=(basis.dimension, basis.dimension)).tocsr()
    mat.sum_duplicates()
    return SparseSuperoperator(basis, mat, direction, h, noise)


@functools.lru_cache(maxsize=4)
def _NO_NOISE(length: int) -> NoiseChannelSpec:
    # zero-rate depolarizing stand-in for Hamiltonian-only assembly
    return NoiseChannelSpec("depolarizing", 0.0, length, ())


def hamiltonian_part(h: OperatorVector, basis: SectorBasis,
                     direction: str = "adjoint") -> SparseSuperoperator:
    """Matrix of the coherent part i[H, .] alone (no dissipator)."""
    return assemble(h, _NO_NOISE(basis.length), basis, direction,
                    include_dissipator=False)


def dissipator_part(noise: NoiseChannelSpec, basis: SectorBasis,
                    direction: str = "adjoint") -> SparseSuperoperator:
    """Matrix of the dissipator alone (no Hamiltonian part)."""
    return assemble(OperatorVector.zero(basis.length), noise, basis, direction,
                    include_hamiltonian=False)


# ---------------------------------------------------------------------------
# dense oracle (L <= 3): explicit matrix algebra in the computational basis

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _dense_string(p: PauliString) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for i in range(p.length):
        m = np.kron(m, _PAULI_1Q[p.site(i)])
    return m


def dense_operator(op: OperatorVector) -> np.ndarray:
    m = np.zeros((2**op.length, 2**op.length), dtype=complex)
    for p, c in op._terms.items():
        m += c * _dense_string(p)
    return m


def brute_force_superoperator(h: OperatorVector, noise: NoiseChannelSpec,
                              direction: str = "adjoint",
                              max_length: int = 3) -> np.ndarray:
    """Dense 4^L x 4^L generator in the normalized Pauli basis; testing only.

    Built directly from the jump-operator list with 2^L x 2^L matrix algebra,
    independent of the string-level closed forms used by :func:`assemble`.
    Basis strings are ordered by ascending code (x_mask << L) | z_mask.
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    L = h.length
    if L > max_length:
        raise ValueError(f"brute-force oracle limited to L <= {max_length}")
    dim = 4**L
    hd = dense_operator(h)
    jump_data = [(dense_operator(j), rate) for j, rate in noise.jumps]

    basis_strings = []
    for code in range(dim):
        basis_strings.append(
            _dense_string(PauliString(L, code >> L, code & ((1 << L) - 1))))
    # rows of B give tr(P_b X)/2^L via flattened inner products
    B = np.array([ps.conj().ravel() for ps in basis_strings]) / 2**L

    M = np.zeros((dim, dim), dtype=complex)
    for a, pa in enumerate(basis_strings):
        if direction == "adjoint":
            acted = 1j * (hd @ pa - pa @ hd)
            for jd, rate in jump_data:
                jdag = jd.conj().T
                jj = jdag @ jd
                acted += rate * (jdag @ pa @ jd - 0.5 * (jj @ pa + pa @ jj))
        else:
            acted = -1j * (hd @ pa - pa @ hd)
            for jd, rate in jump_data:
                jdag = jd.conj().T
                jj = jdag @ jd
                acted += rate * (jd @ pa @ jdag - 0.5 * (jj @ pa + pa @ jj))
        M[:, a] = B @ acted.ravel()
    return M
