"""Lindbladian spectra: dense diagonalization, slow-mode extraction, validation.

The slow-mode solver works on the propagator P = exp(G * tau): the magnitude
|exp(lambda * tau)| = exp(Re lambda * tau) is monotone in Re lambda, so the
largest-magnitude eigenvalues of P are exactly the slowest-decaying modes of
G, regardless of their imaginary parts.  With tau = 1/(gamma * L) the bulk of
the spectrum is damped by ~exp(-S_bulk / L) per application while slow modes
stay near unit magnitude.  Eigenvalues are recovered by a Rayleigh-Ritz
projection of G itself onto the converged propagator subspace, which also
resolves the log-branch ambiguity of lambda = log(mu) / tau.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import DimensionCapError
from .pauli import OperatorVector
from .superop import SparseSuperoperator, dissipator_part, hamiltonian_part

DEFAULT_DENSE_CAP = 6000
DEGENERACY_ATOL = 1e-9
_ARNOLDI_SEED = 987654321


@dataclass
class SpectrumResult:
    """Eigenvalues and eigen-operators sorted by ascending decay rate |Re lambda|."""

    superop: SparseSuperoperator = field(repr=False)
    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)  # (dim, n), unit columns
    sizes: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    solver: dict

    @property
    def basis(self):
        return self.superop.basis

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def operator(self, i: int) -> OperatorVector:
        return self.basis.expand(self.vectors[:, i])

    def multiplets(self, atol: float = DEGENERACY_ATOL) -> list[list[int]]:
        """Group indices whose eigenvalues coincide within ``atol``."""
        groups: list[list[int]] = []
        for i, lam in enumerate(self.eigenvalues):
            for g in groups:
                if abs(self.eigenvalues[g[0]] - lam) <= atol:
                    g.append(i)
                    break
            else:
                groups.append([i])
        return groups

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,re_lambda,im_lambda,size,residual,converged\n")
            for i, lam in enumerate(self.eigenvalues):
                fh.write(f"{i},{float(lam.real)!r},{float(lam.imag)!r},"
                         f"{float(self.sizes[i])!r},{float(self.residuals[i])!r},"
                         f"{int(self.converged[i])}\n")


def _sort_order(eigenvalues: np.ndarray) -> np.ndarray:
    # ascending |Re|, ties by |Im|, then signed Im, then original index
    n = len(eigenvalues)
    return np.lexsort((np.arange(n), eigenvalues.imag,
                       np.abs(eigenvalues.imag), np.abs(eigenvalues.real)))


def _canonical_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col)))
        pivot = col[i]
        if pivot != 0:
            out[:, j] = col * (abs(pivot) / pivot)
    return out


def _finalize(superop, eigenvalues, vectors, solver, converged=None) -> SpectrumResult:
    order = _sort_order(eigenvalues)
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    norms = np.linalg.norm(vectors, axis=0)
    vectors = vectors / norms
    vectors = _canonical_phases(vectors)
    # real-eigenvalue modes of a real generator are Hermitian: drop stray
    # imaginary dust so the expanded operator has real string coefficients
    if superop.is_real:
        for j in np.flatnonzero(np.abs(eigenvalues.imag) < 1e-10):
            col = vectors[:, j]
            if np.max(np.abs(col.imag)) < 1e-8:
                vectors[:, j] = col.real / np.linalg.norm(col.real)
    sizes = (np.abs(vectors) ** 2 * superop.basis.sizes[:, None]).sum(axis=0).real
    resid = np.linalg.norm(superop.matrix @ vectors - vectors * eigenvalues, axis=0)
    if converged is None:
        converged = np.ones(len(eigenvalues), dtype=bool)
    else:
        converged = converged[order]
    return SpectrumResult(superop, eigenvalues, vectors, sizes, resid, converged, solver)


def dense_spectrum(superop: SparseSuperoperator,
                   dense_cap: int = DEFAULT_DENSE_CAP) -> SpectrumResult:
    """Full non-Hermitian eigendecomposition of one sector."""
    dim = superop.dimension
    if dim > dense_cap:
        raise DimensionCapError(
            f"sector dimension {dim} exceeds the dense cap {dense_cap}; "
            "use slow_modes for the low-lying part of the spectrum")
    lam, vecs = scipy.linalg.eig(superop.to_dense())
    return _finalize(superop, lam, vecs.astype(complex),
                     {"method": "dense", "dimension": dim})


def slow_modes(superop: SparseSuperoperator, count: int, tau: float | None = None,
               residual_tol: float = 1e-8, arpack_tol: float = 1e-9,
               max_restarts: int = 60, extra: int | None = None,
               ncv: int | None = None) -> SpectrumResult:
    """The ``count`` eigenpairs of smallest |Re lambda| via propagator Arnoldi.

    Non-convergence within the restart cap yields a flagged partial result
    (``converged`` is per-mode); nothing is silently truncated.
    """
    dim = superop.dimension
    if count < 1:
        raise ValueError("count must be positive")
    if count > dim // 4:
        raise ValueError(f"count={count} is not small against dimension {dim}; "
                         "use dense_spectrum")
    gamma = superop.noise.gamma
    if tau is None:
        if gamma <= 0:
            raise ValueError("tau must be given explicitly for noiseless generators")
        tau = 1.0 / (gamma * superop.basis.length)

    mat = superop.matrix
    prop = (mat * tau).tocsr()
    applications = 0

    def matvec(v):
        nonlocal applications
        applications += 1
        return scipy.sparse.linalg.expm_multiply(prop, v)

    op = scipy.sparse.linalg.LinearOperator(shape=mat.shape, matvec=matvec,
                                            dtype=mat.dtype)
    k = count + (extra if extra is not None else max(4, count // 2))
    k = min(k, dim - 2)
    if ncv is None:
        ncv = min(dim, max(4 * k, k + 24))
    rng = np.random.default_rng(_ARNOLDI_SEED)
    v0 = rng.standard_normal(dim)
    if mat.dtype.kind == "c":
        v0 = v0 + 1j * rng.standard_normal(dim)

    arpack_ok = True
    try:
        _, vecs = scipy.sparse.linalg.eigs(op, k=k, which="LM", v0=v0, ncv=ncv,
                                           tol=arpack_tol, maxiter=max_restarts)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        arpack_ok = False
        vecs = exc.eigenvectors
        if vecs is None or vecs.shape[1] == 0:
            raise

    # Rayleigh-Ritz on the generator itself over the converged subspace
    if mat.dtype.kind == "f":
        span = np.hstack([vecs.real, vecs.imag])
    else:
        span = vecs
    basis = scipy.linalg.orth(span, rcond=1e-10)
    small = basis.conj().T @ (mat @ basis)
    lam_s, w_s = scipy.linalg.eig(small)
    ritz = basis @ w_s
    ritz /= np.linalg.norm(ritz, axis=0)
    resid = np.linalg.norm(mat @ ritz - ritz * lam_s, axis=0)

    # Rank strictly by |Re lambda| (the solver contract) over pairs that are
    # plausibly eigenpairs at all; marginal modes stay in place but are
    # flagged unconverged rather than displaced.
    junk_tol = max(1e4 * residual_tol, 1e-4)
    order = _sort_order(lam_s)
    plausible = [i for i in order if resid[i] <= junk_tol]
    if len(plausible) < count:
        leftovers = sorted((i for i in order if resid[i] > junk_tol),
                           key=lambda i: resid[i])
        plausible = plausible + leftovers
    keep = np.array(plausible[:count])
    lam = lam_s[keep]
    vectors = ritz[:, keep]
    conv = resid[keep] <= residual_tol
    if not conv.all() or not arpack_ok:
        warnings.warn(
            f"slow_modes returned a partial result: {int(conv.sum())}/{count} modes "
            f"below residual tol {residual_tol:g}", stacklevel=2)
    solver = {"method": "propagator_arnoldi", "tau": tau, "k": k, "ncv": ncv,
              "applications": applications, "arpack_converged": arpack_ok,
              "residual_tol": residual_tol, "dimension": dim}
    return _finalize(superop, lam, vectors.astype(complex), solver, converged=conv)


def match_spectra(a: np.ndarray, b: np.ndarray) -> float:
    """Greatest nearest-neighbor distance in a greedy multiset matching.

    Robust against reorderings from near-degenerate real parts, unlike a
    lexicographic sort-and-compare.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex).copy()
    if a.shape != b.shape:
        raise ValueError(f"spectra have different sizes: {a.shape} vs {b.shape}")
    alive = np.ones(len(b), dtype=bool)
    worst = 0.0
    for lam in a:
        dist = np.abs(b - lam)
        dist[~alive] = np.inf
        j = int(np.argmin(dist))
        worst = max(worst, float(dist[j]))
        alive[j] = False
    return worst


@dataclass
class SpectrumDiagnostics:
    """Outcome of the spectral identity checks; see ``validate_spectrum``."""

    conjugate_pairing_ok: bool
    pairing_max_dist: float
    dissipativity_ok: bool
    max_re_lambda: float
    trace_identity_ok: bool
    trace_identity_max_err: float
    trace_identity_offenders: list[int]
    variance_identity_ok: bool
    variance_identity_max_err: float
    variance_identity_offenders: list[int]
    hermitian_ok: bool
    hermitian_offenders: list[int]

    def all_ok(self) -> bool:
        return (self.conjugate_pairing_ok and self.dissipativity_ok
                and self.trace_identity_ok and self.variance_identity_ok
                and self.hermitian_ok)


def validate_spectrum(result: SpectrumResult, pairing_tol: float = 1e-8,
                      trace_tol: float = 1e-8, variance_rtol: float = 1e-6,
                      real_axis_tol: float = 1e-10) -> SpectrumDiagnostics:
    """Check the general eigenoperator identities on a computed spectrum.

    (i) the spectrum is closed under complex conjugation; (ii) real-eigenvalue
    modes V are Hermitian and satisfy lambda = (V|D[V]); (iii) for
    depolarizing noise, ||[H, V]||^2 = gamma^2 (<S^2>_V - <S>_V^2); (iv) all
    decay rates are nonnegative: Re lambda <= tolerance.
    """
    sup = result.superop
    lam = result.eigenvalues

    # (i) conjugate pairing: greedily match each eigenvalue to the nearest
    # remaining candidate for its conjugate
    pairing_max = 0.0
    alive = np.ones(len(lam), dtype=bool)
    for i in range(len(lam)):
        if not alive[i]:
            continue
        dist = np.abs(lam - lam[i].conjugate())
        dist[~alive] = np.inf
        j = int(np.argmin(dist))
        pairing_max = max(pairing_max, float(dist[j]))
        alive[i] = False
        alive[j] = False
    pairing_ok = pairing_max <= pairing_tol

    # (iv) dissipativity
    max_re = float(lam.real.max()) if len(lam) else 0.0
    dissipativity_ok = max_re <= real_axis_tol

    real_modes = np.flatnonzero(np.abs(lam.imag) < real_axis_tol)

    # (ii) lambda = (V|D[V]) for real-eigenvalue modes
    d_mat = dissipator_part(sup.noise, sup.basis, sup.direction).matrix
    trace_err = 0.0
    trace_off: list[int] = []
    for i in real_modes:
        v = result.vectors[:, i]
        expected = np.vdot(v, d_mat @ v)
        err = abs(expected - lam[i])
        if err > trace_tol:
            trace_off.append(int(i))
        trace_err = max(trace_err, err)

    # Hermiticity of real-eigenvalue modes (k = 0, real generator)
    herm_off: list[int] = []
    if sup.is_real and sup.basis.momentum_index == 0:
        for i in real_modes:
            if np.max(np.abs(result.vectors[:, i].imag)) > 1e-8:
                herm_off.append(int(i))

    # (iii) variance identity, depolarizing only
    var_err = 0.0
    var_off: list[int] = []
    if sup.noise.kind == "depolarizing":
        h_mat = hamiltonian_part(sup.hamiltonian, sup.basis, sup.direction).matrix
        gamma = sup.noise.gamma
        s = sup.basis.sizes.astype(float)
        for i in real_modes:
            v = result.vectors[:, i]
            w = np.abs(v) ** 2
            mean_s = float(w @ s)
            mean_s2 = float(w @ s**2)
            lhs = np.linalg.norm(h_mat @ v) ** 2  # ||i[H,V]||^2 = ||[H,V]||^2
            rhs = gamma**2 * (mean_s2 - mean_s**2)
            scale = max(lhs, rhs, gamma**2)
            err = abs(lhs - rhs) / scale
            if err > variance_rtol:
                var_off.append(int(i))
            var_err = max(var_err, err)

    return SpectrumDiagnostics(
        conjugate_pairing_ok=pairing_ok,
        pairing_max_dist=pairing_max,
        dissipativity_ok=dissipativity_ok,
        max_re_lambda=max_re,
        trace_identity_ok=not trace_off,
        trace_identity_max_err=trace_err,
        trace_identity_offenders=trace_off,
        variance_identity_ok=not var_off,
        variance_identity_max_err=var_err,
        variance_identity_offenders=var_off,
        hermitian_ok=not herm_off,
        hermitian_offenders=herm_off,
    )
