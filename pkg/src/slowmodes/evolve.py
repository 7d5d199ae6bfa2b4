"""Heisenberg-picture time evolution O(t) = e^{G t}[O] with tracked observables.

Two engines share one interface: a sector engine that steps the assembled
sparse generator with the exact (machine-accurate) matrix exponential
action, and a matrix-free engine that integrates the sparse Pauli
coefficients with an adaptive Dormand-Prince RK45 step, pruning coefficients
below ``prune_rel`` times the running norm.  Evolution never truncates
silently: growth past ``max_terms`` aborts with a resource error suggesting
sector projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg

from .errors import NumericalError, TermExplosionError
from .pauli import OperatorVector, PauliString
from .superop import SparseSuperoperator, _act_on_string, _hamiltonian_terms
from .models import NoiseChannelSpec


@dataclass
class EvolutionTrace:
    """Observables of one evolution, recorded on the requested time grid."""

    times: np.ndarray
    norms: np.ndarray
    sizes: np.ndarray
    decay_rates: np.ndarray
    overlaps: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        labels = sorted(self.overlaps)
        with open(path, "w") as fh:
            header = "t,norm,size,decay_rate"
            for lbl in labels:
                header += f",re_{lbl},im_{lbl}"
            fh.write(header + "\n")
            for i, t in enumerate(self.times):
                row = (f"{float(t)!r},{float(self.norms[i])!r},"
                       f"{float(self.sizes[i])!r},{float(self.decay_rates[i])!r}")
                for lbl in labels:
                    val = complex(self.overlaps[lbl][i])
                    row += f",{val.real!r},{val.imag!r}"
                fh.write(row + "\n")


def decay_profile(times: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """-d ln||O|| / dt from the recorded norm series.

    Centered finite differences: fourth order on uniform grids, second order
    (np.gradient) otherwise.  Requires at least 3 points.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if len(times) < 3:
        raise ValueError("decay profile needs at least 3 grid points")
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    logs = np.log(np.maximum(norms, 1e-300))
    h = dt[0]
    uniform = np.allclose(dt, h, rtol=1e-9, atol=0.0)
    if not uniform or len(times) < 5:
        return -np.gradient(logs, times)
    out = np.empty_like(logs)
    # fourth-order central stencil in the interior
    out[2:-2] = (logs[:-4] - 8 * logs[1:-3] + 8 * logs[3:-1] - logs[4:]) / (12 * h)
    out[1] = (logs[2] - logs[0]) / (2 * h)
    out[-2] = (logs[-1] - logs[-3]) / (2 * h)
    out[0] = (-3 * logs[0] + 4 * logs[1] - logs[2]) / (2 * h)
    out[-1] = (3 * logs[-1] - 4 * logs[-2] + logs[-3]) / (2 * h)
    return -out


@dataclass
class VelocityFit:
    v_b: float
    intercept: float
    residual_rms: float
    window: tuple[float, float]
    n_points: int


def fit_butterfly_velocity(trace: EvolutionTrace,
                           window: tuple[float, float]) -> VelocityFit:
    """Least-squares slope of the operator size S(t) over a time window."""
    t0, t1 = window
    if t0 < trace.times[0] - 1e-12 or t1 > trace.times[-1] + 1e-12:
        raise ValueError(f"window {window} is outside the trace "
                         f"[{trace.times[0]}, {trace.times[-1]}]")
    sel = (trace.times >= t0) & (trace.times <= t1)
    if sel.sum() < 2:
        raise ValueError("window contains fewer than 2 trace points")
    t = trace.times[sel]
    s = trace.sizes[sel]
    slope, intercept = np.polyfit(t, s, 1)
    resid = s - (slope * t + intercept)
    return VelocityFit(float(slope), float(intercept),
                       float(np.sqrt(np.mean(resid**2))), (t0, t1), int(sel.sum()))


def propagate(op0: OperatorVector, hamiltonian: OperatorVector | None = None,
              noise: NoiseChannelSpec | None = None,
              t_grid: np.ndarray | list[float] = (),
              tolerance: float = 1e-8,
              superop: SparseSuperoperator | None = None,
              references: dict[str, OperatorVector] | None = None,
              prune_rel: float = 1e-12, max_terms: int = 2_000_000) -> EvolutionTrace:
    """Evolve ``op0`` under the generator, recording norm/size/overlaps.

    Pass an assembled ``superop`` to evolve inside its momentum sector
    (``op0`` must lie in that sector); otherwise the sparse Pauli
    representation is integrated matrix-free with per-step error below
    ``tolerance`` relative to the state norm.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0 and contain at least 2 points")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")

    if superop is not None:
        return _propagate_sector(op0, superop, t_grid, references)
    if hamiltonian is None or noise is None:
        raise ValueError("either a superop or (hamiltonian, noise) must be given")
    return _propagate_matrix_free(op0, hamiltonian, noise, t_grid, tolerance,
                                  references, prune_rel, max_terms)


def _propagate_sector(op0, superop, t_grid, references) -> EvolutionTrace:
    basis = superop.basis
    v = basis.project(op0)
    miss = abs(op0.norm() ** 2 - float(np.vdot(v, v).real))
    if miss > 1e-9 * max(op0.norm() ** 2, 1e-30):
        raise ValueError("initial operator is not contained in the superoperator's "
                         "momentum sector; evolve matrix-free instead")
    if superop.is_real and np.max(np.abs(v.imag)) < 1e-14:
        v = v.real.copy()
    ref_vecs = {}
    for lbl, op in (references or {}).items():
        rv = basis.project(op)
        ref_vecs[lbl] = rv / np.linalg.norm(rv)

    n = len(t_grid)
    norms = np.empty(n)
    sizes = np.empty(n)
    overlaps = {lbl: np.empty(n, dtype=complex) for lbl in ref_vecs}
    sz = basis.sizes.astype(float)

    def record(i, vec):
        nrm = float(np.linalg.norm(vec))
        norms[i] = nrm
        w = np.abs(vec) ** 2
        sizes[i] = float(w @ sz) / nrm**2 if nrm > 0 else 0.0
        for lbl, rv in ref_vecs.items():
            overlaps[lbl][i] = complex(np.vdot(rv, vec)) / nrm if nrm > 0 else 0.0

    record(0, v)
    for i in range(1, n):
        dt = t_grid[i] - t_grid[i - 1]
        v = scipy.sparse.linalg.expm_multiply((superop.matrix * dt).tocsr(), v)
        record(i, v)

    rates = decay_profile(t_grid, norms)
    return EvolutionTrace(t_grid, norms, sizes, rates, overlaps,
                          meta={"engine": "sector", "dimension": basis.dimension,
                                "momentum_index": basis.momentum_index})


# Dormand-Prince RK45 tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


def _combine(parts: list[tuple[float, dict]]) -> dict:
    acc: dict[PauliString, complex] = {}
    for scale, terms in parts:
        if scale == 0.0:
            continue
        for p, c in terms.items():
            acc[p] = acc.get(p, 0j) + scale * c
    return acc


def _dict_norm(terms: dict) -> float:
    return math.sqrt(sum(abs(c) ** 2 for c in terms.values()))


def _propagate_matrix_free(op0, hamiltonian, noise, t_grid, tolerance,
                           references, prune_rel, max_terms) -> EvolutionTrace:
    if hamiltonian.length != op0.length or noise.length != op0.length:
        raise ValueError("length mismatch between operator, Hamiltonian, and noise")
    h_terms = _hamiltonian_terms(hamiltonian)
    refs = {lbl: op.normalized() for lbl, op in (references or {}).items()}

    def deriv(state: dict) -> dict:
        out: dict[PauliString, complex] = {}
        for p, c in state.items():
            _act_on_string(h_terms, noise, p, c, "adjoint", out)
        return out

    state = dict(op0._terms)
    n = len(t_grid)
    norms = np.empty(n)
    sizes = np.empty(n)
    overlaps = {lbl: np.empty(n, dtype=complex) for lbl in refs}

    def record(i, terms):
        ov = OperatorVector(op0.length, terms, prune=False)
        nrm = ov.norm()
        norms[i] = nrm
        sizes[i] = ov.size() if nrm > 0 else 0.0
        for lbl, ref in refs.items():
            overlaps[lbl][i] = ref.inner(ov) / nrm if nrm > 0 else 0.0

    record(0, state)
    h = min(0.1, (t_grid[1] - t_grid[0]) / 4)
    steps = 0
    for i in range(1, n):
        t, t_end = t_grid[i - 1], t_grid[i]
        while t < t_end - 1e-14:
            h = min(h, t_end - t)
            k = [deriv(state)]
            for stage in range(1, 7):
                parts = [(1.0, state)] + [(h * a, k[j]) for j, a in enumerate(_DP_A[stage])]
                k.append(deriv(_combine(parts)))
            y5 = _combine([(1.0, state)] + [(h * b, k[j]) for j, b in enumerate(_DP_B5)])
            err_terms = _combine([(h * (b5 - b4), k[j])
                                  for j, (b5, b4) in enumerate(zip(_DP_B5, _DP_B4))])
            scale = tolerance * max(_dict_norm(state), 1e-30)
            err = _dict_norm(err_terms) / scale
            if err <= 1.0:
                t += h
                cut = prune_rel * _dict_norm(y5)
                state = {p: c for p, c in y5.items() if abs(c) >= cut}
                if len(state) > max_terms:
                    raise TermExplosionError(
                        f"operator grew to {len(state)} terms (cap {max_terms}); "
                        "evolve inside a momentum sector instead")
                steps += 1
            factor = 0.9 * (1.0 / err) ** 0.2 if err > 0 else 5.0
            h *= min(5.0, max(0.2, factor))
            if h < 1e-13 * max(1.0, t_end):
                raise NumericalError("step size underflow; the generator appears "
                                     "too stiff for the matrix-free integrator")
        record(i, state)

    rates = decay_profile(t_grid, norms)
    return EvolutionTrace(t_grid, norms, sizes, rates, overlaps,
                          meta={"engine": "matrix_free", "steps": steps,
                                "tolerance": tolerance})
