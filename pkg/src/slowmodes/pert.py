"""Perturbation theory for candidate conserved operators.

A normalized candidate Q is split along and against itself under both
pictures of the generator,

    G_H[Q] = -gamma_Q Q + eps1 J1,      G_S[Q] = -gamma_Q Q + eps2 J2,

with J1, J2 normalized and orthogonal to Q.  The module then evaluates the
integrals controlling whether Q survives as an eigenoperator: the growth
integral N(t) = int_0^t ||J1(tau)|| e^{gamma tau} dtau, whose limit defines
the effective gap E_g^< = 1/N(inf); the kernel (J2|J1(t)), whose decay scale
defines E_g^>; the dressed decay rate gamma_V, from one golden-rule integral
or from the self-consistent reweighted fixed point; and the time-resolved
excess decay rate delta_gamma(t) of Q itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg

from .models import NoiseChannelSpec
from .pauli import OperatorVector
from .superop import SparseSuperoperator, apply_lindbladian, assemble, build_sector_basis

EXACT_EPS_TOL = 1e-10


@dataclass
class Decomposition:
    gamma_Q: float
    gamma_Q_complex: complex
    eps1: float
    J1: OperatorVector | None
    eps2: float
    J2: OperatorVector | None
    exact: bool


def _require_normalized(q: OperatorVector) -> None:
    if abs(q.norm() - 1.0) > 1e-8:
        raise ValueError("candidate operator must be normalized")


def decompose(q: OperatorVector, hamiltonian: OperatorVector,
              noise: NoiseChannelSpec) -> Decomposition:
    """Split the generator action on Q into decay along Q and leakage out of it.

    gamma_Q = -Re (Q|G[Q]); the leakage direction removes the full complex
    projection, so (Q|J1) = (Q|J2) = 0 exactly.  A candidate with zero
    leakage in both pictures is an exact eigenoperator and is flagged.
    """
    _require_normalized(q)
    parts: dict[str, tuple[float, OperatorVector | None]] = {}
    gamma_c = 0j
    for direction, key in (("adjoint", "J1"), ("forward", "J2")):
        acted = apply_lindbladian(hamiltonian, noise, q, direction)
        proj = q.inner(acted)
        if direction == "adjoint":
            gamma_c = -proj
        residual = acted - proj * q
        eps = residual.norm()
        if eps <= EXACT_EPS_TOL * max(acted.norm(), noise.gamma):
            parts[key] = (0.0, None)
        else:
            parts[key] = (eps, residual / eps)
    eps1, j1 = parts["J1"]
    eps2, j2 = parts["J2"]
    return Decomposition(float(gamma_c.real), gamma_c, eps1, j1, eps2, j2,
                         exact=(j1 is None and j2 is None))


def _ensure_superop(hamiltonian, noise, superop) -> SparseSuperoperator:
    if superop is not None:
        if superop.direction != "adjoint":
            raise ValueError("evolution requires the Heisenberg-picture generator")
        return superop
    return assemble(hamiltonian, noise, build_sector_basis(hamiltonian.length, 0))


class _SectorStepper:
    """Streamed evolution of one sector vector."""

    def __init__(self, superop: SparseSuperoperator, op0: OperatorVector):
        basis = superop.basis
        v = basis.project(op0)
        if abs(op0.norm() ** 2 - float(np.vdot(v, v).real)) > 1e-9:
            raise ValueError("operator does not lie in the superoperator's sector")
        if superop.is_real and np.max(np.abs(v.imag)) < 1e-14:
            v = v.real.copy()
        self.matrix = superop.matrix
        self.v = v
        self.t = 0.0

    def advance(self, dt: float) -> None:
        self.v = scipy.sparse.linalg.expm_multiply((self.matrix * dt).tocsr(), self.v)
        self.t += dt


@dataclass
class KernelTrace:
    """Scalar recordings along one leakage-operator evolution."""

    times: np.ndarray
    norms: np.ndarray        # ||J1(t)||
    kernel: np.ndarray       # (J2|J1(t)); zeros when J2 is absent
    q_overlap: np.ndarray    # (Q|J1(t)), leakage back onto the candidate


def _evolve_kernel(superop: SparseSuperoperator, j1: OperatorVector,
                   j2: OperatorVector | None, q: OperatorVector | None,
                   dt: float, horizon_cap: float, decayed, chunk: float,
                   dt_growth: float = 1.0, dt_max: float | None = None) -> KernelTrace:
    """March J1 forward until ``decayed(trace)`` or the horizon cap.

    With ``dt_growth`` > 1 the step widens chunk by chunk up to ``dt_max``;
    appropriate for the smooth norm envelope, not for oscillatory kernels.
    """
    basis = superop.basis
    stepper = _SectorStepper(superop, j1)
    j2v = basis.project(j2) if j2 is not None else None
    qv = basis.project(q) if q is not None else None

    times = [0.0]
    norms = [float(np.linalg.norm(stepper.v))]
    kernel = [complex(np.vdot(j2v, stepper.v)) if j2v is not None else 0j]
    qov = [complex(np.vdot(qv, stepper.v)) if qv is not None else 0j]

    while stepper.t < horizon_cap - 1e-12:
        steps_per_chunk = max(1, int(round(chunk / dt)))
        for _ in range(steps_per_chunk):
            if stepper.t >= horizon_cap - 1e-12:
                break
            stepper.advance(dt)
            times.append(stepper.t)
            norms.append(float(np.linalg.norm(stepper.v)))
            kernel.append(complex(np.vdot(j2v, stepper.v)) if j2v is not None else 0j)
            qov.append(complex(np.vdot(qv, stepper.v)) if qv is not None else 0j)
        trace = KernelTrace(np.array(times), np.array(norms),
                            np.array(kernel), np.array(qov))
        if decayed(trace):
            return trace
        if dt_growth > 1.0 and dt_max is not None:
            dt = min(dt * dt_growth, dt_max)
    return KernelTrace(np.array(times), np.array(norms), np.array(kernel),
                       np.array(qov))


def _trapezoid_with_check(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Trapezoid integral plus a Richardson error estimate from half sampling."""
    full = float(np.trapezoid(values, times))
    if len(times) >= 5:
        half = float(np.trapezoid(values[::2], times[::2]))
        est = abs(full - half) / 3.0
    else:
        est = abs(full)
    return full, est


@dataclass
class NIntegralResult:
    times: np.ndarray
    integrand: np.ndarray       # ||J1(t)|| e^{gamma_ref t}
    N: np.ndarray               # cumulative integral on the grid
    N_infinity: float
    E_g_less: float
    tail_estimate: float
    quadrature_error: float
    converged: bool
    divergent: bool


def n_integral(j1: OperatorVector, gamma_ref: float, hamiltonian: OperatorVector,
               noise: NoiseChannelSpec, t_max: float | None = None,
               tolerance: float = 1e-4, dt: float = 0.25,
               superop: SparseSuperoperator | None = None) -> NIntegralResult:
    """Growth integral of the leakage norm against the e^{gamma_ref t} weight.

    The horizon extends adaptively until the fitted exponential tail
    contributes less than ``tolerance`` of the total; an integrand that fails
    to decay (e.g. noiseless dynamics) is flagged divergent.
    """
    sup = _ensure_superop(hamiltonian, noise, superop)
    cap = t_max if t_max is not None else 1.0e5

    def integrand_of(trace: KernelTrace) -> np.ndarray:
        return trace.norms * np.exp(gamma_ref * trace.times)

    def decayed(trace: KernelTrace) -> bool:
        # roundoff floor of the exponential-action steps: below it the norm
        # series is noise and the weighted integrand grows spuriously
        if trace.norms[-1] <= 1e-11 * trace.norms.max():
            return True
        f = integrand_of(trace)
        if f[-1] <= 1e-3 * f.max() and _tail(trace.times, f)[0] <= tolerance * max(
                np.trapezoid(f, trace.times), 1e-300):
            return True
        # hopeless: past the growth transient and still not decaying at all
        if trace.times[-1] > max(100.0, 2.0 / max(noise.gamma, 1e-6)):
            _, rate = _tail(trace.times, f)
            if rate <= 0:
                return True
        return False

    trace = _evolve_kernel(sup, j1, None, None, dt, cap, decayed,
                           chunk=max(20 * dt, 10.0), dt_growth=1.3,
                           dt_max=min(8.0, max(0.5, 0.008 / noise.gamma)))
    valid = trace.norms > 1e-11 * trace.norms.max()
    valid[0] = True
    times_v = trace.times[valid]
    f = integrand_of(trace)[valid]
    total, quad_err = _trapezoid_with_check(times_v, f)
    cum = np.concatenate([[0.0], np.cumsum(np.diff(times_v) * 0.5
                                           * (f[1:] + f[:-1]))])
    tail, rate = _tail(times_v, f)
    not_decayed = f[-1] > 1e-3 * f.max()
    divergent = not_decayed and (rate <= 0 or tail > 10.0 * max(total, 1e-300))
    converged = (not divergent) and tail <= tolerance * max(total, 1e-300)
    n_inf = total + (tail if not divergent else np.inf)
    if divergent:
        warnings.warn("N(t) integrand is not decaying; integral flagged divergent",
                      stacklevel=2)
    if not converged and not divergent:
        warnings.warn(f"N(t) tail estimate {tail:.2e} above tolerance at "
                      f"t={times_v[-1]:g}", stacklevel=2)
    e_g = 0.0 if divergent else 1.0 / n_inf
    return NIntegralResult(times_v, f, cum, float(n_inf), float(e_g),
                           float(tail), quad_err, converged, divergent)


def _tail(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Exponential-envelope tail bound: fit the last decade, integrate to infinity."""
    n = len(times)
    if n < 8:
        return float("inf"), -1.0
    j = max(n - max(4, n // 8), 1)
    v0, v1 = values[j], values[-1]
    if v1 <= 0 or v0 <= 0 or times[-1] <= times[j]:
        return 0.0 if v1 == 0 else float("inf"), -1.0
    rate = np.log(v0 / v1) / (times[-1] - times[j])
    if rate <= 0:
        return float("inf"), float(rate)
    return float(v1 / rate), float(rate)


@dataclass
class GammaVResult:
    gamma_V: float
    frequency_shift: float
    gamma_Q: float
    eps1: float
    eps2: float
    V_perp_norm: float
    E_g_greater: float
    mode: str
    iterations: int
    converged: bool
    divergent: bool
    kernel_times: np.ndarray = field(repr=False)
    kernel_values: np.ndarray = field(repr=False)
    q_leak_max: float = 0.0
    bound_ok: bool = True        # |gamma_V - gamma_Q| <= |eps2| * ||V_perp||
    quadrature_error: float = 0.0


def gamma_v(q: OperatorVector, hamiltonian: OperatorVector, noise: NoiseChannelSpec,
            mode: str = "self_consistent", t_max: float | None = None,
            dt: float = 0.05, rel_tol: float = 1e-3, max_iter: int = 50,
            superop: SparseSuperoperator | None = None,
            decomposition: Decomposition | None = None) -> GammaVResult:
    """Dressed decay rate of a candidate conserved operator.

    golden_rule:      gamma_V = gamma_Q + Re[-eps1 conj(eps2) int (J2|J1(t)) dt],
                      the lowest-order rate; the imaginary part is reported
                      as a coherent frequency shift.
    self_consistent:  fixed point of the same integral reweighted by
                      e^{gamma_V t}, iterated from gamma_Q until successive
                      iterates differ by less than ``rel_tol`` relative.

    The kernel uses the full evolution e^{G t} J1 in place of the projected
    one; the recorded overlap of J1(t) with Q diagnoses that approximation.
    """
    if mode not in ("golden_rule", "self_consistent"):
        raise ValueError("mode must be 'golden_rule' or 'self_consistent'")
    dec = decomposition or decompose(q, hamiltonian, noise)
    if dec.J1 is None or dec.J2 is None:
        return GammaVResult(dec.gamma_Q, 0.0, dec.gamma_Q, dec.eps1, dec.eps2,
                            0.0, float("inf"), mode, 0, True, False,
                            np.array([0.0]), np.array([0j]))

    sup = _ensure_superop(hamiltonian, noise, superop)
    cap = t_max if t_max is not None else 400.0

    def decayed(trace: KernelTrace) -> bool:
        # the kernel sets the horizon: it decays on the unitary scale 1/E_g^>
        # even when the norm envelope (dissipative) has barely moved
        k = np.abs(trace.kernel)
        return k[-1] <= 1e-4 * max(k.max(), 1e-300)

    trace = _evolve_kernel(sup, dec.J1, dec.J2, q, dt, cap, decayed,
                           chunk=max(2.0, 40 * dt))
    g = trace.kernel
    times = trace.times
    q_leak = float(np.max(np.abs(trace.q_overlap)))

    def reweighted_integral(x: float) -> tuple[complex, float, bool]:
        w = np.exp(x * times) * g
        total_re, err = _trapezoid_with_check(times, w.real)
        total_im, _ = _trapezoid_with_check(times, w.imag)
        tail, rate = _tail(times, np.abs(w))
        diverging = rate <= 0 and np.abs(w[-1]) > 1e-3 * np.max(np.abs(w))
        return complex(total_re, total_im), err + (0 if diverging else tail), diverging

    prefactor = -dec.eps1 * np.conjugate(dec.eps2)
    iterations = 0
    converged = True
    divergent = False
    if mode == "golden_rule":
        integral, quad_err, divergent = reweighted_integral(0.0)
        correction = prefactor * integral
        gv = dec.gamma_Q + correction.real
        shift = correction.imag
    else:
        gv = dec.gamma_Q
        shift = 0.0
        quad_err = 0.0
        for iterations in range(1, max_iter + 1):
            integral, quad_err, divergent = reweighted_integral(gv)
            if divergent:
                converged = False
                warnings.warn("self-consistent kernel integral diverges; "
                              "perturbation theory inapplicable here", stacklevel=2)
                break
            correction = prefactor * integral
            new = dec.gamma_Q + correction.real
            shift = correction.imag
            if abs(new - gv) <= rel_tol * max(abs(new), 1e-300):
                gv = new
                break
            gv = new
        else:
            converged = False
            warnings.warn(f"gamma_V fixed point not reached in {max_iter} iterations",
                          stacklevel=2)

    # second pass: V_perp = eps1 * int e^{gamma_V t} J1(t) dt at the final rate
    vp_cap = t_max if t_max is not None else 2000.0
    v_perp_norm, vp_divergent = _v_perp_norm(sup, dec.J1, gv, vp_cap, dt)
    v_perp_norm *= dec.eps1
    divergent = divergent or vp_divergent

    e_g_greater = _one_over_e_scale(times, np.abs(g))
    if divergent:
        bound_ok = True  # not applicable: V_perp itself did not converge
    else:
        bound_ok = abs(gv - dec.gamma_Q) <= dec.eps2 * v_perp_norm * 1.05 + 1e-12
    return GammaVResult(float(gv), float(shift), dec.gamma_Q, dec.eps1, dec.eps2,
                        float(v_perp_norm), e_g_greater, mode, iterations,
                        converged, divergent, times, g, q_leak, bound_ok,
                        float(quad_err))


def _v_perp_norm(sup, j1, rate, horizon, dt) -> tuple[float, bool]:
    """Trapezoid accumulation of int e^{rate t} J1(t) dt in sector coordinates.

    Stops once the reweighted integrand has decayed three decades; a rising
    integrand at the horizon marks the integral divergent.
    """
    stepper = _SectorStepper(sup, j1)
    acc = np.zeros_like(stepper.v, dtype=complex)
    prev = stepper.v.astype(complex)
    last_norm = peak = float(np.linalg.norm(prev))
    while stepper.t < horizon - 1e-12:
        stepper.advance(dt)
        cur = stepper.v * np.exp(rate * stepper.t)
        acc += 0.5 * dt * (prev + cur)
        prev = cur
        last_norm = float(np.linalg.norm(cur))
        peak = max(peak, last_norm)
        if last_norm <= 1e-3 * peak:
            return float(np.linalg.norm(acc)), False
    return float(np.linalg.norm(acc)), bool(last_norm > 0.05 * peak)


def _one_over_e_scale(times: np.ndarray, values: np.ndarray) -> float:
    """Inverse of the time at which |values| first falls below |values[0]|/e."""
    if values[0] <= 0:
        return float("inf")
    target = values[0] / np.e
    below = np.flatnonzero(values <= target)
    if len(below) == 0:
        return 0.0
    j = below[0]
    if j == 0:
        return float("inf")
    t0, t1 = times[j - 1], times[j]
    v0, v1 = values[j - 1], values[j]
    t_e = t0 + (t1 - t0) * (v0 - target) / max(v0 - v1, 1e-300)
    return float(1.0 / t_e)


@dataclass
class DeltaGammaResult:
    times: np.ndarray
    values: np.ndarray          # |d||Q||/dt| / ||Q|| - gamma_Q  (rate units)
    gamma_Q: float
    plateau: float
    convergence_time: float
    literal: bool


def delta_gamma(q: OperatorVector, hamiltonian: OperatorVector,
                noise: NoiseChannelSpec, t_grid, literal: bool = False,
                superop: SparseSuperoperator | None = None) -> DeltaGammaResult:
    """Excess decay rate of ||Q(t)|| over the first-order value gamma_Q.

    The derivative is evaluated through the generator,
    d||Q||/dt = Re (Q(t)|G[Q(t)]) / ||Q(t)||, which is exact at every grid
    point.  With ``literal=True`` the series is |d||Q||/dt| - gamma_Q without
    the norm division (the un-normalized variant; dimensionally a rate only
    at ||Q|| = 1).
    """
    _require_normalized(q)
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must start at 0 and increase strictly")
    dec = decompose(q, hamiltonian, noise)
    sup = _ensure_superop(hamiltonian, noise, superop)
    stepper = _SectorStepper(sup, q)

    values = np.empty(len(t_grid))

    def record(i):
        v = stepper.v
        n2 = float(np.vdot(v, v).real)
        dn = float(np.vdot(v, sup.matrix @ v).real)  # ||Q|| d||Q||/dt
        if literal:
            values[i] = abs(dn) / np.sqrt(n2) - dec.gamma_Q
        else:
            values[i] = abs(dn) / n2 - dec.gamma_Q

    record(0)
    for i in range(1, len(t_grid)):
        stepper.advance(t_grid[i] - t_grid[i - 1])
        record(i)

    tail = values[3 * len(values) // 4:]
    plateau = float(np.mean(tail))
    conv_time = float(t_grid[-1])
    tol = max(0.05 * abs(plateau), 1e-12)
    for i in range(len(values)):
        if np.all(np.abs(values[i:] - plateau) <= 4 * tol):
            conv_time = float(t_grid[i])
            break
    return DeltaGammaResult(t_grid, values, dec.gamma_Q, plateau, conv_time, literal)


@dataclass
class PerturbationReport:
    """Everything the perturbative analysis produces for one candidate."""

    gamma_Q: float
    eps1: float
    eps2: float
    exact: bool
    n_result: NIntegralResult | None
    gamma_v_result: GammaVResult | None
    delta_gamma_result: DeltaGammaResult | None
    checks: dict

    def scalars(self) -> dict:
        out = {"gamma_Q": self.gamma_Q, "eps1": self.eps1, "eps2": self.eps2,
               "exact": self.exact, "checks": self.checks}
        if self.n_result is not None:
            out.update(N_infinity=self.n_result.N_infinity,
                       E_g_less=self.n_result.E_g_less,
                       N_converged=self.n_result.converged,
                       N_divergent=self.n_result.divergent)
        if self.gamma_v_result is not None:
            g = self.gamma_v_result
            out.update(gamma_V=g.gamma_V, frequency_shift=g.frequency_shift,
                       V_perp_norm=g.V_perp_norm, E_g_greater=g.E_g_greater,
                       gamma_v_mode=g.mode, gamma_v_converged=g.converged)
        if self.delta_gamma_result is not None:
            out.update(delta_gamma_plateau=self.delta_gamma_result.plateau,
                       delta_gamma_convergence_time=self.delta_gamma_result.convergence_time)
        return out


def perturbation_report(q: OperatorVector, hamiltonian: OperatorVector,
                        noise: NoiseChannelSpec, mode: str = "self_consistent",
                        t_max: float | None = None, dt: float = 0.25,
                        kernel_dt: float = 0.05,
                        delta_gamma_grid=None,
                        superop: SparseSuperoperator | None = None,
                        run_gamma_v: bool = True) -> PerturbationReport:
    """Full perturbative report for one candidate operator.

    Both closing inequalities are checked numerically: the Eq.-type bound
    |gamma_V - gamma_Q| <= |eps2| ||V_perp|| and the rough estimate
    ||V_perp|| <= eps1 N(inf) (5% slack for quadrature differences).
    """
    dec = decompose(q, hamiltonian, noise)
    sup = _ensure_superop(hamiltonian, noise, superop)
    checks: dict = {"exact": dec.exact}
    n_res = None
    gv_res = None
    dg_res = None
    if dec.J1 is not None:
        n_res = n_integral(dec.J1, dec.gamma_Q, hamiltonian, noise,
                           t_max=t_max, dt=dt, superop=sup)
        if run_gamma_v:
            gv_res = gamma_v(q, hamiltonian, noise, mode=mode, t_max=t_max,
                             dt=kernel_dt, superop=sup, decomposition=dec)
            if not gv_res.divergent:
                checks["gamma_bound_ok"] = gv_res.bound_ok
            if not n_res.divergent and not gv_res.divergent:
                checks["v_perp_vs_n_ok"] = bool(
                    gv_res.V_perp_norm <= dec.eps1 * n_res.N_infinity * 1.05 + 1e-12)
        grid = delta_gamma_grid
        if grid is None:
            grid = np.linspace(0.0, 40.0, 161)
        dg_res = delta_gamma(q, hamiltonian, noise, grid, superop=sup)
    report = PerturbationReport(dec.gamma_Q, dec.eps1, dec.eps2, dec.exact,
                                n_res, gv_res, dg_res, checks)
    bad = [k for k, ok in checks.items() if k.endswith("_ok") and not ok]
    if bad:
        warnings.warn(f"perturbation-report consistency checks failed: {bad}",
                      stacklevel=2)
    return report
