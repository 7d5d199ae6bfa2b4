"""Command-line front end: config-driven runs that emit plot-ready data files.

A run is described by one JSON config (see README for the schema and the
``presets/`` directory for ready-made figure-level configs).  Every run
writes a ``manifest.json`` with the echoed config, library versions, wall
time, and SHA-256 checksums of the data files -- also on failure, with the
failing stage recorded.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 resource cap.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, ResourceCapError
from .models import (HamiltonianSpec, build_hamiltonian, build_noise, iom_catalogue,
                     dressed_number_operator, domain_wall_swap, spin_current,
                     tfim_a, tfim_b, total_spin, translation_sum, xyz_k_charge)
from .pauli import OperatorVector
from .superop import assemble, build_sector_basis
from .spectra import (DEFAULT_DENSE_CAP, dense_spectrum, slow_modes,
                      validate_spectrum)
from .analysis import overlap_report, phase_diagram
from .evolve import propagate
from .pert import decompose, delta_gamma, gamma_v, n_integral

_TASKS = ("spectrum", "overlap", "phase-diagram", "evolve", "perturb", "validate")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slowmodes",
        description="Slow modes of weakly dissipative spin-chain Lindbladians")
    parser.add_argument("--config", required=True, help="path to a JSON run config")
    parser.add_argument("--task", help="override the task named in the config")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("SLOWMODES_THREADS", "1")),
                        help="worker/thread budget (default 1, or SLOWMODES_THREADS)")
    parser.add_argument("--out", help="output directory (default from config, "
                                      "rooted at SLOWMODES_OUT if set)")
    args = parser.parse_args(argv)
    _limit_threads(args.threads)

    started = time.time()
    outputs: dict[str, str] = {}
    stage = "config"
    out_dir = None
    config = None
    try:
        config = _load_config(args.config)
        if args.task:
            config["task"] = args.task
        task = config.get("task")
        if task not in _TASKS:
            raise ConfigError(f"task must be one of {_TASKS}, got {task!r}")
        out_dir = _resolve_out(args.out or config.get("out", "runs/out"))
        out_dir.mkdir(parents=True, exist_ok=True)
        stage = task
        runner = {
            "spectrum": _task_spectrum,
            "overlap": _task_overlap,
            "phase-diagram": _task_phase_diagram,
            "evolve": _task_evolve,
            "perturb": _task_perturb,
            "validate": _task_validate,
        }[task]
        runner(config, out_dir, outputs, args.threads)
        stage = "done"
        _write_manifest(out_dir, config, outputs, started, "ok", None)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _try_manifest(out_dir, config, outputs, started, "failed", stage, exc)
        return 2
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        _try_manifest(out_dir, config, outputs, started, "failed", stage, exc)
        return 4
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure in stage {stage}: {exc}", file=sys.stderr)
        _try_manifest(out_dir, config, outputs, started, "failed", stage, exc)
        return 3


def _limit_threads(n: int) -> None:
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=max(1, n))
    except Exception:  # noqa: BLE001 - best effort; plain BLAS defaults otherwise
        pass


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    return config


def _resolve_out(out: str) -> Path:
    root = os.environ.get("SLOWMODES_OUT")
    path = Path(out)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _write_manifest(out_dir, config, outputs, started, status, failure_stage,
                    error=None) -> None:
    manifest = {
        "config": config,
        "versions": {"slowmodes": __version__, "numpy": np.__version__,
                     "scipy": __import__("scipy").__version__,
                     "python": sys.version.split()[0]},
        "wall_time_s": round(time.time() - started, 3),
        "outputs": outputs,
        "status": status,
    }
    if failure_stage and status != "ok":
        manifest["failure_stage"] = failure_stage
        manifest["error"] = str(error)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _try_manifest(out_dir, config, outputs, started, status, stage, error) -> None:
    if out_dir is None:
        return
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(out_dir, config, outputs, started, status, stage, error)
    except OSError:
        pass


def _register(outputs: dict, path: Path) -> None:
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    outputs[path.name] = digest


# -- config parsing helpers -------------------------------------------------

def _model_spec(config: dict, length: int | None = None) -> HamiltonianSpec:
    block = config.get("model")
    if not isinstance(block, dict):
        raise ConfigError("config requires a 'model' object")
    family = str(block.get("family", "")).lower()
    L = length if length is not None else block.get("length")
    if not isinstance(L, int):
        raise ConfigError("model.length must be an integer (or list for spectrum)")
    c = block.get("couplings", {})
    try:
        if family == "mfim":
            return HamiltonianSpec.mfim(L, c["J"], c["h_z"], c["h_x"])
        if family == "tfim":
            return HamiltonianSpec.tfim(L, c["J"], c["h"])
        if family == "xyz":
            return HamiltonianSpec.xyz(L, c["J_x"], c["J_y"], c["J_z"])
        if family == "xxz":
            return HamiltonianSpec.xxz(L, c.get("J", 1.0), c["delta"])
    except KeyError as exc:
        raise ConfigError(f"missing coupling {exc} for family {family!r}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown model family {family!r}")


def _model_lengths(config: dict) -> list[int]:
    block = config.get("model", {})
    L = block.get("length")
    if isinstance(L, list):
        return [int(x) for x in L]
    if isinstance(L, int):
        return [L]
    raise ConfigError("model.length must be an integer or a list of integers")


def _single_length(config: dict) -> int:
    lengths = _model_lengths(config)
    if len(lengths) != 1:
        raise ConfigError("this task requires a single model.length")
    return lengths[0]


def _noise_spec(config: dict, length: int, gamma: float | None = None):
    block = config.get("noise")
    if not isinstance(block, dict):
        raise ConfigError("config requires a 'noise' object")
    try:
        return build_noise(block.get("kind", "depolarizing"),
                           gamma if gamma is not None else block["gamma"], length)
    except KeyError as exc:
        raise ConfigError(f"missing noise key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _sector_list(config: dict, length: int) -> list[int]:
    sectors = config.get("sectors", [0])
    if sectors == "all":
        return list(range(length))
    if isinstance(sectors, list) and all(isinstance(k, int) for k in sectors):
        bad = [k for k in sectors if not 0 <= k < length]
        if bad:
            raise ConfigError(f"sector indices out of range for L={length}: {bad}")
        return sectors
    raise ConfigError("sectors must be a list of integers or 'all'")


def _resolve_operator(name, spec: HamiltonianSpec) -> OperatorVector:
    """Named operators for initial states, references, and candidates.

    A_m/B_m resolve through the transverse-field part (J, h_x) when the model
    is the mixed-field chain, matching the perturbed-TFIM reading.
    """
    L = spec.length
    if isinstance(name, dict):
        if "file" in name:
            return OperatorVector.from_text(Path(name["file"]).read_text())
        if "terms" in name:
            return OperatorVector.from_labels(
                [(lbl, complex(re, im)) for lbl, re, im in name["terms"]])
        raise ConfigError(f"operator spec must name 'file' or 'terms': {name}")
    name = str(name)
    H = build_hamiltonian(spec)
    if name == "I":
        return OperatorVector.identity(L)
    if name == "H":
        return H
    if name.startswith("H^"):
        power = int(name[2:])
        out = H
        for _ in range(power - 1):
            out = out @ H
        return out
    if name in ("sum_z", "S_z"):
        return total_spin(L, "z")
    if name in ("sum_x", "S_x"):
        return total_spin(L, "x")
    if name in ("sum_y", "S_y"):
        return total_spin(L, "y")
    if name.startswith(("A_", "B_")):
        m = int(name[2:])
        if spec.family == "tfim":
            J, h = spec.coupling("J"), spec.coupling("h")
        elif spec.family == "mfim":
            J, h = spec.coupling("J"), spec.coupling("h_x")
        else:
            raise ConfigError(f"{name} requires an Ising-type model")
        return tfim_a(L, m) if name[0] == "A" else tfim_b(L, m, J, h)
    if name == "K" and spec.family == "xyz":
        return xyz_k_charge(spec)
    if name == "current":
        return spin_current(L)
    if name == "domain_wall_swap":
        return domain_wall_swap(L)
    if name == "N_dressed":
        return dressed_number_operator(L)
    if name == "mid_z":
        return OperatorVector.from_labels([("I" * (L // 2) + "Z" + "I" * (L - L // 2 - 1), 1.0)])
    raise ConfigError(f"unknown operator name {name!r}")


def _solver_options(config: dict) -> dict:
    block = dict(config.get("solver", {}))
    block.setdefault("dense_cap", DEFAULT_DENSE_CAP)
    block.setdefault("mode", "auto")
    block.setdefault("count", 10)
    return block


def _compute_spectrum(sup, solver: dict):
    mode = solver.get("mode", "auto")
    dense_cap = solver.get("dense_cap", DEFAULT_DENSE_CAP)
    if mode == "dense" or (mode == "auto" and sup.dimension <= dense_cap):
        return dense_spectrum(sup, dense_cap=max(dense_cap, sup.dimension))
    kwargs = {k: solver[k] for k in ("tau", "residual_tol", "arpack_tol",
                                     "max_restarts", "extra", "ncv") if k in solver}
    return slow_modes(sup, count=int(solver.get("count", 10)), **kwargs)


def _catalogue(config: dict, spec: HamiltonianSpec):
    block = config.get("catalogue", {})
    cat = iom_catalogue(
        spec,
        max_power=int(block.get("max_power", 2)),
        max_range=block.get("max_range"),
        include_products=bool(block.get("products", False)),
        product_size_cut=block.get("size_cut"),
        include=block.get("include"),
    )
    for extra in block.get("extra", []):
        op = _resolve_operator(extra, spec)
        from .models import IomEntry
        from .pauli import commutator
        H = build_hamiltonian(spec)
        ratio = commutator(H, op).norm() / op.norm()
        cat.entries.append(IomEntry(str(extra), op, ratio < 1e-10, ratio))
    return cat


# -- tasks -------------------------------------------------------------------

def _task_spectrum(config, out_dir, outputs, threads) -> None:
    solver = _solver_options(config)
    for L in _model_lengths(config):
        spec = _model_spec(config, L)
        H = build_hamiltonian(spec)
        noise = _noise_spec(config, L)
        for k in _sector_list(config, L):
            sup = assemble(H, noise, build_sector_basis(L, k))
            result = _compute_spectrum(sup, solver)
            path = out_dir / f"spectrum_L{L}_k{k}.csv"
            result.to_csv(path)
            _register(outputs, path)
            dump = int(solver.get("dump_vectors", 0))
            if dump:
                for i in range(min(dump, len(result))):
                    vpath = out_dir / f"eigenoperator_L{L}_k{k}_{i}.txt"
                    vpath.write_text(result.operator(i).to_text())
                    _register(outputs, vpath)


def _task_validate(config, out_dir, outputs, threads) -> None:
    solver = _solver_options(config)
    report = {}
    ok = True
    for L in _model_lengths(config):
        spec = _model_spec(config, L)
        H = build_hamiltonian(spec)
        noise = _noise_spec(config, L)
        for k in _sector_list(config, L):
            sup = assemble(H, noise, build_sector_basis(L, k))
            result = _compute_spectrum(sup, solver)
            diag = validate_spectrum(result)
            report[f"L{L}_k{k}"] = {
                "all_ok": diag.all_ok(),
                "conjugate_pairing_ok": diag.conjugate_pairing_ok,
                "pairing_max_dist": diag.pairing_max_dist,
                "dissipativity_ok": diag.dissipativity_ok,
                "max_re_lambda": diag.max_re_lambda,
                "trace_identity_ok": diag.trace_identity_ok,
                "trace_identity_max_err": diag.trace_identity_max_err,
                "variance_identity_ok": diag.variance_identity_ok,
                "variance_identity_max_err": diag.variance_identity_max_err,
                "hermitian_ok": diag.hermitian_ok,
            }
            ok = ok and diag.all_ok()
    path = out_dir / "validation.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    _register(outputs, path)
    if not ok:
        raise NumericalError("spectral validation checks failed; see validation.json")


def _task_overlap(config, out_dir, outputs, threads) -> None:
    solver = _solver_options(config)
    L = _single_length(config)
    spec = _model_spec(config, L)
    H = build_hamiltonian(spec)
    noise = _noise_spec(config, L)
    sup = assemble(H, noise, build_sector_basis(L, 0))
    result = _compute_spectrum(sup, solver)
    spath = out_dir / "spectrum.csv"
    result.to_csv(spath)
    _register(outputs, spath)
    cat = _catalogue(config, spec)
    count = int(config.get("overlap", {}).get("count", min(10, len(result))))
    rep = overlap_report(result, cat, count=count)
    apath = out_dir / "overlap_A.csv"
    rep.to_csv(apath)
    _register(outputs, apath)
    jpath = out_dir / "overlap.json"
    rep.to_json(jpath)
    _register(outputs, jpath)


def _task_phase_diagram(config, out_dir, outputs, threads) -> None:
    block = config.get("grid")
    if not isinstance(block, dict):
        raise ConfigError("phase-diagram requires a 'grid' object")
    try:
        h_x, h_z, J = block["h_x"], block["h_z"], float(block.get("J", 1.0))
    except KeyError as exc:
        raise ConfigError(f"missing grid key {exc}") from exc
    L = _single_length(config)
    noise = _noise_spec(config, L)
    solver = _solver_options(config)
    grid = phase_diagram(h_x, h_z, J, noise, L,
                         dense_cap=solver["dense_cap"], workers=max(1, threads))
    path = out_dir / "chaoticity_grid.csv"
    grid.to_csv(path)
    _register(outputs, path)
    if grid.failures:
        fpath = out_dir / "grid_failures.json"
        with open(fpath, "w") as fh:
            json.dump([{"row": i, "col": j, "error": msg}
                       for i, j, msg in grid.failures], fh, indent=2)
            fh.write("\n")
        _register(outputs, fpath)


def _task_evolve(config, out_dir, outputs, threads) -> None:
    block = config.get("evolve", {})
    L = _single_length(config)
    spec = _model_spec(config, L)
    H = build_hamiltonian(spec)
    noise = _noise_spec(config, L)
    op0 = _resolve_operator(block.get("initial", "sum_z"), spec)
    t_max = float(block.get("t_max", 10.0))
    points = int(block.get("points", 201))
    grid = np.linspace(0.0, t_max, points)
    refs = {str(r): _resolve_operator(r, spec) for r in block.get("references", ["H"])}
    sup = None
    if op0.translate(1) == op0:
        sup = assemble(H, noise, build_sector_basis(L, 0))
    trace = propagate(op0, H, noise, grid,
                      tolerance=float(block.get("tolerance", 1e-8)),
                      superop=sup, references=refs)
    path = out_dir / "trace.csv"
    trace.to_csv(path)
    _register(outputs, path)


def _task_perturb(config, out_dir, outputs, threads) -> None:
    block = config.get("perturb", {})
    L = _single_length(config)
    spec = _model_spec(config, L)
    H = build_hamiltonian(spec)
    gammas = config.get("noise", {}).get("gamma")
    gammas = gammas if isinstance(gammas, list) else [gammas]
    candidate = block.get("candidate", "H")
    q = _resolve_operator(candidate, spec).normalized()
    summary = {"candidate": str(candidate), "per_gamma": []}
    run_gv = bool(block.get("run_gamma_v", True))
    for gamma in gammas:
        noise = _noise_spec(config, L, gamma=float(gamma))
        sup = assemble(H, noise, build_sector_basis(L, 0))
        dec = decompose(q, H, noise)
        entry = {"gamma": float(gamma), "gamma_Q": dec.gamma_Q,
                 "eps1": dec.eps1, "eps2": dec.eps2, "exact": dec.exact}
        tag = f"{gamma:g}"
        if dec.J1 is not None:
            n_res = n_integral(dec.J1, dec.gamma_Q, H, noise,
                               t_max=block.get("t_max"),
                               dt=float(block.get("dt", 0.25)), superop=sup)
            entry.update(N_infinity=n_res.N_infinity, E_g_less=n_res.E_g_less,
                         N_converged=n_res.converged, N_divergent=n_res.divergent)
            npath = out_dir / f"n_integral_gamma{tag}.csv"
            with open(npath, "w") as fh:
                fh.write("t,integrand,N\n")
                for t, f, nval in zip(n_res.times, n_res.integrand, n_res.N):
                    fh.write(f"{float(t)!r},{float(f)!r},{float(nval)!r}\n")
            _register(outputs, npath)
            if run_gv:
                gv = gamma_v(q, H, noise, mode=block.get("mode", "golden_rule"),
                             t_max=block.get("t_max"),
                             dt=float(block.get("kernel_dt", 0.05)),
                             superop=sup, decomposition=dec)
                entry.update(gamma_V=gv.gamma_V, frequency_shift=gv.frequency_shift,
                             V_perp_norm=gv.V_perp_norm, E_g_greater=gv.E_g_greater,
                             gamma_v_converged=gv.converged,
                             gamma_v_divergent=gv.divergent)
                kpath = out_dir / f"kernel_gamma{tag}.csv"
                with open(kpath, "w") as fh:
                    fh.write("t,re_kernel,im_kernel\n")
                    for t, gval in zip(gv.kernel_times, gv.kernel_values):
                        gval = complex(gval)
                        fh.write(f"{float(t)!r},{gval.real!r},{gval.imag!r}\n")
                _register(outputs, kpath)
            dg_tmax = float(block.get("delta_gamma_t_max", 40.0))
            dg_pts = int(block.get("delta_gamma_points", 161))
            dg = delta_gamma(q, H, noise, np.linspace(0.0, dg_tmax, dg_pts),
                             superop=sup)
            entry.update(delta_gamma_plateau=dg.plateau,
                         delta_gamma_convergence_time=dg.convergence_time)
            dpath = out_dir / f"delta_gamma_gamma{tag}.csv"
            with open(dpath, "w") as fh:
                fh.write("t,delta_gamma\n")
                for t, val in zip(dg.times, dg.values):
                    fh.write(f"{float(t)!r},{float(val)!r}\n")
            _register(outputs, dpath)
        summary["per_gamma"].append(entry)
    rpath = out_dir / "report.json"
    with open(rpath, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _register(outputs, rpath)


if __name__ == "__main__":
    sys.exit(main())
