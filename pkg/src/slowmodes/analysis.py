"""Eigenoperator / conserved-operator correspondence measures.

The central quantity is the overlap matrix A[alpha, i] = |(V_i|Q_alpha)|^2
between normalized eigenoperators and catalogue entries.  Row sums R_i are
taken against a Gram-Schmidt orthonormalization of the catalogue, so R_i = 1
exactly when V_i lies in the catalogue span; column sums C_alpha use the
orthonormalized eigenoperator set symmetrically.  Degenerate eigen-multiplets
are scored through the projector onto their span, which removes the
vector-choice arbitrariness inside a multiplet.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models import HamiltonianSpec, NoiseChannelSpec, build_hamiltonian, build_noise
from .pauli import OperatorVector
from .spectra import (DEFAULT_DENSE_CAP, SpectrumResult, dense_spectrum, slow_modes)
from .superop import assemble, build_sector_basis

GS_DROP = 1e-8  # rank-deficiency threshold for Gram-Schmidt, relative to input norm


def _gram_schmidt(vectors: np.ndarray, drop: float = GS_DROP) -> np.ndarray:
    """Orthonormal columns spanning the input columns; near-dependent ones dropped."""
    kept: list[np.ndarray] = []
    for j in range(vectors.shape[1]):
        v = vectors[:, j].astype(complex)
        scale = np.linalg.norm(v)
        if scale == 0.0:
            continue
        for _ in range(2):  # re-orthogonalize for numerical safety
            for u in kept:
                v = v - u * np.vdot(u, v)
        rem = np.linalg.norm(v)
        if rem < drop * scale:
            continue
        kept.append(v / rem)
    if not kept:
        return np.zeros((vectors.shape[0], 0), dtype=complex)
    return np.column_stack(kept)


@dataclass
class OverlapReport:
    iom_labels: list[str]
    mode_labels: list[str]
    A: np.ndarray          # |(V_i|Q_alpha)|^2, shape (n_iom, n_modes)
    R: np.ndarray          # per-mode row sums against the orthonormalized catalogue
    C: np.ndarray          # per-IOM column sums against the orthonormalized modes
    eigenvalues: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iom\\mode," + ",".join(self.mode_labels) + "\n")
            for a, lbl in enumerate(self.iom_labels):
                fh.write(lbl + "," + ",".join(repr(float(x)) for x in self.A[a]) + "\n")

    def to_json(self, path) -> None:
        payload = {
            "iom_labels": self.iom_labels,
            "mode_labels": self.mode_labels,
            "R": [float(x) for x in self.R],
            "C": [float(x) for x in self.C],
        }
        if self.eigenvalues is not None:
            payload["eigenvalues"] = [[float(l.real), float(l.imag)]
                                      for l in self.eigenvalues]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _mode_matrix(eigenops, catalogue, count):
    """Common coordinates for modes and catalogue: (V, Q, labels, eigvals, groups)."""
    from .models import IomCatalogue

    if isinstance(catalogue, IomCatalogue):
        cat_pairs = [(e.label, e.operator) for e in catalogue.entries]
    else:
        cat_pairs = list(catalogue)
    if not cat_pairs:
        raise ValueError("empty catalogue")

    if isinstance(eigenops, SpectrumResult):
        n = len(eigenops) if count is None else min(count, len(eigenops))
        V = eigenops.vectors[:, :n].astype(complex)
        lam = eigenops.eigenvalues[:n]
        groups = [g for g in eigenops.multiplets() if g[0] < n]
        groups = [[i for i in g if i < n] for g in groups]
        basis = eigenops.basis
        Q = np.column_stack([basis.project(op) for _, op in cat_pairs])
        qnorm_full = np.array([op.norm() for _, op in cat_pairs])
        qnorm_proj = np.linalg.norm(Q, axis=0)
        # catalogue entries must live in the sector for overlaps to be exact
        leak = np.abs(qnorm_full - qnorm_proj) / np.maximum(qnorm_full, 1e-300)
        if np.max(leak) > 1e-9:
            bad = [cat_pairs[i][0] for i in np.flatnonzero(leak > 1e-9)]
            raise ValueError(f"catalogue entries outside the momentum sector: {bad}")
    else:
        ops = list(eigenops)
        if count is not None:
            ops = ops[:count]
        lam = None
        groups = [[i] for i in range(len(ops))]
        strings = sorted(
            {p for op in ops for p, _ in op.terms()}
            | {p for _, op in cat_pairs for p, _ in op.terms()},
            key=lambda p: p.sort_key())
        index = {p: i for i, p in enumerate(strings)}
        V = np.zeros((len(strings), len(ops)), dtype=complex)
        for j, op in enumerate(ops):
            for p, c in op._terms.items():
                V[index[p], j] = c
        Q = np.zeros((len(strings), len(cat_pairs)), dtype=complex)
        for a, (_, op) in enumerate(cat_pairs):
            for p, c in op._terms.items():
                Q[index[p], a] = c

    labels = [lbl for lbl, _ in cat_pairs]
    return V, Q, labels, lam, groups


def overlap_report(eigenops, catalogue, count: int | None = None,
                   drop: float = GS_DROP) -> OverlapReport:
    """Overlap matrix, row sums, and column sums for modes against a catalogue.

    ``eigenops`` is either a SpectrumResult (typical; modes taken in
    decay-rate order) or a plain list of OperatorVectors.
    """
    V, Q, labels, lam, groups = _mode_matrix(eigenops, catalogue, count)
    n_modes = V.shape[1]
    Vn = V / np.linalg.norm(V, axis=0)
    Qn = Q / np.linalg.norm(Q, axis=0)

    A = np.abs(Qn.conj().T @ Vn) ** 2

    Qt = _gram_schmidt(Q, drop)
    R = np.empty(n_modes)
    for g in groups:
        U = _gram_schmidt(Vn[:, g], drop=1e-12)
        if U.shape[1] == 0:
            R[g] = 0.0
            continue
        val = float(np.sum(np.abs(Qt.conj().T @ U) ** 2)) / U.shape[1]
        R[list(g)] = val

    Vt = _gram_schmidt(Vn, drop=1e-12)
    C = np.sum(np.abs(Vt.conj().T @ Qn) ** 2, axis=0).real

    mode_labels = [f"V_{i+1}" for i in range(n_modes)]
    return OverlapReport(labels, mode_labels, A, R, C, eigenvalues=lam,
                         meta={"n_modes": n_modes, "gs_drop": drop})


def _hp_catalogue(hamiltonian: OperatorVector, max_power: int = 2):
    """The chaoticity reference set {I, H, H^2, ...} as (label, operator) pairs."""
    pairs = [("I", OperatorVector.identity(hamiltonian.length)), ("H", hamiltonian)]
    power = hamiltonian
    for p in range(2, max_power + 1):
        power = power @ hamiltonian
        pairs.append((f"H^{p}", power))
    return pairs


def chaoticity(spec: HamiltonianSpec, noise: NoiseChannelSpec,
               dense_cap: int = DEFAULT_DENSE_CAP, n_modes: int = 3,
               extra_catalogue=None, **slow_kwargs) -> float:
    """R_Sigma = sum over the first ``n_modes`` modes (identity included) of 1 - R_i.

    Vanishes when the slowest modes are linear combinations of I, H, H^2;
    extra catalogue entries may be appended to probe additional candidates.
    """
    spectrum = _sector_spectrum(spec, noise, n_modes, dense_cap, **slow_kwargs)
    H = build_hamiltonian(spec)
    pairs = _hp_catalogue(H)
    if extra_catalogue:
        pairs = pairs + list(extra_catalogue)
    rep = overlap_report(spectrum, pairs, count=n_modes)
    return float(np.sum(np.maximum(0.0, 1.0 - rep.R[:n_modes])))


def _sector_spectrum(spec, noise, n_modes, dense_cap, **slow_kwargs) -> SpectrumResult:
    H = build_hamiltonian(spec)
    basis = build_sector_basis(spec.length, 0)
    sup = assemble(H, noise, basis)
    if basis.dimension <= dense_cap:
        return dense_spectrum(sup, dense_cap)
    return slow_modes(sup, count=max(n_modes, 3), **slow_kwargs)


@dataclass
class ChaoticityGrid:
    h_x: np.ndarray
    h_z: np.ndarray
    values: np.ndarray  # shape (len(h_z), len(h_x)); NaN marks failed cells
    failures: list[tuple[int, int, str]] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("h_z\\h_x," + ",".join(repr(float(x)) for x in self.h_x) + "\n")
            for i, hz in enumerate(self.h_z):
                fh.write(repr(float(hz)) + ","
                         + ",".join(repr(float(v)) for v in self.values[i]) + "\n")


def _phase_cell(args) -> float:
    J, hx, hz, kind, gamma, length, dense_cap = args
    spec = HamiltonianSpec.mfim(length, J, hz, hx)
    noise = build_noise(kind, gamma, length)
    return chaoticity(spec, noise, dense_cap=dense_cap)


def phase_diagram(h_x_grid, h_z_grid, J: float, noise: NoiseChannelSpec,
                  length: int, dense_cap: int = DEFAULT_DENSE_CAP,
                  workers: int = 1) -> ChaoticityGrid:
    """Chaoticity over an (h_x, h_z) grid of mixed-field Ising models.

    Cells are independent; per-cell failures are recorded as NaN and the sweep
    continues.  Cell order in the output is deterministic.
    """
    h_x = np.asarray(list(h_x_grid), dtype=float)
    h_z = np.asarray(list(h_z_grid), dtype=float)
    if h_x.size == 0 or h_z.size == 0:
        raise ValueError("phase diagram grid must be nonempty")
    tasks = [(J, float(hx), float(hz), noise.kind, noise.gamma, length, dense_cap)
             for hz in h_z for hx in h_x]
    values = np.full(len(tasks), np.nan)
    failures: list[tuple[int, int, str]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_phase_cell_safe, tasks)
            for idx, (val, err) in enumerate(results):
                values[idx] = val
                if err:
                    failures.append((idx // len(h_x), idx % len(h_x), err))
    else:
        for idx, task in enumerate(tasks):
            val, err = _phase_cell_safe(task)
            values[idx] = val
            if err:
                failures.append((idx // len(h_x), idx % len(h_x), err))
    grid = values.reshape(len(h_z), len(h_x))
    return ChaoticityGrid(h_x, h_z, grid, failures)


def _phase_cell_safe(args):
    try:
        return _phase_cell(args), None
    except Exception as exc:  # noqa: BLE001 - cell failures must not kill the sweep
        return math.nan, f"{type(exc).__name__}: {exc}"
