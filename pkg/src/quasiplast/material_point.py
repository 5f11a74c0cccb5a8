"""Strain-driven single-point evolution with an exact energy ledger.

The total strain is prescribed at increasing sample times (piecewise linear
in between); each step solves the pointwise incremental minimization.  The
ledger tracks stored energy, cumulative dissipation and external work
(trapezoidal quadrature of sigma : deps), whose imbalance is the energy
residual reported per step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import constitutive, tensors
from .constitutive import Material

__all__ = ["StrainHistory", "PointRecord", "run_point", "energy_residual",
           "read_history_csv", "write_point_csv"]


@dataclass(frozen=True)
class StrainHistory:
    """Sampled total-strain path; times strictly increasing, t0 arbitrary."""

    dim: int
    times: np.ndarray
    strains: np.ndarray  # shape (nsteps, ncomp)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        strains = np.asarray(self.strains, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("history needs at least one sample time")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("sample times must be strictly increasing")
        if strains.shape != (len(times), tensors.ncomp(self.dim)):
            raise ValueError(
                f"strains must have shape ({len(times)}, {tensors.ncomp(self.dim)})"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "strains", strains)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class PointRecord:
    """Per-sample state and energy ledger of a strain-driven point."""

    dim: int
    times: np.ndarray
    strain: np.ndarray       # total strain per sample
    p: np.ndarray            # plastic strain per sample
    e: np.ndarray            # elastic strain per sample
    sigma: np.ndarray        # stress per sample
    stored: np.ndarray       # Q(e_i)
    dissipated: np.ndarray   # sum of H(dp) up to sample i
    work: np.ndarray         # trapezoidal sum of sigma : deps


def run_point(material: Material, history: StrainHistory) -> PointRecord:
    """March the incremental updates along a strain history.

    The first sample defines the initial state (p = deviatoric correction
    that minimizes energy at the initial strain is NOT applied: the point
    starts elastic, p0 = 0, and the first update happens at the second
    sample; the initial strain itself must be stable, which holds whenever
    its trial stress lies in the yield set).
    """
    if material.dim != history.dim:
        raise ValueError("material and history dimensions differ")
    nc = tensors.ncomp(history.dim)
    n = len(history)
    p = np.zeros((n, nc))
    e = np.zeros((n, nc))
    sig = np.zeros((n, nc))
    stored = np.zeros(n)
    diss = np.zeros(n)
    work = np.zeros(n)

    # Initial state: elastic response to the first strain sample.
    e[0] = history.strains[0]
    sig[0] = constitutive.stress_components(material.moduli, e[0])
    stored[0] = constitutive.quad_Q_components(material.moduli, e[0])
    if material.yield_surface.distance(tensors.deviator_components(sig[0], history.dim)) > 1e-9:
        raise ValueError("initial strain sample is not elastically admissible")

    for i in range(1, n):
        p_new, e_new, s_new, dH = constitutive.incremental_update_components(
            material, history.strains[i], p[i - 1]
        )
        p[i] = p_new
        e[i] = e_new
        sig[i] = s_new
        stored[i] = constitutive.quad_Q_components(material.moduli, e[i])
        diss[i] = diss[i - 1] + float(dH)
        deps = history.strains[i] - history.strains[i - 1]
        work[i] = work[i - 1] + 0.5 * float(
            tensors.inner(sig[i - 1] + sig[i], deps, history.dim)
        )

    return PointRecord(
        dim=history.dim,
        times=history.times.copy(),
        strain=history.strains.copy(),
        p=p,
        e=e,
        sigma=sig,
        stored=stored,
        dissipated=diss,
        work=work,
    )


def energy_residual(record: PointRecord) -> np.ndarray:
    """Per-sample imbalance Q_i + D_i - Q_0 - W_i (zero in exact balance)."""
    return record.stored + record.dissipated - record.stored[0] - record.work


def read_history_csv(path, dim: int) -> StrainHistory:
    """Read a history CSV with columns t, eps_11, eps_22[, eps_33], eps_12, ...

    The column count must be 1 + ncomp(dim); a header row is required.
    """
    nc = tensors.ncomp(dim)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError("empty history file")
        for row in reader:
            if not row:
                continue
            if len(row) != 1 + nc:
                raise ValueError(
                    f"expected {1 + nc} columns (t + {nc} strain components), got {len(row)}"
                )
            rows.append([float(x) for x in row])
    if not rows:
        raise ValueError("history file has no data rows")
    data = np.asarray(rows)
    return StrainHistory(dim=dim, times=data[:, 0], strains=data[:, 1:])


_COMP_NAMES = {2: ["11", "22", "12"], 3: ["11", "22", "33", "12", "13", "23"]}


def write_point_csv(path, record: PointRecord) -> None:
    """Write the point trace: t, p, sigma, Q, D, W, residual."""
    res = energy_residual(record)
    names = _COMP_NAMES[record.dim]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["t"]
            + [f"p_{c}" for c in names]
            + [f"sigma_{c}" for c in names]
            + ["stored", "dissipated", "work", "residual"]
        )
        for i, t in enumerate(record.times):
            writer.writerow(
                [repr(float(t))]
                + [repr(float(x)) for x in record.p[i]]
                + [repr(float(x)) for x in record.sigma[i]]
                + [repr(float(record.stored[i])), repr(float(record.dissipated[i])),
                   repr(float(record.work[i])), repr(float(res[i]))]
            )
