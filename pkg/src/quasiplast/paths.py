"""Variation and dissipation-variation of sampled plastic-strain paths.

A sampled path carries snapshots of a deviatoric tensor field at increasing
times; fields are weighted by element measure (a single point has weight 1).
Between samples the path is treated as piecewise constant with the jump at
the later sample, so partition sums over the stored samples realize the
supremum over refinements.  For paths sampled from a smooth generator the
sample-partition sum is only a lower bound of the continuum dissipation;
``check_derivative_formula`` measures that gap against the quadrature of the
dissipation density of the analytic rate, which must vanish under
refinement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensors
from .constitutive import YieldSurface

__all__ = ["SampledPath", "total_variation", "H_variation", "check_derivative_formula"]


@dataclass(frozen=True)
class SampledPath:
    """Snapshots of a deviatoric field: values shape (ntimes, npoints, ncomp)."""

    dim: int
    times: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None = None  # element measures; ones if omitted

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:  # single-point path: promote to one "element"
            values = values[:, None, :]
        if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        if values.shape[0] != len(times) or values.shape[2] != tensors.ncomp(self.dim):
            raise ValueError("values must have shape (ntimes, npoints, ncomp)")
        weights = self.weights
        if weights is None:
            weights = np.ones(values.shape[1])
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (values.shape[1],):
            raise ValueError("one weight per field point is required")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    def _slice(self, a: float, b: float) -> np.ndarray:
        t = self.times
        if a > b:
            raise ValueError("interval must satisfy a <= b")
        if a < t[0] - 1e-12 or b > t[-1] + 1e-12:
            raise ValueError(f"interval [{a}, {b}] outside sampled range [{t[0]}, {t[-1]}]")
        # Piecewise-constant convention: increments at sample times in (a, b].
        return np.nonzero((t > a) & (t <= b))[0]


def _weighted_norm1(path: SampledPath, incr: np.ndarray) -> float:
    """Integral norm of a field increment: sum_e weight_e |incr_e|."""
    return float(path.weights @ tensors.norm(incr, path.dim))


def total_variation(path: SampledPath, a: float | None = None, b: float | None = None) -> float:
    """Sum of integral norms of increments over samples in [a, b]."""
    a = path.times[0] if a is None else a
    b = path.times[-1] if b is None else b
    idx = path._slice(a, b)
    total = 0.0
    for i in idx:
        if i == 0:
            continue
        total += _weighted_norm1(path, path.values[i] - path.values[i - 1])
    return total


def H_variation(
    path: SampledPath,
    yield_surface: YieldSurface,
    a: float | None = None,
    b: float | None = None,
) -> float:
    """Dissipation over [a, b]: partition sum of the support function of jumps."""
    a = path.times[0] if a is None else a
    b = path.times[-1] if b is None else b
    idx = path._slice(a, b)
    total = 0.0
    for i in idx:
        if i == 0:
            continue
        incr = path.values[i] - path.values[i - 1]
        total += float(path.weights @ yield_surface.support_field(incr))
    return total


def check_derivative_formula(
    path: SampledPath,
    yield_surface: YieldSurface,
    rate: Callable[[float], np.ndarray],
) -> float:
    """Gap between the sampled dissipation and the rate-quadrature oracle.

    ``rate(t)`` returns the analytic time derivative of the path generator
    (same field shape as one snapshot).  The oracle integrates the support
    function of the rate with the midpoint rule on the sample intervals; the
    returned absolute gap vanishes under refinement for smooth generators.
    """
    t = path.times
    diss_samples = H_variation(path, yield_surface)
    quad = 0.0
    for i in range(1, len(t)):
        dt = t[i] - t[i - 1]
        r = np.asarray(rate(0.5 * (t[i] + t[i - 1])), dtype=float)
        if r.ndim == 1:
            r = r[None, :]
        quad += dt * float(path.weights @ yield_surface.support_field(r))
    return abs(diss_samples - quad)
