"""Post-hoc auditors of rate-form identities on a finished evolution.

Rates are represented by increments (the identities are 1-homogeneous in
the plastic rate, so every assertion is multiplied through by the step
length).  Checks: the dissipation identity H(dp) = sigma_D : dp (maximal
dissipation), the variational inequality against admissible equilibrated
test stresses, normality/yield residence of flowing increments, local
stress averages against the precise deviatoric stress representative
(strictly convex yield sets only), per-step power balance, and continuous
dependence of the solved elastic strain on the boundary datum.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensors
from .constitutive import VonMises, min_norm_subgradient
from .evolution import EvolutionRecord
from .scenario import Scenario, TimeProfile, assemble_load
from .solver import IncrementalSolver, SolverConfig

__all__ = [
    "CheckResult",
    "check_flow_rule",
    "check_variational_inequality",
    "check_normality",
    "precise_stress_candidate",
    "averaged_stress",
    "check_power_balance",
    "check_continuous_dependence",
    "write_verify_csv",
    "FLOW_THRESHOLD",
]

FLOW_THRESHOLD = 1e-14  # |dp| below this is treated as an elastic step


@dataclass(frozen=True)
class CheckResult:
    """One audited identity: worst residual and its location."""

    name: str
    passed: bool
    worst_residual: float
    worst_step: int
    worst_element: int
    detail: str = ""


def _stress_scale(record: EvolutionRecord) -> float:
    return max(
        1e-30,
        max(float(tensors.norm(s, 2).max(initial=0.0)) for s in record.sigma),
    )


def check_flow_rule(record: EvolutionRecord, tol: float = 1e-10) -> CheckResult:
    """Dissipation identity per step and element: 0 <= H(dp) - sigma_D:dp <= tol.

    The gap is nonnegative for any admissible stress; it vanishes exactly at
    minimizers, which is the weak form of maximal dissipation.  Gaps are
    normalized by |dp| times the run's stress scale; the worst normalized
    gap and its location are reported.
    """
    scen = record.scenario
    ys = scen.material.yield_surface
    scale = _stress_scale(record)
    worst = 0.0
    wstep = welem = -1
    passed = True
    for i in range(1, len(record.times)):
        dp = record.triples[i].p - record.triples[i - 1].p
        dpn = tensors.norm(dp, 2)
        mask = dpn > FLOW_THRESHOLD
        if not np.any(mask):
            continue
        sig_d = tensors.deviator_components(record.sigma[i], 2)
        gaps = ys.support_field(dp, scen.yield_scale) - tensors.inner(sig_d, dp, 2)
        norm_gap = gaps[mask] / (dpn[mask] * scale)
        e_local = int(np.argmax(np.abs(norm_gap)))
        e = int(np.nonzero(mask)[0][e_local])
        if abs(norm_gap[e_local]) > worst:
            worst, wstep, welem = float(abs(norm_gap[e_local])), i, e
        if np.any(norm_gap > tol) or np.any(norm_gap < -tol):
            passed = False
    return CheckResult(
        name="flow_rule",
        passed=passed,
        worst_residual=worst,
        worst_step=wstep,
        worst_element=welem,
        detail=f"stress scale {scale:g}",
    )


def precise_stress_candidate(record: EvolutionRecord, step: int) -> dict:
    """sigma_hat_D candidates on flowing elements at one step.

    Where flow concentrates, the precise deviatoric stress representative
    is the minimum-norm element of the support-function subdifferential at
    the flow direction (for strictly convex sets, its gradient).  Returns
    {element: component vector}.
    """
    scen = record.scenario
    ys = scen.material.yield_surface
    dp = record.triples[step].p - record.triples[step - 1].p
    dpn = tensors.norm(dp, 2)
    out = {}
    for e in np.nonzero(dpn > FLOW_THRESHOLD)[0]:
        rep = min_norm_subgradient(ys, dp[e] / dpn[e])
        out[int(e)] = float(scen.yield_scale[e]) * rep.comp
    return out


def check_variational_inequality(
    record: EvolutionRecord,
    n_samples: int = 20,
    tol: float = 1e-9,
    seed: int = 715,
) -> CheckResult:
    """<sigma_D - tau_D | dp> >= -tol for admissible equilibrated tau.

    Test stresses: the safe-load field rho(t_i) and random convex
    combinations theta*rho + (1-theta)*sigma_i (both equilibrated with the
    same load, and admissible by convexity).
    """
    scen = record.scenario
    rng = np.random.default_rng(seed)
    scale = _stress_scale(record)
    worst = 0.0
    wstep = -1
    passed = True
    for i in range(1, len(record.times)):
        dp = record.triples[i].p - record.triples[i - 1].p
        if float(tensors.norm(dp, 2).max(initial=0.0)) <= FLOW_THRESHOLD:
            continue
        sig = record.sigma[i]
        rho = scen.rho(record.times[i])
        thetas = np.concatenate([[1.0], rng.uniform(0.0, 1.0, n_samples)])
        for theta in thetas:
            tau = theta * rho + (1.0 - theta) * sig
            tau_d = tensors.deviator_components(tau, 2)
            sig_d = tensors.deviator_components(sig, 2)
            pairing = scen.area_inner(sig_d - tau_d, dp)
            if -pairing > worst:
                worst, wstep = -pairing, i
            if pairing < -tol * scale:
                passed = False
    return CheckResult(
        name="variational_inequality",
        passed=passed,
        worst_residual=max(worst, 0.0),
        worst_step=wstep,
        worst_element=-1,
        detail=f"{n_samples} random combinations per step",
    )


def check_normality(
    record: EvolutionRecord, tol: float = 1e-9, angle_tol: float = 1e-6
) -> CheckResult:
    """Flowing increments lie in the normal cone at the step-end stress.

    For the ball: the deviatoric stress sits on the yield surface and is
    aligned with dp within ``angle_tol`` radians.
    """
    scen = record.scenario
    ys = scen.material.yield_surface
    worst = 0.0
    wstep = welem = -1
    passed = True
    for i in range(1, len(record.times)):
        dp = record.triples[i].p - record.triples[i - 1].p
        dpn = tensors.norm(dp, 2)
        flowing = np.nonzero(dpn > FLOW_THRESHOLD * max(1.0, float(dpn.max(initial=0.0))))[0]
        if len(flowing) == 0:
            continue
        sig_d = tensors.deviator_components(record.sigma[i], 2)
        for e in flowing:
            sc = float(scen.yield_scale[e])
            if isinstance(ys, VonMises):
                r = ys.radius * sc
                residence = abs(float(tensors.norm(sig_d[e], 2)) - r)
                cosang = float(
                    tensors.inner(sig_d[e], dp[e], 2)
                    / (tensors.norm(sig_d[e], 2) * dpn[e])
                )
                angle = float(np.arccos(np.clip(cosang, -1.0, 1.0)))
                res = max(residence / max(r, 1e-30), angle / max(angle_tol, 1e-30) * tol)
                ok = residence <= tol * max(1.0, r) and angle <= angle_tol
            else:
                ok = ys.normal_cone_contains(sig_d[e], dp[e], tol, sc)
                res = 0.0 if ok else ys.distance(sig_d[e], sc) + tol
            if res > worst:
                worst, wstep, welem = res, i, int(e)
            if not ok:
                passed = False
    return CheckResult(
        name="normality",
        passed=passed,
        worst_residual=worst,
        worst_step=wstep,
        worst_element=welem,
    )


@dataclass(frozen=True)
class AveragedStressReport:
    """Local stress averages vs the precise deviatoric representative."""

    radius: float
    skipped: bool                 # True for yield sets that are not strictly convex
    sigma_avg_dev: np.ndarray     # (ksteps+1, E, ncomp)
    discrepancy_max: np.ndarray   # per step, max over flowing elements (nan if none)


def averaged_stress(record: EvolutionRecord, radius: float) -> AveragedStressReport:
    """Average stress over centroid balls; compare at flowing elements.

    For a strictly convex yield set the precise representative of the
    deviatoric stress where flow concentrates is the support-function
    gradient at the flow direction; the discrepancy between the local
    average and that representative shrinks with the averaging radius.
    Skipped (averages still returned) for polyhedral yield sets.
    """
    if radius <= 0.0:
        raise ValueError("averaging radius must be positive")
    scen = record.scenario
    ys = scen.material.yield_surface
    strictly_convex = isinstance(ys, VonMises)
    cent = scen.mesh.centroids
    areas = scen.mesh.areas
    d2 = ((cent[:, None, :] - cent[None, :, :]) ** 2).sum(axis=2)
    inball = d2 <= radius * radius  # includes the element itself
    wsum = inball @ areas
    k1 = len(record.times)
    E = scen.mesh.n_elements
    avg_dev = np.zeros((k1, E, tensors.ncomp(2)))
    disc = np.full(k1, np.nan)
    for i in range(k1):
        sig = record.sigma[i]
        avg = (inball @ (areas[:, None] * sig)) / wsum[:, None]
        avg_dev[i] = tensors.deviator_components(avg, 2)
        if not strictly_convex or i == 0:
            continue
        dp = record.triples[i].p - record.triples[i - 1].p
        dpn = tensors.norm(dp, 2)
        flowing = np.nonzero(dpn > FLOW_THRESHOLD * max(1.0, float(dpn.max(initial=0.0))))[0]
        if len(flowing) == 0:
            continue
        worst = 0.0
        for e in flowing:
            rep = (ys.radius * float(scen.yield_scale[e]) / dpn[e]) * dp[e]
            worst = max(worst, float(tensors.norm(avg_dev[i, e] - rep, 2)))
        disc[i] = worst
    return AveragedStressReport(
        radius=radius,
        skipped=not strictly_convex,
        sigma_avg_dev=avg_dev,
        discrepancy_max=disc,
    )


def check_power_balance(record: EvolutionRecord) -> np.ndarray:
    """Per-step residual of the incremental power balance.

    |<sigma_i|de> + H(dp) - <sigma_i|dEw> + <L_i|dw> - <L_i|du>| is a
    first-order quadrature error that shrinks under grid refinement.
    """
    scen = record.scenario
    out = np.zeros(len(record.times))
    Ew_prev = scen.Ew(record.times[0])
    w_prev = scen.w_nodal(record.times[0])
    for i in range(1, len(record.times)):
        t = record.times[i]
        Ew, w = scen.Ew(t), scen.w_nodal(t)
        de = record.triples[i].e - record.triples[i - 1].e
        dp = record.triples[i].p - record.triples[i - 1].p
        du = record.triples[i].u - record.triples[i - 1].u
        F = assemble_load(scen, t)
        out[i] = (
            scen.area_inner(record.sigma[i], de)
            + scen.dissipation(dp)
            - scen.area_inner(record.sigma[i], Ew - Ew_prev)
            + float(F @ (w - w_prev))
            - float(F @ du)
        )
        Ew_prev, w_prev = Ew, w
    return out


@dataclass(frozen=True)
class ContinuousDependenceReport:
    """Norm-topology dependence of the solved elastic strain on the datum."""

    delta_e: float
    delta_Ew: float
    delta_p1: float
    bound: float
    constant: float

    @property
    def ok(self) -> bool:
        return self.delta_e <= self.bound + 1e-12


def check_continuous_dependence(
    scenario: Scenario,
    delta: float,
    pattern: np.ndarray | None = None,
    t: float = 0.0,
    p_prev: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
) -> ContinuousDependenceReport:
    """Solve one increment for base and w-perturbed data and check the bound

        ||e2 - e1||_2 <= C (||Ew2 - Ew1||_2 + ||p2 - p1||_1 + ||p2 - p1||_1^(1/2))

    with C = max(beta_C/alpha_C, sqrt(R_K_max / alpha_C)), which follows
    from the Euler conditions of the two solved (stable) states.
    """
    mesh = scenario.mesh
    if pattern is None:
        pattern = np.zeros((mesh.n_nodes, 2))
        pattern[:, 0] = mesh.nodes[:, 1]  # default: shear-like datum bump
    moduli = scenario.material.moduli
    if p_prev is None:
        p_prev = np.zeros((mesh.n_elements, tensors.ncomp(2)))

    base = IncrementalSolver(scenario, cfg)
    tri1, _ = base.solve(t, p_prev)

    pert = replace(
        scenario,
        w_terms=tuple(scenario.w_terms)
        + ((delta * np.asarray(pattern, dtype=float), TimeProfile.constant(scenario.T)),),
    )
    tri2, _ = IncrementalSolver(pert, cfg).solve(t, p_prev)

    dEw = pert.Ew(t) - scenario.Ew(t)
    de = scenario.l2norm(tri2.e - tri1.e)
    dEw_norm = scenario.l2norm(dEw)
    dp1 = scenario.norm1(tri2.p - tri1.p)
    R = scenario.material.yield_surface.R_bound * float(scenario.yield_scale.max())
    C = max(moduli.beta_C / moduli.alpha_C, float(np.sqrt(R / moduli.alpha_C)))
    bound = C * (dEw_norm + dp1 + np.sqrt(dp1))
    return ContinuousDependenceReport(
        delta_e=de, delta_Ew=dEw_norm, delta_p1=dp1, bound=float(bound), constant=C
    )


def write_verify_csv(path, results: list) -> None:
    """One row per check: name, worst step/element, residual, pass flag."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "step", "worst_element", "residual", "pass"])
        for r in results:
            w.writerow(
                [r.name, r.worst_step, r.worst_element, repr(float(r.worst_residual)),
                 int(r.passed)]
            )
