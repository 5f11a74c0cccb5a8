"""Time marching of the incremental scheme, energy ledger, and audits.

Each grid point stores the solved triple, the stress, and the running
energy ledger.  Work integrals are kept twice: endpoint Riemann sums (the
exact quadrature under which the per-step minimality argument yields the
discrete energy inequality with remainder delta_k), and trapezoidal sums
used by the continuous energy-balance residual.  delta_k is computed from
the grid's step modulus of the boundary-datum strain rate:

    delta_k = beta_C * max_r ||dEw_r||_2 * sum_r ||dEw_r||_2 .
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import constitutive, tensors
from .scenario import Scenario, assemble_load
from .solver import DiscreteTriple, IncrementalSolver, NonConvergenceError, SolverConfig

__all__ = [
    "TimeGrid",
    "EvolutionRecord",
    "elastic_initial_state",
    "run_evolution",
    "discrete_energy_audit",
    "energy_balance_residual",
    "convergence_study",
    "ConvergenceStudy",
    "write_energies_csv",
    "write_fields_csv",
    "write_study_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing grid 0 = t0 < ... < tk = T."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("grid needs at least two points")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("grid must start at 0 and increase strictly")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, k: int) -> "TimeGrid":
        if k < 1:
            raise ValueError("need at least one step")
        return cls(np.linspace(0.0, T, k + 1))

    @property
    def max_step(self) -> float:
        return float(np.diff(self.times).max())

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class EvolutionRecord:
    """Per-grid-point states and the energy ledger of one evolution run."""

    scenario: Scenario
    grid: TimeGrid
    triples: list                    # DiscreteTriple per grid point
    sigma: list                      # (E, ncomp) stress per grid point
    reports: list                    # StepReport per step (index 1..k)
    stored: np.ndarray               # Q_i
    dissipated: np.ndarray           # D_i = sum_{r<=i} H(dp_r)
    diss_minus_rho: np.ndarray       # sum_{r<=i} { H(dp_r) - <rho_D(t_r)|dp_r> }
    work_sigma_Ew: np.ndarray        # endpoint sum of <sigma|dEw>
    work_rho_e: np.ndarray           # endpoint sum of <drho|e - Ew>
    trap_sigma_Ew: np.ndarray        # trapezoidal <sigma|dEw>
    trap_load_wdot: np.ndarray       # trapezoidal <L|w_dot>
    trap_loadrate_u: np.ndarray      # trapezoidal <L_dot|u>
    load_potential: np.ndarray       # F(t_i) . u_i
    delta_k: float

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def elastic_initial_state(
    scenario: Scenario, cfg: SolverConfig | None = None, force: bool = False
) -> DiscreteTriple:
    """Stable initial triple: solve the increment at t=0 from p = 0."""
    solver = IncrementalSolver(scenario, cfg)
    nc = tensors.ncomp(2)
    p0 = np.zeros((scenario.mesh.n_elements, nc))
    triple, _ = solver.solve(0.0, p0, force=force)
    return triple


def run_evolution(
    scenario: Scenario,
    grid: TimeGrid,
    initial: DiscreteTriple | None = None,
    cfg: SolverConfig | None = None,
    force: bool = False,
) -> EvolutionRecord:
    """March the incremental scheme over the grid from a stable initial state."""
    from .solver import euler_residuals

    cfg = cfg or SolverConfig()
    if abs(grid.times[-1] - scenario.T) > 1e-12 * max(1.0, scenario.T):
        raise ValueError("grid must end at the scenario's final time")
    solver = IncrementalSolver(scenario, cfg)
    if initial is None:
        initial = elastic_initial_state(scenario, cfg, force=force)
    else:
        rep0 = euler_residuals(scenario, 0.0, initial)
        if not rep0.converged and not force:
            raise ValueError(
                "initial triple is not stable at t=0 "
                f"(equilibrium residual {rep0.equilibrium_residual:g}, "
                f"admissibility margin {rep0.admissibility_margin:g}); "
                "pass force=True to override"
            )

    times = grid.times
    k = len(times) - 1
    moduli = scenario.material.moduli
    area_Q = lambda e: float(scenario.mesh.areas @ constitutive.quad_Q_components(moduli, e))

    triples = [initial]
    sigma = [constitutive.stress_components(moduli, initial.e)]
    reports = []
    stored = np.zeros(k + 1)
    diss = np.zeros(k + 1)
    diss_rho = np.zeros(k + 1)
    w_sig = np.zeros(k + 1)
    w_rho = np.zeros(k + 1)
    tb_sig = np.zeros(k + 1)
    tb_lw = np.zeros(k + 1)
    tb_lu = np.zeros(k + 1)
    pot = np.zeros(k + 1)

    Ew_prev = scenario.Ew(times[0])
    F_prev = assemble_load(scenario, times[0])
    rho_prev = scenario.rho(times[0])
    w_prev = scenario.w_nodal(times[0])
    stored[0] = area_Q(initial.e)
    pot[0] = float(F_prev @ initial.u)

    dEw_norms = []
    for i in range(1, k + 1):
        t = times[i]
        try:
            triple, report = solver.solve(
                t, triples[i - 1].p, warm_start=triples[i - 1], force=force
            )
        except NonConvergenceError as exc:
            exc.step_index = i
            raise
        sig = constitutive.stress_components(moduli, triple.e)
        Ew = scenario.Ew(t)
        F = assemble_load(scenario, t)
        rho = scenario.rho(t)
        w = scenario.w_nodal(t)
        dp = triple.p - triples[i - 1].p
        dEw = Ew - Ew_prev
        rho_d = tensors.deviator_components(rho, 2)

        stored[i] = area_Q(triple.e)
        h_incr = scenario.dissipation(dp)
        diss[i] = diss[i - 1] + h_incr
        diss_rho[i] = diss_rho[i - 1] + h_incr - scenario.area_inner(rho_d, dp)
        w_sig[i] = w_sig[i - 1] + scenario.area_inner(sigma[i - 1], dEw)
        w_rho[i] = w_rho[i - 1] + scenario.area_inner(
            rho - rho_prev, triples[i - 1].e - Ew_prev
        )
        tb_sig[i] = tb_sig[i - 1] + 0.5 * scenario.area_inner(sigma[i - 1] + sig, dEw)
        tb_lw[i] = tb_lw[i - 1] + 0.5 * float((F_prev + F) @ (w - w_prev))
        tb_lu[i] = tb_lu[i - 1] + 0.5 * float((F - F_prev) @ (triples[i - 1].u + triple.u))
        pot[i] = float(F @ triple.u)

        dEw_norms.append(scenario.l2norm(dEw))
        triples.append(triple)
        sigma.append(sig)
        reports.append(report)
        Ew_prev, F_prev, rho_prev, w_prev = Ew, F, rho, w

    dEw_norms = np.asarray(dEw_norms)
    beta = moduli.beta_C
    delta_k = float(beta * dEw_norms.max(initial=0.0) * dEw_norms.sum())

    return EvolutionRecord(
        scenario=scenario,
        grid=grid,
        triples=triples,
        sigma=sigma,
        reports=reports,
        stored=stored,
        dissipated=diss,
        diss_minus_rho=diss_rho,
        work_sigma_Ew=w_sig,
        work_rho_e=w_rho,
        trap_sigma_Ew=tb_sig,
        trap_load_wdot=tb_lw,
        trap_loadrate_u=tb_lu,
        load_potential=pot,
        delta_k=delta_k,
    )


def discrete_energy_audit(record: EvolutionRecord) -> np.ndarray:
    """Left-minus-right side of the discrete energy inequality, per grid point.

    The inequality bounds, at each grid point, the stored energy plus the
    margin-corrected dissipation by the initial value plus the endpoint-sum
    work terms, up to the remainder delta_k.  Positive gaps larger than
    delta_k (plus rounding) indicate a non-minimizing step.
    """
    scen = record.scenario
    times = record.times
    gaps = np.zeros(len(times))
    Ew0 = scen.Ew(times[0])
    rho0 = scen.rho(times[0])
    base = record.stored[0] - scen.area_inner(rho0, record.triples[0].e - Ew0)
    for i, t in enumerate(times):
        if i == 0:
            continue
        Ew = scen.Ew(t)
        rho = scen.rho(t)
        lhs = (
            record.stored[i]
            - scen.area_inner(rho, record.triples[i].e - Ew)
            + record.diss_minus_rho[i]
        )
        rhs = base - record.work_rho_e[i] + record.work_sigma_Ew[i]
        gaps[i] = lhs - rhs
    return gaps


def energy_balance_residual(record: EvolutionRecord) -> np.ndarray:
    """Residual of the continuous energy balance with trapezoidal work terms.

    residual_i = [Q_i + D_i - <L_i|u_i>] - [Q_0 - <L_0|u_0>]
                 - sum_j {<sigma|dEw> - <L|dw> - <dL|u>}   (trapezoid).
    """
    lhs = record.stored + record.dissipated - record.load_potential
    rhs = (
        record.stored[0]
        - record.load_potential[0]
        + record.trap_sigma_Ew
        - record.trap_load_wdot
        - record.trap_loadrate_u
    )
    return lhs - rhs


@dataclass(frozen=True)
class ConvergenceStudy:
    """Cauchy-decay data across nested grid refinements.

    ``sigma_cauchy[j]`` is the largest (over probe times) area-weighted L2
    distance between the stresses of runs j and j+1; Cauchy decay of these
    columns is the desk-scale surrogate for convergence of the scheme (the
    continuum limit itself is not certifiable here).
    """

    grid_sizes: np.ndarray
    probe_times: np.ndarray
    sigma_cauchy: np.ndarray        # (n_runs-1,)
    dissipation_gap: np.ndarray     # (n_runs-1,) |D_k - D_{k'}| at T
    balance_max: np.ndarray         # (n_runs,) max |energy balance residual|
    records: list = field(repr=False, default=None)


def _state_at(record: EvolutionRecord, t: float):
    """Piecewise-constant interpolant index: largest grid point <= t."""
    i = int(np.searchsorted(record.times, t + 1e-12, side="right")) - 1
    return max(i, 0)


def convergence_study(
    scenario: Scenario,
    grids: list,
    initial: DiscreteTriple | None = None,
    cfg: SolverConfig | None = None,
    probe_times: np.ndarray | None = None,
    keep_records: bool = False,
) -> ConvergenceStudy:
    """Run nested grids and collect Cauchy norms at probe times."""
    if len(grids) < 2:
        raise ValueError("a convergence study needs at least two grids")
    records = [run_evolution(scenario, g, initial, cfg) for g in grids]
    probes = grids[0].times if probe_times is None else np.asarray(probe_times, dtype=float)
    n = len(records)
    sig_cauchy = np.zeros(n - 1)
    diss_gap = np.zeros(n - 1)
    for j in range(n - 1):
        worst = 0.0
        for t in probes:
            a = records[j].sigma[_state_at(records[j], t)]
            b = records[j + 1].sigma[_state_at(records[j + 1], t)]
            worst = max(worst, scenario.l2norm(a - b))
        sig_cauchy[j] = worst
        diss_gap[j] = abs(records[j].dissipated[-1] - records[j + 1].dissipated[-1])
    balance = np.array(
        [float(np.abs(energy_balance_residual(r)).max()) for r in records]
    )
    return ConvergenceStudy(
        grid_sizes=np.array([len(g) - 1 for g in grids]),
        probe_times=probes,
        sigma_cauchy=sig_cauchy,
        dissipation_gap=diss_gap,
        balance_max=balance,
        records=records if keep_records else None,
    )


# -- CSV output ----------------------------------------------------------------


def write_energies_csv(path, record: EvolutionRecord) -> None:
    """Ledger table: one row per grid point (see README for columns)."""
    balance = energy_balance_residual(record)
    gaps = discrete_energy_audit(record)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            [
                "t", "stored", "dissipated", "load_potential",
                "work_sigma_Ew_endpoint", "work_rho_e_endpoint",
                "trap_sigma_Ew", "trap_load_wdot", "trap_loadrate_u",
                "balance_residual", "discrete_gap", "delta_k",
            ]
        )
        for i, t in enumerate(record.times):
            w.writerow(
                [
                    repr(float(t)),
                    repr(float(record.stored[i])),
                    repr(float(record.dissipated[i])),
                    repr(float(record.load_potential[i])),
                    repr(float(record.work_sigma_Ew[i])),
                    repr(float(record.work_rho_e[i])),
                    repr(float(record.trap_sigma_Ew[i])),
                    repr(float(record.trap_load_wdot[i])),
                    repr(float(record.trap_loadrate_u[i])),
                    repr(float(balance[i])),
                    repr(float(gaps[i])),
                    repr(float(record.delta_k)),
                ]
            )


def write_fields_csv(path, record: EvolutionRecord, step: int, tol_yield: float = 1e-9) -> None:
    """Elementwise stress/plastic-strain table at one grid point."""
    scen = record.scenario
    sig = record.sigma[step]
    p = record.triples[step].p
    sig_d = tensors.deviator_components(sig, 2)
    dev_norm = tensors.norm(sig_d, 2)
    ys = scen.material.yield_surface
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            [
                "element", "sigma_11", "sigma_22", "sigma_12",
                "p_11", "p_22", "p_12", "dev_norm_sigma", "yield_flag",
            ]
        )
        for e in range(scen.mesh.n_elements):
            on_yield = ys.boundary_gap(sig_d[e], float(scen.yield_scale[e])) <= tol_yield
            w.writerow(
                [e]
                + [repr(float(x)) for x in sig[e]]
                + [repr(float(x)) for x in p[e]]
                + [repr(float(dev_norm[e])), int(on_yield)]
            )


def write_study_csv(path, study: ConvergenceStudy) -> None:
    """Refinement table: Cauchy norms per consecutive grid pair."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_coarse", "k_fine", "sigma_cauchy", "dissipation_gap",
                    "balance_max_coarse", "balance_max_fine"])
        for j in range(len(study.sigma_cauchy)):
            w.writerow(
                [
                    int(study.grid_sizes[j]),
                    int(study.grid_sizes[j + 1]),
                    repr(float(study.sigma_cauchy[j])),
                    repr(float(study.dissipation_gap[j])),
                    repr(float(study.balance_max[j])),
                    repr(float(study.balance_max[j + 1])),
                ]
            )
