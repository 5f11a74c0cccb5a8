"""One incremental minimization over the discrete admissible set.

The step energy

    E(u, p) = sum_e area_e [ Q(eps_e(u) - p_e) + H(p_e - p_prev_e) ] - F(t).u

is minimized by block-coordinate descent: a sparse SPD solve in u at fixed
p, then the exact pointwise return map in p at fixed u.  Both half-steps
are exact minimizations, so the energy is non-increasing; convergence is
declared when the relative energy decrease and the assembled equilibrium
residual drop below their thresholds.  The converged triple satisfies the
per-step optimality conditions: stress admissibility, discrete equilibrium
against the load, and the flow-rule identity H(dp) = sigma_D : dp.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import constitutive, mesh as meshmod, tensors
from .scenario import Scenario, assemble_load, check_safe_load

__all__ = [
    "SolverConfig",
    "StepReport",
    "DiscreteTriple",
    "IncrementalSolver",
    "solve_increment",
    "euler_residuals",
    "NonConvergenceError",
    "SingularSystemError",
    "SafeLoadError",
]


class NonConvergenceError(RuntimeError):
    """Iteration cap reached with residuals above tolerance.

    Carries the best iterate (``triple``) and its ``report``.
    """

    def __init__(self, message, triple=None, report=None, step_index=None):
        super().__init__(message)
        self.triple = triple
        self.report = report
        self.step_index = step_index


class SingularSystemError(RuntimeError):
    """The constrained system leaves rigid modes free (empty Dirichlet set)."""


class SafeLoadError(RuntimeError):
    """Safe-load audit failed at the requested time (pass force=True to override)."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    tol_energy: float = 1e-12   # relative energy-decrease stop threshold
    tol_res: float = 1e-9       # equilibrium/optimality residual threshold
    max_outer: int = 10_000
    relaxation: float = 1.0     # over-relaxation factor on the p half-step

    def __post_init__(self):
        if self.tol_energy <= 0.0 or self.tol_res <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not (0.0 < self.relaxation < 2.0):
            raise ValueError("relaxation must lie in (0, 2)")


@dataclass(frozen=True)
class DiscreteTriple:
    """Displacement, elementwise elastic and plastic strain with e = Eu - p."""

    u: np.ndarray
    e: np.ndarray
    p: np.ndarray

    @classmethod
    def zero(cls, mesh: meshmod.Mesh) -> "DiscreteTriple":
        nc = tensors.ncomp(2)
        return cls(
            u=np.zeros(mesh.n_dofs),
            e=np.zeros((mesh.n_elements, nc)),
            p=np.zeros((mesh.n_elements, nc)),
        )


@dataclass(frozen=True)
class StepReport:
    """Residuals and diagnostics of one incremental solve."""

    iterations: int
    energy: float                 # Q(e) + H(p - p_prev) - <L|u> at the iterate
    equilibrium_residual: float   # |B^T sigma - F| on free dofs
    gamma1_residual: float        # same restricted to gamma1-incident dofs
    admissibility_margin: float   # max_e dist(sigma_D, K_e)
    flow_rule_residual: float     # max_e |H(dp) - sigma_D : dp|
    compatibility_residual: float  # max_e |strain(u) - p - e|
    converged: bool
    energy_history: np.ndarray = field(repr=False, default=None)


class IncrementalSolver:
    """Caches the stiffness factorization for repeated solves on a scenario."""

    def __init__(self, scenario: Scenario, cfg: SolverConfig | None = None):
        self.scenario = scenario
        self.cfg = cfg or SolverConfig()
        self.mesh = scenario.mesh
        self.moduli = scenario.material.moduli
        if len(scenario.dirichlet_dofs) == 0:
            raise SingularSystemError("no Dirichlet dofs: rigid modes unconstrained")
        self._assemble()

    def _assemble(self):
        m = self.mesh
        D = self.moduli.voigt_matrix()
        W = np.diag(tensors.component_weights(2))
        ke = np.einsum("e,ecd,cf,efg->edg", m.areas, m.B, W @ D, m.B)
        rows = np.repeat(m.element_dofs, 6, axis=1).ravel()
        cols = np.tile(m.element_dofs, (1, 6)).ravel()
        K = sparse.coo_matrix(
            (ke.ravel(), (rows, cols)), shape=(m.n_dofs, m.n_dofs)
        ).tocsc()
        fd = self.scenario.free_dofs
        dd = self.scenario.dirichlet_dofs
        self.K = K
        self.K_ff = K[fd][:, fd]
        self.K_fc = K[fd][:, dd]
        try:
            self.lu = splu(self.K_ff.tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(f"stiffness factorization failed: {exc}") from exc
        # gamma1-incident free dofs, for the traction-mismatch diagnostic
        g1 = self.mesh.edges_with_label(meshmod.GAMMA1)
        g1_nodes = np.unique(self.mesh.edges[g1].ravel()) if len(g1) else np.array([], dtype=int)
        g1_dofs = np.concatenate([2 * g1_nodes, 2 * g1_nodes + 1]) if len(g1_nodes) else np.array([], dtype=int)
        self._g1_free = np.intersect1d(g1_dofs, fd)

    # -- pieces --------------------------------------------------------------

    def _solve_u(self, p: np.ndarray, F: np.ndarray, u_c: np.ndarray) -> np.ndarray:
        """Minimize the quadratic part over u at fixed p (exact solve)."""
        rhs_full = F + meshmod.scatter_internal_force(
            self.mesh, 2.0 * self.moduli.mu * p
        )
        fd, dd = self.scenario.free_dofs, self.scenario.dirichlet_dofs
        rhs = rhs_full[fd] - self.K_fc @ u_c
        u = np.zeros(self.mesh.n_dofs)
        u[dd] = u_c
        u[fd] = self.lu.solve(rhs)
        return u

    def step_energy(self, u, e, p, p_prev, F) -> float:
        q = float(
            self.mesh.areas @ constitutive.quad_Q_components(self.moduli, e)
        )
        h = self.scenario.dissipation(p - p_prev)
        return q + h - float(F @ u)

    def _residuals(self, u, e, p, p_prev, F):
        sig = constitutive.stress_components(self.moduli, e)
        r = meshmod.scatter_internal_force(self.mesh, sig) - F
        eq = float(np.linalg.norm(r[self.scenario.free_dofs]))
        g1 = float(np.linalg.norm(r[self._g1_free])) if len(self._g1_free) else 0.0
        sig_d = tensors.deviator_components(sig, 2)
        ys = self.scenario.material.yield_surface
        if isinstance(ys, constitutive.VonMises):
            margins = np.maximum(
                tensors.norm(sig_d, 2) - ys.radius * self.scenario.yield_scale, 0.0
            )
        else:
            margins = np.array(
                [
                    ys.distance(sig_d[i], float(self.scenario.yield_scale[i]))
                    for i in range(self.mesh.n_elements)
                ]
            )
        dp = p - p_prev
        hvals = ys.support_field(dp, self.scenario.yield_scale)
        gaps = np.abs(hvals - tensors.inner(sig_d, dp, 2))
        compat = meshmod.strain(self.mesh, u) - p - e
        return eq, g1, float(np.max(margins)), float(gaps.max(initial=0.0)), float(
            np.abs(compat).max(initial=0.0)
        )

    # -- the solve -------------------------------------------------------------

    def solve(
        self,
        t: float,
        p_prev: np.ndarray,
        warm_start: DiscreteTriple | None = None,
        force: bool = False,
    ):
        """Solve the incremental problem at time t from plastic strain p_prev."""
        scen = self.scenario
        if not force:
            report = check_safe_load(scen, t)
            if not report.ok:
                raise SafeLoadError(
                    f"safe-load condition fails at t={t:g} "
                    f"(margin violation {report.margin_violation:g}, "
                    f"equilibrium residual {report.equilibrium_residual:g})",
                    report,
                )
        p_prev = np.asarray(p_prev, dtype=float)
        F = assemble_load(scen, t)
        w = scen.w_nodal(t)
        u_c = w[scen.dirichlet_dofs]
        res_scale = max(1.0, float(np.linalg.norm(F)), float(np.abs(self.K @ w).max()))

        p = warm_start.p.copy() if warm_start is not None else p_prev.copy()
        energy_prev = np.inf
        history = []
        relax = self.cfg.relaxation
        converged = False
        iterations = 0
        for it in range(1, self.cfg.max_outer + 1):
            iterations = it
            u = self._solve_u(p, F, u_c)
            eps = meshmod.strain(self.mesh, u)
            p_ret, e_ret, _, _ = constitutive.incremental_update_components(
                scen.material, eps, p_prev, scen.yield_scale
            )
            p_new = p + relax * (p_ret - p) if relax != 1.0 else p_ret
            e_new = eps - p_new
            energy = self.step_energy(u, e_new, p_new, p_prev, F)
            history.append(energy)
            p = p_new
            e = e_new
            rel_decrease = (
                abs(energy_prev - energy) / max(1.0, abs(energy))
                if np.isfinite(energy_prev)
                else np.inf
            )
            energy_prev = energy
            if rel_decrease < self.cfg.tol_energy:
                eq, g1, margin, flow, compat = self._residuals(u, e, p, p_prev, F)
                if eq <= self.cfg.tol_res * res_scale:
                    converged = True
                    break

        eq, g1, margin, flow, compat = self._residuals(u, e, p, p_prev, F)
        report = StepReport(
            iterations=iterations,
            energy=energy,
            equilibrium_residual=eq,
            gamma1_residual=g1,
            admissibility_margin=margin,
            flow_rule_residual=flow,
            compatibility_residual=compat,
            converged=converged and eq <= self.cfg.tol_res * res_scale,
            energy_history=np.asarray(history),
        )
        triple = DiscreteTriple(u=u, e=e, p=p)
        if not report.converged:
            raise NonConvergenceError(
                f"incremental solve at t={t:g} did not converge in "
                f"{self.cfg.max_outer} iterations (residual {eq:g})",
                triple=triple,
                report=report,
            )
        return triple, report


def solve_increment(
    scenario: Scenario,
    t: float,
    p_prev: np.ndarray,
    cfg: SolverConfig | None = None,
    warm_start: DiscreteTriple | None = None,
    force: bool = False,
):
    """One-shot convenience wrapper around :class:`IncrementalSolver`."""
    return IncrementalSolver(scenario, cfg).solve(t, p_prev, warm_start, force)


def euler_residuals(
    scenario: Scenario,
    t: float,
    triple: DiscreteTriple,
    p_prev: np.ndarray | None = None,
) -> StepReport:
    """Optimality residuals of an arbitrary triple at time t.

    The flow-rule gap is evaluated against ``p_prev`` when provided and
    reported as zero otherwise (no increment available).
    """
    solver = IncrementalSolver(scenario, SolverConfig())
    F = assemble_load(scenario, t)
    pp = triple.p if p_prev is None else np.asarray(p_prev, dtype=float)
    eq, g1, margin, flow, compat = solver._residuals(triple.u, triple.e, triple.p, pp, F)
    energy = solver.step_energy(triple.u, triple.e, triple.p, pp, F)
    res_scale = max(1.0, float(np.linalg.norm(F)))
    ok = (
        eq <= solver.cfg.tol_res * res_scale
        and margin <= solver.cfg.tol_res
        and compat <= 1e-12 * max(1.0, float(np.abs(triple.e).max(initial=0.0)))
    )
    return StepReport(
        iterations=0,
        energy=energy,
        equilibrium_residual=eq,
        gamma1_residual=g1,
        admissibility_margin=margin,
        flow_rule_residual=flow,
        compatibility_residual=compat,
        converged=bool(ok),
    )
