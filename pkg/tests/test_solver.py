import numpy as np
import pytest

import quasiplast.tensors as T
from quasiplast.constitutive import ElasticModuli, Material, VonMises
from quasiplast.mesh import structured_rectangle, strain
from quasiplast.scenario import Scenario, TimeProfile, assemble_load
from quasiplast.solver import (
    DiscreteTriple,
    IncrementalSolver,
    SafeLoadError,
    SingularSystemError,
    SolverConfig,
    euler_residuals,
    solve_increment,
)

from conftest import shear_scenario, traction_scenario
from oracles import cvxpy_increment


def stretch_scenario(nx=1, ny=1, T_final=1.2):
    """Uniaxial stretching driven by the boundary datum on all sides."""
    mesh = structured_rectangle(nx, ny, gamma0=("bottom", "top", "left", "right"))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    wpat = np.zeros((mesh.n_nodes, 2))
    wpat[:, 0] = mesh.nodes[:, 0]
    return Scenario(
        mesh=mesh, material=mat, T=T_final, alpha=0.5,
        w_terms=((wpat, TimeProfile.ramp(T_final)),),
    )


def zeros_p(scen):
    return np.zeros((scen.mesh.n_elements, 3))


def test_zero_data_zero_solution():
    scen = shear_scenario()
    triple, report = solve_increment(scen, 0.0, zeros_p(scen))
    assert np.abs(triple.u).max() == 0.0
    assert np.abs(triple.p).max() == 0.0
    assert np.abs(triple.e).max() == 0.0
    assert report.energy == 0.0
    assert report.converged


def test_elastic_regime_matches_direct_solve():
    scen = shear_scenario()
    solver = IncrementalSolver(scen)
    t = 0.3  # below yield everywhere
    triple, report = solver.solve(t, zeros_p(scen))
    assert np.abs(triple.p).max() == 0.0
    # direct SPD solve of the same constrained system with p = 0
    w = scen.w_nodal(t)
    F = assemble_load(scen, t)
    fd, dd = scen.free_dofs, scen.dirichlet_dofs
    u_direct = np.zeros(scen.mesh.n_dofs)
    u_direct[dd] = w[dd]
    u_direct[fd] = solver.lu.solve(F[fd] - solver.K_fc @ w[dd])
    np.testing.assert_allclose(triple.u, u_direct, atol=1e-12)
    # an extra outer iteration changes nothing
    triple2, report2 = solver.solve(t, zeros_p(scen), warm_start=triple)
    np.testing.assert_allclose(triple2.u, triple.u, atol=1e-14)
    np.testing.assert_allclose(triple2.p, triple.p, atol=1e-14)


def test_compatibility_invariant():
    scen = shear_scenario()
    solver = IncrementalSolver(scen)
    triple, _ = solver.solve(0.9, zeros_p(scen))
    np.testing.assert_allclose(
        strain(scen.mesh, triple.u) - triple.p, triple.e, atol=1e-12
    )


def test_two_element_stretch_against_cvxpy():
    scen = stretch_scenario()
    solver = IncrementalSolver(scen)
    t = 1.2  # beyond yield
    triple, report = solver.solve(t, zeros_p(scen))
    # elementwise deviatoric stress on the yield surface
    sig = 2.0 * scen.material.moduli.mu * T.deviator_components(triple.e, 2)
    norms = T.norm(sig, 2)
    np.testing.assert_allclose(norms, 1.0, atol=1e-9)
    assert report.equilibrium_residual <= 1e-9
    u_ref, p_ref, en_ref = cvxpy_increment(scen, t, zeros_p(scen))
    en = solver.step_energy(triple.u, triple.e, triple.p, zeros_p(scen),
                            assemble_load(scen, t))
    assert abs(en - en_ref) <= 1e-7
    np.testing.assert_allclose(triple.p, p_ref, atol=1e-5)


def test_plastic_shear_against_cvxpy():
    scen = shear_scenario(nx=3, ny=3)
    solver = IncrementalSolver(scen)
    t = 1.0
    triple, report = solver.solve(t, zeros_p(scen))
    assert report.converged
    u_ref, p_ref, en_ref = cvxpy_increment(scen, t, zeros_p(scen))
    F = assemble_load(scen, t)
    en = solver.step_energy(triple.u, triple.e, triple.p, zeros_p(scen), F)
    assert abs(en - en_ref) <= 1e-7 * max(1.0, abs(en_ref))


def test_energy_monotone_across_iterations():
    scen = shear_scenario(nx=4, ny=4)
    solver = IncrementalSolver(scen)
    _, report = solver.solve(1.0, zeros_p(scen))
    hist = report.energy_history
    assert np.all(np.diff(hist) <= 1e-12 * np.maximum(1.0, np.abs(hist[:-1])))


def test_warm_start_independence_of_stress():
    scen = shear_scenario(nx=4, ny=4)
    solver = IncrementalSolver(scen)
    t = 1.0
    cold, _ = solver.solve(t, zeros_p(scen))
    rng = np.random.default_rng(50)
    warm_p = T.deviator_components(0.1 * rng.standard_normal((scen.mesh.n_elements, 3)), 2)
    warm = DiscreteTriple(u=np.zeros(scen.mesh.n_dofs), e=np.zeros_like(warm_p), p=warm_p)
    warm_sol, _ = solver.solve(t, zeros_p(scen), warm_start=warm)
    # compare stresses via the elastic strains (sigma = C e, C injective)
    diff = scen.l2norm(cold.e - warm_sol.e)
    assert diff <= 1e-6


def test_resolve_from_own_plastic_strain_is_fixed_point():
    scen = shear_scenario(nx=3, ny=3)
    solver = IncrementalSolver(scen)
    t = 1.0
    first, _ = solver.solve(t, zeros_p(scen))
    second, report = solver.solve(t, first.p, warm_start=first)
    np.testing.assert_allclose(second.p, first.p, atol=1e-10)
    np.testing.assert_allclose(second.u, first.u, atol=1e-10)
    assert report.iterations <= 3


def test_dual_feasibility_against_safe_load_field():
    scen = traction_scenario(nx=4, ny=2, gbar=0.9, alpha=0.05)
    solver = IncrementalSolver(scen)
    t = 1.0
    triple, _ = solver.solve(t, zeros_p(scen))
    dp = triple.p - zeros_p(scen)
    if float(T.norm(dp, 2).max()) > 0.0:
        sig = 2.0 * scen.material.moduli.mu * T.deviator_components(triple.e, 2)
        rho_d = T.deviator_components(scen.rho(t), 2)
        pairing = scen.area_inner(sig - rho_d, dp)
        assert pairing >= -1e-9


def test_euler_residuals_of_converged_solve():
    scen = shear_scenario(nx=3, ny=3)
    solver = IncrementalSolver(scen)
    triple, _ = solver.solve(1.0, zeros_p(scen))
    rep = euler_residuals(scen, 1.0, triple, p_prev=zeros_p(scen))
    assert rep.converged
    assert rep.equilibrium_residual <= 1e-8
    assert rep.admissibility_margin <= 1e-9
    assert rep.flow_rule_residual <= 1e-10


def test_euler_residuals_detect_violations():
    scen = shear_scenario(nx=3, ny=3)
    solver = IncrementalSolver(scen)
    triple, _ = solver.solve(1.0, zeros_p(scen))
    # doubling e doubles sigma: elements on the yield surface move distance ~r_K out
    bad = DiscreteTriple(u=2.0 * triple.u, e=2.0 * triple.e, p=2.0 * triple.p)
    rep = euler_residuals(scen, 1.0, bad)
    assert not rep.converged
    assert rep.admissibility_margin == pytest.approx(1.0, abs=0.2)


def test_euler_residual_linear_in_perturbation():
    scen = shear_scenario(nx=3, ny=3)
    solver = IncrementalSolver(scen)
    triple, _ = solver.solve(0.3, zeros_p(scen))
    rng = np.random.default_rng(51)
    direction = rng.standard_normal(scen.mesh.n_dofs)
    direction[scen.dirichlet_dofs] = 0.0
    direction /= np.linalg.norm(direction)
    res = []
    for delta in (1e-4, 2e-4):
        u = triple.u + delta * direction
        e = strain(scen.mesh, u) - triple.p
        rep = euler_residuals(scen, 0.3, DiscreteTriple(u=u, e=e, p=triple.p))
        res.append(rep.equilibrium_residual)
    assert res[1] / res[0] == pytest.approx(2.0, rel=0.05)


def test_singular_system_detection():
    mesh = structured_rectangle(2, 2, gamma0=("bottom",))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    scen = Scenario(mesh=mesh, material=mat, T=1.0, alpha=0.5)
    scen.dirichlet_dofs = np.array([], dtype=int)
    scen.free_dofs = np.arange(mesh.n_dofs)
    with pytest.raises(SingularSystemError):
        IncrementalSolver(scen)


def test_safe_load_refusal_and_force():
    # rho outside the margin: solver refuses unless forced
    mesh = structured_rectangle(2, 2, gamma0=("bottom", "top"))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    wpat = np.zeros((mesh.n_nodes, 2))
    wpat[:, 0] = mesh.nodes[:, 1]
    rho_d = 0.95 * T.coords_to_dev(np.array([1.0, 0.0]), 2)
    scen = Scenario(
        mesh=mesh, material=mat, T=1.0, alpha=0.2,
        w_terms=((wpat, TimeProfile.ramp(1.0)),),
        rho_terms=((np.tile(rho_d, (mesh.n_elements, 1)), TimeProfile.constant(1.0)),),
    )
    solver = IncrementalSolver(scen)
    with pytest.raises(SafeLoadError):
        solver.solve(0.5, zeros_p(scen))
    triple, report = solver.solve(0.5, zeros_p(scen), force=True)
    assert report.converged


def test_nonconvergence_carries_best_iterate():
    scen = shear_scenario(nx=4, ny=4)
    cfg = SolverConfig(max_outer=2, tol_res=1e-12)
    solver = IncrementalSolver(scen, cfg)
    from quasiplast.solver import NonConvergenceError

    with pytest.raises(NonConvergenceError) as err:
        solver.solve(1.0, zeros_p(scen))
    assert err.value.triple is not None
    assert err.value.report is not None
    assert not err.value.report.converged
