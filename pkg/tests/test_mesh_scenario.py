import numpy as np
import pytest

import quasiplast.tensors as T
from quasiplast.constitutive import ElasticModuli, Material, VonMises
from quasiplast.mesh import (
    GAMMA0,
    GAMMA1,
    Mesh,
    add_collar,
    read_mesh,
    strain,
    structured_rectangle,
    write_mesh,
)
from quasiplast.scenario import (
    Scenario,
    ScenarioError,
    TimeProfile,
    assemble_load,
    build_scenario,
    check_safe_load,
)
from quasiplast.solver import IncrementalSolver

from conftest import shear_scenario, traction_scenario


# -- mesh ----------------------------------------------------------------------


def test_structured_rectangle_geometry():
    m = structured_rectangle(4, 3, lx=2.0, ly=1.5)
    assert m.n_nodes == 5 * 4
    assert m.n_elements == 24
    assert m.areas.sum() == pytest.approx(3.0, rel=1e-14)
    assert np.all(m.areas > 0.0)
    assert len(m.edges) == 2 * (4 + 3)


def test_mesh_requires_dirichlet_part():
    m = structured_rectangle(2, 2)
    with pytest.raises(ValueError):
        Mesh(
            nodes=m.nodes,
            elements=m.elements,
            edges=m.edges,
            edge_labels=[GAMMA1] * len(m.edges),
        )


def test_mesh_rejects_bad_labeling():
    m = structured_rectangle(2, 2)
    with pytest.raises(ValueError):
        Mesh(
            nodes=m.nodes,
            elements=m.elements,
            edges=m.edges[:-1],
            edge_labels=[GAMMA0] * (len(m.edges) - 1),
        )


def test_mesh_orients_elements():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    elements = np.array([[0, 2, 1]])  # clockwise on purpose
    edges = np.array([[0, 1], [1, 2], [2, 0]])
    m = Mesh(nodes=nodes, elements=elements, edges=edges,
             edge_labels=[GAMMA0, GAMMA1, GAMMA1])
    assert m.areas[0] == pytest.approx(0.5)


def test_strain_rigid_motions_and_linear_field():
    m = structured_rectangle(3, 3)
    u = np.zeros(m.n_dofs)
    u[0::2] = 1.0  # translation
    assert np.abs(strain(m, u)).max() == 0.0
    u = np.zeros(m.n_dofs)
    u[0::2] = -m.nodes[:, 1]
    u[1::2] = m.nodes[:, 0]  # infinitesimal rotation
    assert np.abs(strain(m, u)).max() <= 1e-14
    u = np.zeros(m.n_dofs)
    u[0::2] = m.nodes[:, 0]  # u = (x, 0)
    eps = strain(m, u)
    np.testing.assert_allclose(eps, np.tile([1.0, 0.0, 0.0], (m.n_elements, 1)), atol=1e-14)


def test_mesh_file_round_trip(tmp_path):
    m = add_collar(structured_rectangle(3, 2, gamma0=("bottom",)), 0.1)
    path = tmp_path / "mesh.txt"
    write_mesh(path, m)
    loaded = read_mesh(path)
    np.testing.assert_allclose(loaded.nodes, m.nodes)
    np.testing.assert_array_equal(loaded.elements, m.elements)
    np.testing.assert_array_equal(loaded.collar_elements, m.collar_elements)
    assert loaded.edge_labels == m.edge_labels


def test_collar_construction():
    base = structured_rectangle(4, 4, gamma0=("bottom",))
    col = add_collar(base, 0.05)
    assert col.n_elements == base.n_elements + 2 * 4
    assert col.collar_elements.sum() == 8
    # original gamma0 edges are interior now; outer rim carries the label
    assert len(col.edges_with_label(GAMMA0)) == 0
    assert len(col.edges_with_label("collar_outer")) == 4 + 2  # rim + end caps
    # outer rim sits at y = -0.05
    rim_nodes = col.dirichlet_nodes(collar_mode=True)
    assert np.min(col.nodes[rim_nodes, 1]) == pytest.approx(-0.05)
    # base nodes keep their ids
    np.testing.assert_allclose(col.nodes[: base.n_nodes], base.nodes)


def test_collar_slip_aggregation():
    base = structured_rectangle(2, 1, gamma0=("bottom",))
    col = add_collar(base, 0.1)
    p = np.zeros((col.n_elements, 3))
    p[col.collar_elements] = [0.3, -0.3, 0.1]
    slip = col.collar_slip(p)
    assert len(slip) == 2
    for _, mean in slip:
        np.testing.assert_allclose(mean, [0.3, -0.3, 0.1], atol=1e-14)


# -- loads ----------------------------------------------------------------------


def test_assemble_load_zero():
    scen = shear_scenario()
    assert np.abs(assemble_load(scen, 0.7)).max() == 0.0


def test_assemble_load_constant_body_force():
    m = structured_rectangle(3, 3, gamma0=("left",))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    fpat = np.tile([2.0, -1.0], (m.n_elements, 1))
    scen = Scenario(
        mesh=m, material=mat, T=1.0, alpha=0.5,
        f_terms=((fpat, TimeProfile.constant(1.0)),),
    )
    F = assemble_load(scen, 0.3)
    # constant test displacement: F . c = f . c * area (partition of unity)
    c = np.array([0.4, 1.1])
    u = np.tile(c, m.n_nodes)
    assert F @ u == pytest.approx(float(np.array([2.0, -1.0]) @ c) * 1.0, rel=1e-13)


def test_assemble_load_edge_traction_midpoint_exact():
    m = structured_rectangle(4, 4, gamma0=("left",))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    idx = np.asarray(m.edge_groups["right"], dtype=int)
    gpat = np.tile([1.5, 0.0], (len(idx), 1))
    scen = Scenario(
        mesh=m, material=mat, T=1.0, alpha=0.5,
        g_terms=((idx, gpat, TimeProfile.constant(1.0)),),
    )
    F = assemble_load(scen, 0.0)
    # linear test field u = (y, 0): exact integral over x=1 edge of 1.5*y dy
    u = np.zeros(m.n_dofs)
    u[0::2] = m.nodes[:, 1]
    assert F @ u == pytest.approx(1.5 * 0.5, rel=1e-13)


def test_assemble_load_midpoint_convergence():
    # smooth f sampled at centroids: O(h^2) consistency of the assembled work
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))

    def exact():
        # integral over unit square of f(x,y) . u(x,y) with
        # f = (sin(pi x) sin(pi y), 0), u = (x y, 0)
        from scipy.integrate import dblquad

        val, _ = dblquad(
            lambda y, x: np.sin(np.pi * x) * np.sin(np.pi * y) * x * y, 0, 1, 0, 1
        )
        return val

    target = exact()
    errs = []
    for n in (8, 16, 32):
        m = structured_rectangle(n, n, gamma0=("left",))
        fpat = np.zeros((m.n_elements, 2))
        fpat[:, 0] = np.sin(np.pi * m.centroids[:, 0]) * np.sin(np.pi * m.centroids[:, 1])
        scen = Scenario(mesh=m, material=mat, T=1.0, alpha=0.5,
                        f_terms=((fpat, TimeProfile.constant(1.0)),))
        u = np.zeros(m.n_dofs)
        u[0::2] = m.nodes[:, 0] * m.nodes[:, 1]
        errs.append(abs(float(assemble_load(scen, 0.0) @ u) - target))
    assert errs[0] / errs[1] >= 3.0
    assert errs[1] / errs[2] >= 3.0


def test_load_linearity_in_f_g():
    scen1 = traction_scenario(gbar=0.4)
    scen2 = traction_scenario(gbar=0.8)
    t = 0.9
    np.testing.assert_allclose(
        2.0 * assemble_load(scen1, t), assemble_load(scen2, t), atol=1e-14
    )


# -- safe load -------------------------------------------------------------------


def test_safe_load_zero_fields_pass(vm_material):
    scen = shear_scenario(alpha=0.5)
    rep = check_safe_load(scen, 0.3)
    assert rep.ok
    assert rep.margin_violation == 0.0
    assert rep.equilibrium_residual <= 1e-14
    assert rep.coercivity_gap >= -1e-10


def test_safe_load_margin_example():
    # uniform |rho_D| = 0.9 with alpha = 0.05 fits in the unit ball
    m = structured_rectangle(2, 2, gamma0=("bottom",))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    rho_d = 0.9 * T.coords_to_dev(np.array([1.0, 0.0]), 2)
    rpat = np.tile(rho_d, (m.n_elements, 1))
    # rho must also be equilibrated: constant deviatoric field has zero
    # divergence but nonzero tractions on gamma1, so prescribe the matching g.
    sig = T.to_matrix(rho_d, 2)
    g_idx, g_pat = [], []
    for side, nrm in (("left", [-1, 0]), ("right", [1, 0]), ("top", [0, 1])):
        idx = np.asarray(m.edge_groups[side], dtype=int)
        tract = sig @ np.asarray(nrm, dtype=float)
        g_idx.append(idx)
        g_pat.append(np.tile(tract, (len(idx), 1)))
    prof = TimeProfile.constant(1.0)
    scen = Scenario(
        mesh=m, material=mat, T=1.0, alpha=0.05,
        g_terms=tuple((i, p, prof) for i, p in zip(g_idx, g_pat)),
        rho_terms=((rpat, prof),),
    )
    rep = check_safe_load(scen, 0.5)
    assert rep.margin_violation == 0.0
    assert rep.equilibrium_residual <= 1e-12
    assert rep.ok
    # pushing alpha over the gap fails the margin
    scen_bad = Scenario(
        mesh=m, material=mat, T=1.0, alpha=0.2,
        g_terms=tuple((i, p, prof) for i, p in zip(g_idx, g_pat)),
        rho_terms=((rpat, prof),),
    )
    rep_bad = check_safe_load(scen_bad, 0.5)
    assert rep_bad.margin_violation > 0.0
    assert len(rep_bad.violating_elements) == m.n_elements
    assert not rep_bad.ok


def test_safe_load_uniaxial_equilibrium():
    scen = traction_scenario(nx=5, ny=3, gbar=0.8)
    rep = check_safe_load(scen, 1.0)
    assert rep.equilibrium_residual <= 1e-10
    assert rep.ok


def test_safe_load_coercivity_sampling():
    scen = traction_scenario(nx=3, ny=3, gbar=0.8, alpha=0.15)
    rep = check_safe_load(scen, 1.0, n_samples=50)
    assert rep.coercivity_gap >= -1e-10


# -- scenario construction --------------------------------------------------------


def test_build_scenario_from_toml(tmp_path):
    cfg = {
        "mesh": {"builtin": "rectangle", "nx": 3, "ny": 3, "gamma0": ["bottom", "top"]},
        "material": {"mu": 1.0, "kappa": 1.0, "yield": "von_mises", "radius": 1.0},
        "time": {"T": 2.0},
        "safe_load": {"alpha": 0.4},
        "loads": {"w": [{"pattern": "shear_x", "coefficient": 0.5, "profile": "ramp"}]},
        "inclusion": {"kind": "strip_y", "y0": 0.3, "y1": 0.7, "factor": 0.5},
    }
    scen = build_scenario(cfg)
    assert scen.T == 2.0
    assert scen.yield_scale.min() == pytest.approx(0.5)
    w = scen.w_nodal(2.0)
    top = scen.mesh.nodes[:, 1] == 1.0
    np.testing.assert_allclose(w[0::2][top], 1.0)  # 0.5 * y * t at y=1, t=2
    assert scen.w_nodal(0.5, rate=True) @ scen.w_nodal(0.5, rate=True) > 0.0


def test_build_scenario_rejects_garbage():
    with pytest.raises(ScenarioError):
        build_scenario({"material": {"mu": 1.0, "kappa": 1.0, "yield": "nope"}})
    with pytest.raises(ScenarioError):
        build_scenario(
            {
                "mesh": {"builtin": "rectangle"},
                "material": {"mu": 1.0, "kappa": 1.0},
                "safe_load": {"alpha": 0.1},
                "loads": {"w": [{"pattern": "unknown"}]},
            }
        )


def test_time_profile_rates():
    prof = TimeProfile(np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0, 1.0]))
    assert prof.value(0.25) == pytest.approx(0.5)
    assert prof.rate(0.25) == pytest.approx(2.0)
    assert prof.rate(0.75) == pytest.approx(0.0)
    assert prof.value(0.75) == pytest.approx(1.0)


# -- collar realization ------------------------------------------------------------


def test_collar_width_convergence_to_hard_mode():
    # elastic range: with width -> 0 the collar solution approaches hard mode
    base = shear_scenario(nx=4, ny=4, T_final=1.0)
    solver = IncrementalSolver(base)
    p0 = np.zeros((base.mesh.n_elements, 3))
    t = 0.3  # elastic everywhere
    hard, _ = solver.solve(t, p0)

    diffs = []
    for width in (0.2, 0.1, 0.05):
        mesh_c = add_collar(structured_rectangle(4, 4, gamma0=("bottom", "top")), width)
        wpat = np.zeros((mesh_c.n_nodes, 2))
        wpat[:, 0] = mesh_c.nodes[:, 1]
        scen_c = Scenario(
            mesh=mesh_c,
            material=base.material,
            T=1.0,
            alpha=0.5,
            w_terms=((wpat, TimeProfile.ramp(1.0)),),
            dirichlet_mode="collar",
        )
        tri, _ = IncrementalSolver(scen_c).solve(t, np.zeros((mesh_c.n_elements, 3)))
        n_base = base.mesh.n_dofs
        diffs.append(float(np.linalg.norm(tri.u[:n_base] - hard.u)))
    assert diffs[0] > diffs[1] > diffs[2]
