import numpy as np
import pytest

import quasiplast.tensors as T
from quasiplast.constitutive import ElasticModuli, Material, VonMises
from quasiplast.material_point import (
    StrainHistory,
    energy_residual,
    read_history_csv,
    run_point,
    write_point_csv,
)

D_UNIT = T.coords_to_dev(np.array([1.0, 0.0]), 2)


def deviatoric_ramp(rate=1.0, T_final=1.0, n=100):
    times = np.linspace(0.0, T_final, n + 1)
    return StrainHistory(2, times, np.outer(rate * times, D_UNIT))


def test_history_validation():
    with pytest.raises(ValueError):
        StrainHistory(2, [0.0, 0.0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        StrainHistory(2, [0.0, 1.0], np.zeros((2, 2)))


def test_volumetric_ramp_stays_elastic(vm_material):
    times = np.linspace(0.0, 1.0, 11)
    strains = np.outer(times, T.identity(2))
    rec = run_point(vm_material, StrainHistory(2, times, strains))
    assert np.all(rec.dissipated == 0.0)
    assert np.abs(rec.p).max() == 0.0
    # sigma = n kappa t I
    for i, t in enumerate(times):
        np.testing.assert_allclose(rec.sigma[i], 2.0 * t * T.identity(2), atol=1e-14)


def test_deviatoric_ramp_closed_form(vm_material):
    rec = run_point(vm_material, deviatoric_ramp(n=1000))
    assert rec.stored[-1] == pytest.approx(0.25, abs=1e-3)
    assert rec.dissipated[-1] == pytest.approx(0.5, abs=1e-3)
    assert rec.work[-1] == pytest.approx(0.75, abs=1e-3)
    # equal-spacing grid contains t* = 0.5, so p is exact at the samples
    idx = 750
    np.testing.assert_allclose(rec.p[idx], (rec.times[idx] - 0.5) * D_UNIT, atol=1e-12)


def test_load_unload_cycle(vm_material):
    # 0 -> 1.5 d -> 0.5 d: plastic loading then purely elastic unloading
    times = np.array([0.0, 1.0, 2.0])
    strains = np.vstack([0.0 * D_UNIT, 1.5 * D_UNIT, 0.5 * D_UNIT])
    rec = run_point(vm_material, StrainHistory(2, times, strains))
    np.testing.assert_allclose(rec.p[1], 1.0 * D_UNIT, atol=1e-12)
    np.testing.assert_allclose(rec.p[2], 1.0 * D_UNIT, atol=1e-12)  # unchanged
    sig_d = T.deviator_components(rec.sigma[2], 2)
    np.testing.assert_allclose(sig_d, -1.0 * D_UNIT, atol=1e-12)
    assert float(T.norm(sig_d, 2)) <= 1.0 + 1e-12
    # refining the unloading leg changes nothing (trial stays inside K)
    fine_t = np.concatenate([[0.0, 1.0], np.linspace(1.1, 2.0, 10)])
    fine_eps = np.vstack(
        [0.0 * D_UNIT, 1.5 * D_UNIT]
        + [((2.0 - t) + 0.5 * (t - 1.0)) * D_UNIT for t in fine_t[2:]]
    )
    rec_f = run_point(vm_material, StrainHistory(2, fine_t, fine_eps))
    np.testing.assert_allclose(rec_f.p[-1], rec.p[-1], atol=1e-12)
    np.testing.assert_allclose(rec_f.sigma[-1], rec.sigma[-1], atol=1e-12)


def test_rate_independence(vm_material):
    hist = deviatoric_ramp(n=64)
    rec = run_point(vm_material, hist)
    # reparametrize time by an increasing map; same strain sequence
    warped = StrainHistory(2, hist.times**2 + hist.times, hist.strains)
    rec_w = run_point(vm_material, warped)
    np.testing.assert_array_equal(rec.p, rec_w.p)
    np.testing.assert_array_equal(rec.sigma, rec_w.sigma)
    np.testing.assert_array_equal(rec.dissipated, rec_w.dissipated)


def test_stress_admissibility_and_dissipation_bound(vm_material):
    rng = np.random.default_rng(30)
    times = np.linspace(0.0, 1.0, 51)
    # random but small-step strain walk
    steps = 0.08 * rng.standard_normal((50, 3))
    strains = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    rec = run_point(vm_material, StrainHistory(2, times, strains))
    sig_d = T.deviator_components(rec.sigma, 2)
    assert np.all(T.norm(sig_d, 2) <= 1.0 + 1e-12)
    dp_norms = T.norm(np.diff(rec.p, axis=0), 2)
    # VonMises: dissipation equals r * sum |dp| exactly
    assert rec.dissipated[-1] == pytest.approx(float(dp_norms.sum()), rel=1e-12, abs=1e-15)


def test_energy_residual_elastic_is_exact():
    # In elasticity the trapezoidal work increment telescopes to the stored
    # energy difference exactly, so the residual sits at machine precision.
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 10.0))
    times = np.linspace(0.0, 1.0, 101)
    strains = np.outer(np.sin(times), D_UNIT)
    rec = run_point(mat, StrainHistory(2, times, strains))
    assert np.all(rec.dissipated == 0.0)
    assert float(np.abs(energy_residual(rec)).max()) <= 1e-13


def test_energy_residual_ramp_refinement(vm_material):
    # rate 1.35 puts the elastic-plastic transition off-grid
    maxres = {}
    for n in (250, 500, 1000):
        rec = run_point(vm_material, deviatoric_ramp(rate=1.35, n=n))
        maxres[n] = float(np.abs(energy_residual(rec)).max())
    assert maxres[1000] <= 1e-3
    assert maxres[250] / maxres[500] >= 1.5
    assert maxres[500] / maxres[1000] >= 1.5


def test_csv_round_trip(tmp_path, vm_material):
    hist = deviatoric_ramp(n=20)
    path = tmp_path / "hist.csv"
    with open(path, "w") as fh:
        fh.write("t,eps_11,eps_22,eps_12\n")
        for t, row in zip(hist.times, hist.strains):
            fh.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")
    loaded = read_history_csv(path, 2)
    np.testing.assert_allclose(loaded.times, hist.times)
    np.testing.assert_allclose(loaded.strains, hist.strains)
    rec = run_point(vm_material, loaded)
    out = tmp_path / "trace.csv"
    write_point_csv(out, rec)
    data = np.genfromtxt(out, delimiter=",", names=True)
    assert len(data) == len(hist)
    np.testing.assert_allclose(data["stored"], rec.stored, atol=1e-15)


def test_read_history_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,eps_11\n0.0,1.0\n")
    with pytest.raises(ValueError):
        read_history_csv(bad, 2)
    empty = tmp_path / "empty.csv"
    empty.write_text("t,eps_11,eps_22,eps_12\n")
    with pytest.raises(ValueError):
        read_history_csv(empty, 2)


def test_initial_state_must_be_admissible(vm_material):
    times = np.array([0.0, 1.0])
    strains = np.vstack([5.0 * D_UNIT, 6.0 * D_UNIT])
    with pytest.raises(ValueError):
        run_point(vm_material, StrainHistory(2, times, strains))
