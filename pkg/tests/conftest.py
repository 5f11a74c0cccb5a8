import numpy as np
import pytest

import quasiplast.tensors as T
from quasiplast.constitutive import ElasticModuli, Material, Polyhedral, VonMises
from quasiplast.mesh import structured_rectangle
from quasiplast.scenario import Scenario, TimeProfile


@pytest.fixture
def vm_material():
    return Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))


@pytest.fixture
def vm_material_3d():
    return Material(ElasticModuli(3, 1.0, 1.0), VonMises(3, 1.0))


@pytest.fixture
def square_yield():
    """Square cross-section in the 2-d deviatoric slice, vertices (+-1, +-1)."""
    B = T.deviatoric_basis(2)
    normals = np.vstack([B[0], -B[0], B[1], -B[1]])
    return Polyhedral(2, normals, np.ones(4))


def shear_scenario(nx=4, ny=4, rate=1.0, T_final=1.0, alpha=0.5, mu=1.0,
                   kappa=1.0, radius=1.0, yield_scale=None, mode="hard"):
    """Shear of the boundary datum between two clamped plates, free sides.

    w(t) = t * rate * (y, 0) on bottom and top; f = g = 0; rho = 0 is an
    equilibrated safe-load field since no tractions are prescribed.
    """
    mesh = structured_rectangle(nx, ny, gamma0=("bottom", "top"))
    if mode == "collar":
        from quasiplast.mesh import add_collar

        mesh = add_collar(mesh, 0.1)
    mat = Material(ElasticModuli(2, mu, kappa), VonMises(2, radius))
    wpat = np.zeros((mesh.n_nodes, 2))
    wpat[:, 0] = rate * mesh.nodes[:, 1]
    scale = None
    if yield_scale is not None:
        scale = yield_scale(mesh)
    return Scenario(
        mesh=mesh,
        material=mat,
        T=T_final,
        alpha=alpha,
        w_terms=((wpat, TimeProfile.ramp(T_final)),),
        yield_scale=scale,
    )


def soft_strip_scenario(nx=8, ny=8, factor=0.6, **kw):
    """Shear scenario with a weaker-yield horizontal strip (shear band)."""

    def scale(mesh):
        cy = mesh.centroids[:, 1]
        return np.where((cy >= 0.375) & (cy <= 0.625), factor, 1.0)

    return shear_scenario(nx=nx, ny=ny, yield_scale=scale, **kw)


def traction_scenario(nx=4, ny=4, gbar=0.8, T_final=1.0, alpha=0.15):
    """Uniaxial tension: clamp left, ramped traction on the right edge.

    rho(t) = t * gbar * e1 (x) e1 is constant in space, hence equilibrated,
    matches the traction on the right and is traction-free on top/bottom.
    """
    mesh = structured_rectangle(nx, ny, gamma0=("left",))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    g_idx = np.asarray(mesh.edge_groups["right"], dtype=int)
    gpat = np.tile([gbar, 0.0], (len(g_idx), 1))
    rpat = np.tile([gbar, 0.0, 0.0], (mesh.n_elements, 1))
    prof = TimeProfile.ramp(T_final)
    return Scenario(
        mesh=mesh,
        material=mat,
        T=T_final,
        alpha=alpha,
        g_terms=((g_idx, gpat, prof),),
        rho_terms=((rpat, prof),),
    )


def uniform_field_scenario(nx=3, ny=3, rate=1.0, T_final=1.0):
    """All-boundary Dirichlet shear: the exact solution is spatially uniform."""
    mesh = structured_rectangle(nx, ny, gamma0=("bottom", "top", "left", "right"))
    mat = Material(ElasticModuli(2, 1.0, 1.0), VonMises(2, 1.0))
    wpat = np.zeros((mesh.n_nodes, 2))
    wpat[:, 0] = rate * mesh.nodes[:, 1]
    return Scenario(
        mesh=mesh,
        material=mat,
        T=T_final,
        alpha=0.5,
        w_terms=((wpat, TimeProfile.ramp(T_final)),),
    )
