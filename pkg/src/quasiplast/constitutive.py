"""Yield sets, support functions, isotropic elasticity, and the pointwise
incremental minimization (return mapping).

The admissible deviatoric stresses form a closed convex set K containing a
ball of radius ``r_bound`` and contained in a ball of radius ``R_bound``.
Supported shapes: a ball (von Mises) and a bounded polytope given by unit
facet normals and offsets.  The support function H(xi) = sup_{zeta in K}
xi:zeta is the dissipation density per unit plastic-strain increment.

The single-point incremental problem

    minimize over trace-free p:   mu |eps_D - p|^2 + (kappa/2)(tr eps)^2
                                  + H(p - p_prev) * scale

is solved exactly through the projection identity: with the trial stress
s = 2 mu (eps_D - p_prev), the updated deviatoric stress is the projection
of s onto (scale*K) and p_new - p_prev = (s - sigma_D)/(2 mu).  For the
ball this is the classical radial return; for polytopes the projection is
computed by Dykstra's alternating-halfspace iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import HalfspaceIntersection

from . import tensors
from .tensors import DevTensor, SymTensor

__all__ = [
    "YieldSurface",
    "VonMises",
    "Polyhedral",
    "ElasticModuli",
    "Material",
    "support_H",
    "project_K",
    "in_normal_cone",
    "min_norm_subgradient",
    "stress",
    "quad_Q",
    "incremental_update",
    "PointUpdate",
    "ReturnMapError",
]


class ReturnMapError(RuntimeError):
    """Raised when the iterative projection fails to converge."""


class YieldSurface:
    """Base class.  All geometry is expressed on deviatoric component vectors."""

    dim: int
    r_bound: float
    R_bound: float

    def support(self, xi: np.ndarray, scale: float = 1.0) -> float:
        """H(xi) = sup_{zeta in scale*K} xi:zeta."""
        raise NotImplementedError

    def support_field(self, xi: np.ndarray, scale: np.ndarray | float = 1.0) -> np.ndarray:
        """Vectorized support over the leading axes of ``xi``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        scale = np.broadcast_to(np.asarray(scale, dtype=float), xi.shape[:-1])
        return np.array([self.support(x, float(s)) for x, s in zip(xi, scale.ravel())])

    def project(self, xi: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Euclidean (Frobenius) projection of xi onto scale*K."""
        raise NotImplementedError

    def distance(self, xi: np.ndarray, scale: float = 1.0) -> float:
        """Distance from xi to scale*K; zero inside."""
        return float(tensors.norm(np.asarray(xi) - self.project(xi, scale), self.dim))

    def contains(self, xi: np.ndarray, tol: float = 1e-10, scale: float = 1.0) -> bool:
        return self.distance(xi, scale) <= tol

    def normal_cone_contains(
        self, sigma_d: np.ndarray, q: np.ndarray, tol: float, scale: float = 1.0
    ) -> bool:
        raise NotImplementedError

    def boundary_gap(self, xi: np.ndarray, scale: float = 1.0) -> float:
        """Distance from xi to the boundary of scale*K (0 exactly on it)."""
        raise NotImplementedError


@dataclass(frozen=True)
class VonMises(YieldSurface):
    """Ball of admissible deviatoric stresses: K = {|zeta| <= radius}."""

    dim: int
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("yield radius must be positive")

    @property
    def r_bound(self) -> float:
        return self.radius

    @property
    def R_bound(self) -> float:
        return self.radius

    def support(self, xi, scale=1.0):
        return float(scale * self.radius * tensors.norm(xi, self.dim))

    def support_field(self, xi, scale=1.0):
        xi = np.asarray(xi, dtype=float)
        return np.asarray(scale, dtype=float) * self.radius * tensors.norm(xi, self.dim)

    def project(self, xi, scale=1.0):
        xi = np.asarray(xi, dtype=float)
        n = float(tensors.norm(xi, self.dim))
        r = scale * self.radius
        if n <= r:
            return xi.copy()
        return xi * (r / n)

    def distance(self, xi, scale=1.0):
        return max(0.0, float(tensors.norm(xi, self.dim)) - scale * self.radius)

    def boundary_gap(self, xi, scale=1.0):
        return abs(float(tensors.norm(xi, self.dim)) - scale * self.radius)

    def normal_cone_contains(self, sigma_d, q, tol, scale=1.0):
        # N_K at a boundary point is the outward radial ray; at interior
        # points it is {0}; outside K it is empty.
        qn = float(tensors.norm(q, self.dim))
        r = scale * self.radius
        if qn <= tol:
            return self.distance(sigma_d, scale) <= tol
        target = (r / qn) * np.asarray(q, dtype=float)
        return float(tensors.norm(np.asarray(sigma_d) - target, self.dim)) <= tol * max(1.0, r)


class Polyhedral(YieldSurface):
    """Bounded polytope K = {zeta : n_i : zeta <= c_i} with unit normals n_i.

    Vertices are enumerated at construction (orthonormal deviatoric
    coordinates, Qhull) and certify boundedness; R_bound is the largest
    vertex norm and r_bound the smallest facet offset.
    """

    def __init__(self, dim: int, normals: np.ndarray, offsets: np.ndarray):
        normals = np.asarray(normals, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if normals.ndim != 2 or normals.shape[1] != tensors.ncomp(dim):
            raise ValueError("normals must be an array of deviatoric component vectors")
        if offsets.shape != (normals.shape[0],):
            raise ValueError("one offset per facet normal is required")
        if np.any(offsets <= 0.0):
            raise ValueError("facet offsets must be positive (0 must be interior)")
        norms = tensors.norm(normals, dim)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise ValueError("facet normals must have unit Frobenius norm")
        if np.any(np.abs(tensors.trace(normals, dim)) > 1e-12):
            raise ValueError("facet normals must be trace-free")
        self.dim = int(dim)
        self.normals = normals
        self.offsets = offsets
        # Orthonormal-coordinate halfspace data: rows a_i with a_i . z <= c_i.
        self._A = tensors.dev_to_coords(normals, dim)
        self._c = offsets.copy()
        self._vertices_coords = self._enumerate_vertices()
        self.vertices = tensors.coords_to_dev(self._vertices_coords, dim)
        self.r_bound = float(offsets.min())
        self.R_bound = float(np.linalg.norm(self._vertices_coords, axis=1).max())

    def _enumerate_vertices(self) -> np.ndarray:
        d = self._A.shape[1]
        halfspaces = np.hstack([self._A, -self._c[:, None]])
        try:
            hs = HalfspaceIntersection(halfspaces, np.zeros(d))
        except Exception as exc:  # Qhull signals unboundedness this way
            raise ValueError(f"polytope is unbounded or degenerate: {exc}") from exc
        verts = np.unique(np.round(hs.intersections, 12), axis=0)
        if not np.all(np.isfinite(verts)):
            raise ValueError("polytope is unbounded")
        return verts

    def support(self, xi, scale=1.0):
        x = tensors.dev_to_coords(np.asarray(xi, dtype=float), self.dim)
        return float(scale) * float((self._vertices_coords @ x).max())

    def project(self, xi, scale=1.0, tol: float = 1e-12, max_iter: int = 10_000):
        x = tensors.dev_to_coords(np.asarray(xi, dtype=float), self.dim)
        c = float(scale) * self._c
        if np.all(self._A @ x <= c + 1e-14 * max(1.0, np.linalg.norm(x))):
            return np.asarray(xi, dtype=float).copy()
        z = self._dykstra(x, c, tol, max_iter)
        return tensors.coords_to_dev(z, self.dim)

    def _dykstra(self, x: np.ndarray, c: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
        m = self._A.shape[0]
        z = x.copy()
        corrections = np.zeros((m, x.size))
        for it in range(max_iter):
            z_old = z.copy()
            for i in range(m):
                y = z + corrections[i]
                viol = self._A[i] @ y - c[i]
                z_new = y - max(viol, 0.0) * self._A[i]
                corrections[i] = y - z_new
                z = z_new
            if np.linalg.norm(z - z_old) <= tol * max(1.0, np.linalg.norm(x)):
                worst = (self._A @ z - c).max()
                if worst <= 10.0 * tol * max(1.0, np.linalg.norm(x)):
                    return z
        raise ReturnMapError(
            f"polytope projection did not converge within {max_iter} iterations"
        )

    def boundary_gap(self, xi, scale=1.0):
        x = tensors.dev_to_coords(np.asarray(xi, dtype=float), self.dim)
        slack = float(scale) * self._c - self._A @ x
        if np.any(slack < 0.0):
            return self.distance(xi, scale)
        return float(slack.min())

    def normal_cone_contains(self, sigma_d, q, tol, scale=1.0):
        qn = float(tensors.norm(q, self.dim))
        if qn <= tol:
            return self.distance(sigma_d, scale) <= tol
        if self.distance(sigma_d, scale) > tol:
            return False
        # q is normal at sigma_d iff q:(v - sigma_d) <= 0 for all vertices v.
        gaps = tensors.inner(
            np.broadcast_to(q, (len(self.vertices), q.shape[-1])),
            float(scale) * self.vertices - np.asarray(sigma_d, dtype=float),
            self.dim,
        )
        return bool(np.all(gaps <= tol * qn * max(1.0, float(scale) * self.R_bound)))

    def active_vertices(self, q: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Vertices attaining the support sup over K of q:v, within tol."""
        vals = tensors.inner(
            np.broadcast_to(q, self.vertices.shape), self.vertices, self.dim
        )
        top = vals.max()
        qn = max(float(tensors.norm(q, self.dim)), 1.0)
        return self.vertices[vals >= top - tol * qn]


def support_H(yield_surface: YieldSurface, xi: DevTensor | np.ndarray) -> float:
    """Support function H(xi) of the yield set."""
    comp = xi.comp if isinstance(xi, SymTensor) else np.asarray(xi, dtype=float)
    return yield_surface.support(comp)


def project_K(yield_surface: YieldSurface, xi: DevTensor | np.ndarray) -> DevTensor:
    """Closest point of the yield set to xi."""
    comp = xi.comp if isinstance(xi, SymTensor) else np.asarray(xi, dtype=float)
    return DevTensor(yield_surface.dim, yield_surface.project(comp))


def in_normal_cone(
    yield_surface: YieldSurface,
    sigma_d: DevTensor | np.ndarray,
    q: DevTensor | np.ndarray,
    tol: float = 1e-10,
) -> bool:
    """True iff q lies in the normal cone to the yield set at sigma_d.

    For q = 0 only membership of sigma_d is required.
    """
    sd = sigma_d.comp if isinstance(sigma_d, SymTensor) else np.asarray(sigma_d, dtype=float)
    qq = q.comp if isinstance(q, SymTensor) else np.asarray(q, dtype=float)
    return yield_surface.normal_cone_contains(sd, qq, tol)


def _min_norm_point_hull(points: np.ndarray) -> np.ndarray:
    """Minimum-norm point of the convex hull of a few points (exact search).

    Enumerates faces (subsets), solves each affine least-norm problem, and
    keeps the best combination with nonnegative barycentric weights.
    """
    from itertools import combinations

    m = len(points)
    best = None
    best_norm = np.inf
    for k in range(1, m + 1):
        for idx in combinations(range(m), k):
            P = points[list(idx)]
            # min |lam . P|^2 with sum(lam) = 1  ->  KKT linear system.
            G = P @ P.T
            kk = len(idx)
            M = np.zeros((kk + 1, kk + 1))
            M[:kk, :kk] = G
            M[:kk, kk] = 1.0
            M[kk, :kk] = 1.0
            rhs = np.zeros(kk + 1)
            rhs[kk] = 1.0
            try:
                sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            lam = sol[:kk]
            if np.any(lam < -1e-9):
                continue
            pt = lam @ P
            n = np.linalg.norm(pt)
            if n < best_norm - 1e-15:
                best_norm = n
                best = pt
    return best


def min_norm_subgradient(yield_surface: YieldSurface, q: DevTensor | np.ndarray) -> DevTensor:
    """Minimum-norm element of the support-function subdifferential at q.

    For the ball this is radius * q/|q| (q != 0); for a polytope it is the
    minimum-norm point of the face exposed by q.
    """
    comp = q.comp if isinstance(q, SymTensor) else np.asarray(q, dtype=float)
    qn = float(tensors.norm(comp, yield_surface.dim))
    if isinstance(yield_surface, VonMises):
        if qn == 0.0:
            return DevTensor(yield_surface.dim, np.zeros_like(comp))
        return DevTensor(yield_surface.dim, (yield_surface.radius / qn) * comp)
    if not isinstance(yield_surface, Polyhedral):
        raise TypeError(f"unsupported yield surface {type(yield_surface).__name__}")
    if qn == 0.0:
        return DevTensor(yield_surface.dim, np.zeros(comp.shape))
    active = yield_surface.active_vertices(comp)
    coords = tensors.dev_to_coords(active, yield_surface.dim)
    pt = _min_norm_point_hull(coords)
    return DevTensor(yield_surface.dim, tensors.coords_to_dev(pt, yield_surface.dim))


@dataclass(frozen=True)
class ElasticModuli:
    """Isotropic elasticity: 2*mu on deviators, kappa on the trace part."""

    dim: int
    mu: float
    kappa: float

    def __post_init__(self):
        if self.mu <= 0.0 or self.kappa <= 0.0:
            raise ValueError("shear and compression moduli must be positive")

    @property
    def alpha_C(self) -> float:
        """Lower ellipticity constant: alpha |xi|^2 <= Q(xi)."""
        return min(2.0 * self.mu, self.dim * self.kappa) / 2.0

    @property
    def beta_C(self) -> float:
        """Upper ellipticity constant: Q(xi) <= beta |xi|^2."""
        return max(2.0 * self.mu, self.dim * self.kappa) / 2.0

    def voigt_matrix(self) -> np.ndarray:
        """Matrix D with sigma_comp = D @ e_comp (tensor components)."""
        n, nc = self.dim, tensors.ncomp(self.dim)
        D = np.zeros((nc, nc))
        for j in range(nc):
            e = np.zeros(nc)
            e[j] = 1.0
            D[:, j] = stress_components(self, e)
        return D


def stress_components(moduli: ElasticModuli, e: np.ndarray) -> np.ndarray:
    """sigma = 2 mu e_D + kappa (tr e) I, on component arrays (.., ncomp)."""
    e = np.asarray(e, dtype=float)
    dim = moduli.dim
    out = 2.0 * moduli.mu * tensors.deviator_components(e, dim)
    out[..., :dim] += (moduli.kappa * tensors.trace(e, dim))[..., None]
    return out


def stress(moduli: ElasticModuli, e: SymTensor) -> SymTensor:
    """Stress of an elastic strain."""
    return SymTensor(moduli.dim, stress_components(moduli, e.comp))


def quad_Q_components(moduli: ElasticModuli, e: np.ndarray) -> np.ndarray:
    """Q(e) = mu |e_D|^2 + (kappa/2) (tr e)^2, broadcast over leading axes."""
    e = np.asarray(e, dtype=float)
    dim = moduli.dim
    ed = tensors.deviator_components(e, dim)
    return moduli.mu * tensors.inner(ed, ed, dim) + 0.5 * moduli.kappa * tensors.trace(e, dim) ** 2


def quad_Q(moduli: ElasticModuli, e: SymTensor) -> float:
    """Elastic energy density of e."""
    return float(quad_Q_components(moduli, e.comp))


@dataclass(frozen=True)
class Material:
    moduli: ElasticModuli
    yield_surface: YieldSurface

    def __post_init__(self):
        if self.moduli.dim != self.yield_surface.dim:
            raise ValueError("moduli and yield surface dimensions differ")

    @property
    def dim(self) -> int:
        return self.moduli.dim


@dataclass(frozen=True)
class PointUpdate:
    """Result of one pointwise incremental minimization."""

    p_new: DevTensor
    e_new: SymTensor
    sigma: SymTensor
    dissipation_increment: float


def incremental_update_components(
    material: Material,
    eps_total: np.ndarray,
    p_prev: np.ndarray,
    yield_scale: np.ndarray | float = 1.0,
):
    """Field form of the incremental minimization on component arrays.

    Returns (p_new, e_new, sigma, dissipation_increment); all leading axes
    broadcast.  The von Mises branch is fully vectorized.
    """
    dim = material.dim
    moduli = material.moduli
    ys = material.yield_surface
    eps = np.asarray(eps_total, dtype=float)
    p0 = np.asarray(p_prev, dtype=float)
    eps_d = tensors.deviator_components(eps, dim)
    trial = 2.0 * moduli.mu * (eps_d - p0)
    scale = np.asarray(yield_scale, dtype=float)

    if isinstance(ys, VonMises):
        radius = ys.radius * scale
        tn = tensors.norm(trial, dim)
        over = np.maximum(tn - radius, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where((tn > 0.0)[..., None], trial / np.where(tn == 0.0, 1.0, tn)[..., None], 0.0)
        dp = (over / (2.0 * moduli.mu))[..., None] * direction
        sigma_d = trial - 2.0 * moduli.mu * dp
        diss = radius * tensors.norm(dp, dim)
    else:
        flat = trial.reshape(-1, trial.shape[-1])
        scale_flat = np.broadcast_to(scale, trial.shape[:-1]).ravel()
        proj = np.empty_like(flat)
        for i, (s_row, sc) in enumerate(zip(flat, scale_flat)):
            proj[i] = ys.project(s_row, float(sc))
        sigma_d = proj.reshape(trial.shape)
        dp = (trial - sigma_d) / (2.0 * moduli.mu)
        diss_flat = np.array(
            [ys.support(q, float(sc)) for q, sc in zip(dp.reshape(-1, dp.shape[-1]), scale_flat)]
        )
        diss = diss_flat.reshape(trial.shape[:-1])

    p_new = p0 + dp
    e_new = eps - p_new
    sigma = stress_components(moduli, e_new)
    return p_new, e_new, sigma, diss


def incremental_update(
    material: Material,
    eps_total: SymTensor,
    p_prev: DevTensor,
    yield_scale: float = 1.0,
) -> PointUpdate:
    """Solve the pointwise incremental problem from the previous plastic strain.

    The minimizer satisfies sigma_D = proj_K(trial) exactly, hence the flow
    increment lies in the normal cone at sigma_D and H(dp) = sigma_D : dp.
    """
    if not np.all(np.isfinite(eps_total.comp)):
        raise ValueError("total strain must be finite")
    p, e, s, d = incremental_update_components(
        material, eps_total.comp, p_prev.comp, yield_scale
    )
    return PointUpdate(
        p_new=DevTensor(material.dim, p),
        e_new=SymTensor(material.dim, e),
        sigma=SymTensor(material.dim, s),
        dissipation_increment=float(d),
    )
