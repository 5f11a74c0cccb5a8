"""Scenario data: boundary displacement, loads, safe-load field, margins.

All time-dependent inputs are finite sums of (spatial pattern) x (piecewise
linear scalar profile), so values and exact time derivatives are available
at every instant.  The safe-load condition requires an elementwise stress
field rho(t) equilibrated with the loads whose deviator stays inside the
yield set with uniform margin alpha; it is the coercivity certificate of
the incremental problems and a legal test stress for the variational
inequality audits.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from . import mesh as meshmod
from . import tensors
from .constitutive import ElasticModuli, Material, Polyhedral, VonMises, YieldSurface
from .mesh import GAMMA1, Mesh

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

__all__ = [
    "TimeProfile",
    "Scenario",
    "SafeLoadReport",
    "assemble_load",
    "check_safe_load",
    "load_scenario",
    "build_scenario",
    "ScenarioError",
]


class ScenarioError(ValueError):
    """Malformed scenario input (config validation failure)."""


@dataclass(frozen=True)
class TimeProfile:
    """Piecewise-linear scalar s(t) with exact one-sided derivatives."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or len(t) < 2 or np.any(np.diff(t) <= 0.0):
            raise ScenarioError("profile needs at least two strictly increasing times")
        if v.shape != t.shape:
            raise ScenarioError("profile times and values must have equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def ramp(cls, T: float) -> "TimeProfile":
        return cls(np.array([0.0, T]), np.array([0.0, T]))

    @classmethod
    def constant(cls, T: float) -> "TimeProfile":
        return cls(np.array([0.0, T]), np.array([1.0, 1.0]))

    def value(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def rate(self, t: float) -> float:
        """Right derivative (left at the final time); exact a.e."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.times) - 2)
        dt = self.times[i + 1] - self.times[i]
        return float((self.values[i + 1] - self.values[i]) / dt)


def _resolved_terms(terms, shape):
    out = []
    for pattern, profile in terms:
        arr = np.asarray(pattern, dtype=float)
        if arr.shape != shape:
            raise ScenarioError(f"pattern shape {arr.shape} does not match {shape}")
        out.append((arr, profile))
    return tuple(out)


@dataclass
class Scenario:
    """Mesh, material and time-dependent data of one evolution problem.

    ``w_terms`` are nodal (N, 2) displacement patterns; ``f_terms`` per-
    element (E, 2) body forces; ``g_terms`` pairs of (edge index array,
    (m, 2) traction pattern); ``rho_terms`` per-element (E, ncomp) stress
    patterns.  ``yield_scale`` multiplies the yield set elementwise.
    """

    mesh: Mesh
    material: Material
    T: float
    alpha: float
    w_terms: tuple = ()
    f_terms: tuple = ()
    g_terms: tuple = ()
    rho_terms: tuple = ()
    dirichlet_mode: str = "hard"
    yield_scale: np.ndarray = None
    tol_eq: float = 1e-8

    def __post_init__(self):
        if self.material.dim != 2:
            raise ScenarioError("FEM scenarios are two-dimensional")
        if self.T <= 0.0:
            raise ScenarioError("final time must be positive")
        if self.alpha <= 0.0:
            raise ScenarioError("safe-load margin alpha must be positive")
        if self.dirichlet_mode not in ("hard", "collar"):
            raise ScenarioError("dirichlet_mode must be 'hard' or 'collar'")
        if self.yield_scale is None:
            self.yield_scale = np.ones(self.mesh.n_elements)
        self.yield_scale = np.asarray(self.yield_scale, dtype=float)
        if self.yield_scale.shape != (self.mesh.n_elements,):
            raise ScenarioError("yield_scale must have one entry per element")
        if np.any(self.yield_scale <= 0.0):
            raise ScenarioError("yield_scale entries must be positive")
        n, e = self.mesh.n_nodes, self.mesh.n_elements
        self.w_terms = _resolved_terms(self.w_terms, (n, 2))
        self.f_terms = _resolved_terms(self.f_terms, (e, 2))
        g1 = self.mesh.edges_with_label(GAMMA1)
        resolved_g = []
        for entry in self.g_terms:
            if len(entry) == 3:
                idx, pattern, profile = entry
                idx = np.asarray(idx, dtype=int)
            else:
                pattern, profile = entry
                idx = g1
            pattern = np.asarray(pattern, dtype=float)
            if pattern.shape != (len(idx), 2):
                raise ScenarioError("traction pattern must be (n_edges, 2)")
            resolved_g.append((idx, pattern, profile))
        self.g_terms = tuple(resolved_g)
        self.rho_terms = _resolved_terms(self.rho_terms, (e, tensors.ncomp(2)))
        self.dirichlet_dofs = self._dirichlet_dofs()
        free = np.ones(self.mesh.n_dofs, dtype=bool)
        free[self.dirichlet_dofs] = False
        self.free_dofs = np.nonzero(free)[0]

    def _dirichlet_dofs(self) -> np.ndarray:
        nodes = self.mesh.dirichlet_nodes(self.dirichlet_mode == "collar")
        return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))

    # -- time-dependent data ------------------------------------------------

    def _sum_terms(self, terms, t, rate=False, shape=None):
        total = np.zeros(shape)
        for pattern, profile in terms:
            s = profile.rate(t) if rate else profile.value(t)
            total += s * pattern
        return total

    def w_nodal(self, t: float, rate: bool = False) -> np.ndarray:
        """Boundary-datum displacement on all nodes, flattened to (2N,)."""
        w = self._sum_terms(self.w_terms, t, rate, (self.mesh.n_nodes, 2))
        return w.ravel()

    def Ew(self, t: float, rate: bool = False) -> np.ndarray:
        """Elementwise strain of the boundary-datum field."""
        return meshmod.strain(self.mesh, self.w_nodal(t, rate))

    def f_elements(self, t: float, rate: bool = False) -> np.ndarray:
        return self._sum_terms(self.f_terms, t, rate, (self.mesh.n_elements, 2))

    def rho(self, t: float, rate: bool = False) -> np.ndarray:
        return self._sum_terms(self.rho_terms, t, rate, (self.mesh.n_elements, tensors.ncomp(2)))

    def g_edges(self, t: float, rate: bool = False):
        """List of (edge index array, per-edge traction values at t)."""
        out = []
        for idx, pattern, profile in self.g_terms:
            s = profile.rate(t) if rate else profile.value(t)
            out.append((idx, s * pattern))
        return out

    # -- integrals ------------------------------------------------------------

    def area_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Element-area-weighted Frobenius pairing of two tensor fields."""
        return float(self.mesh.areas @ tensors.inner(a, b, 2))

    def norm1(self, p: np.ndarray) -> float:
        """Integral norm of a tensor field: sum_e area |p_e|."""
        return float(self.mesh.areas @ tensors.norm(p, 2))

    def l2norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.mesh.areas @ tensors.inner(a, a, 2)))

    def dissipation(self, dp: np.ndarray) -> float:
        """Integral of the (scaled) support function of a field increment."""
        h = self.material.yield_surface.support_field(dp, self.yield_scale)
        return float(self.mesh.areas @ h)


def assemble_load(scenario: Scenario, t: float, rate: bool = False) -> np.ndarray:
    """Nodal load vector: centroid rule for f, midpoint rule for g."""
    m = scenario.mesh
    F = np.zeros(m.n_dofs)
    f = scenario.f_elements(t, rate)
    contrib = (m.areas[:, None] * f / 3.0)
    for loc in range(3):
        np.add.at(F, 2 * m.elements[:, loc], contrib[:, 0])
        np.add.at(F, 2 * m.elements[:, loc] + 1, contrib[:, 1])
    for idx, gvals in scenario.g_edges(t, rate):
        if len(idx) == 0:
            continue
        lengths = m.edge_lengths(idx)
        half = 0.5 * lengths[:, None] * gvals
        e = m.edges[idx]
        np.add.at(F, 2 * e[:, 0], half[:, 0])
        np.add.at(F, 2 * e[:, 0] + 1, half[:, 1])
        np.add.at(F, 2 * e[:, 1], half[:, 0])
        np.add.at(F, 2 * e[:, 1] + 1, half[:, 1])
    return F


def _margin_violation(ys: YieldSurface, rho_d: np.ndarray, alpha: float, scale: np.ndarray):
    """Per-element amount by which rho_D + alpha-ball leaves the yield set."""
    if isinstance(ys, VonMises):
        return np.maximum(tensors.norm(rho_d, ys.dim) + alpha - ys.radius * scale, 0.0)
    if isinstance(ys, Polyhedral):
        z = tensors.dev_to_coords(rho_d, ys.dim)
        slack = z @ ys._A.T + alpha - scale[:, None] * ys._c[None, :]
        return np.maximum(slack, 0.0).max(axis=1)
    raise TypeError(f"unsupported yield surface {type(ys).__name__}")


@dataclass(frozen=True)
class SafeLoadReport:
    """Outcome of the safe-load audit at one time."""

    t: float
    margin_violation: float          # max over elements, 0 when satisfied
    violating_elements: np.ndarray   # element ids with positive violation
    equilibrium_residual: float      # free-dof residual of rho against loads
    equilibrium_tol: float           # tol_eq scaled by the load magnitude
    coercivity_gap: float            # min over samples of H(p)-<rho_D|p>-alpha|p|_1

    @property
    def ok(self) -> bool:
        return (
            self.margin_violation <= 0.0
            and self.equilibrium_residual <= self.equilibrium_tol
            and self.coercivity_gap >= -1e-10
        )


def check_safe_load(
    scenario: Scenario, t: float, n_samples: int = 50, seed: int = 20_240_601
) -> SafeLoadReport:
    """Verify margin, discrete equilibrium of rho, and the coercivity bound.

    The coercivity bound H(p) - <rho_D|p> >= alpha ||p||_1 is sampled on
    random elementwise deviatoric fields; it is implied by the margin but
    checked independently (it is the inequality actually used by the
    solver's existence argument).
    """
    m = scenario.mesh
    ys = scenario.material.yield_surface
    rho = scenario.rho(t)
    rho_d = tensors.deviator_components(rho, 2)
    viol = _margin_violation(ys, rho_d, scenario.alpha, scenario.yield_scale)
    bad = np.nonzero(viol > 0.0)[0]

    F = assemble_load(scenario, t)
    resid_vec = meshmod.scatter_internal_force(m, rho) - F
    eq_res = float(np.linalg.norm(resid_vec[scenario.free_dofs]))
    eq_tol = scenario.tol_eq * max(1.0, float(np.linalg.norm(F)))

    rng = np.random.default_rng(seed)
    gap = np.inf
    for _ in range(n_samples):
        raw = rng.standard_normal((m.n_elements, tensors.ncomp(2)))
        p = tensors.deviator_components(raw, 2)
        lhs = scenario.dissipation(p) - scenario.area_inner(rho_d, p)
        gap = min(gap, lhs - scenario.alpha * scenario.norm1(p))

    return SafeLoadReport(
        t=t,
        margin_violation=float(viol.max(initial=0.0)),
        violating_elements=bad,
        equilibrium_residual=eq_res,
        equilibrium_tol=eq_tol,
        coercivity_gap=float(gap),
    )


# -- TOML loading -------------------------------------------------------------


def _profile_from_config(spec, T: float) -> TimeProfile:
    if spec is None or spec == "ramp":
        return TimeProfile.ramp(T)
    if spec == "constant":
        return TimeProfile.constant(T)
    if isinstance(spec, list):
        table = np.asarray(spec, dtype=float)
        if table.ndim != 2 or table.shape[1] != 2:
            raise ScenarioError("profile table must be a list of [t, value] pairs")
        return TimeProfile(table[:, 0], table[:, 1])
    raise ScenarioError(f"unknown profile spec {spec!r}")


def _w_pattern(kind: str, cfg: dict, nodes: np.ndarray) -> np.ndarray:
    coef = float(cfg.get("coefficient", 1.0))
    pat = np.zeros_like(nodes)
    if kind == "shear_x":
        pat[:, 0] = coef * nodes[:, 1]
    elif kind == "stretch_x":
        pat[:, 0] = coef * nodes[:, 0]
    elif kind == "stretch_y":
        pat[:, 1] = coef * nodes[:, 1]
    elif kind == "uniform":
        comp = cfg.get("components")
        if comp is None or len(comp) != 2:
            raise ScenarioError("uniform displacement pattern needs components = [ux, uy]")
        pat[:, 0], pat[:, 1] = float(comp[0]), float(comp[1])
    else:
        raise ScenarioError(f"unknown displacement pattern {kind!r}")
    return pat


def _mesh_from_config(cfg: dict, base_dir) -> Mesh:
    if "file" in cfg:
        import os

        return meshmod.read_mesh(os.path.join(base_dir, cfg["file"]))
    builtin = cfg.get("builtin", "rectangle")
    if builtin != "rectangle":
        raise ScenarioError(f"unknown mesh builtin {builtin!r}")
    return meshmod.structured_rectangle(
        nx=int(cfg.get("nx", 8)),
        ny=int(cfg.get("ny", 8)),
        lx=float(cfg.get("lx", 1.0)),
        ly=float(cfg.get("ly", 1.0)),
        gamma0=tuple(cfg.get("gamma0", ["bottom"])),
        gamma1=tuple(cfg["gamma1"]) if "gamma1" in cfg else None,
    )


def _material_from_config(cfg: dict) -> Material:
    moduli = ElasticModuli(dim=2, mu=float(cfg["mu"]), kappa=float(cfg["kappa"]))
    kind = cfg.get("yield", "von_mises")
    if kind == "von_mises":
        ys = VonMises(dim=2, radius=float(cfg.get("radius", 1.0)))
    elif kind == "polyhedral":
        ys = Polyhedral(
            dim=2,
            normals=np.asarray(cfg["normals"], dtype=float),
            offsets=np.asarray(cfg["offsets"], dtype=float),
        )
    else:
        raise ScenarioError(f"unknown yield kind {kind!r}")
    return Material(moduli=moduli, yield_surface=ys)


def build_scenario(cfg: dict, base_dir=".") -> Scenario:
    """Construct a scenario from parsed TOML (see README for the schema)."""
    try:
        mesh = _mesh_from_config(cfg.get("mesh", {}), base_dir)
        material = _material_from_config(cfg["material"])
        T = float(cfg.get("time", {}).get("T", 1.0))
        mode = cfg.get("dirichlet", {}).get("mode", "hard")
        if mode == "collar":
            width = float(cfg["dirichlet"].get("width", 0.05))
            mesh = meshmod.add_collar(mesh, width)

        w_terms = []
        for term in cfg.get("loads", {}).get("w", []):
            pat = _w_pattern(term.get("pattern", "uniform"), term, mesh.nodes)
            w_terms.append((pat, _profile_from_config(term.get("profile"), T)))
        f_terms = []
        for term in cfg.get("loads", {}).get("f", []):
            comp = term.get("components", [0.0, 0.0])
            pat = np.tile(np.asarray(comp, dtype=float), (mesh.n_elements, 1))
            f_terms.append((pat, _profile_from_config(term.get("profile"), T)))
        g_terms = []
        for term in cfg.get("loads", {}).get("g", []):
            comp = np.asarray(term.get("components", [0.0, 0.0]), dtype=float)
            if "group" in term:
                if term["group"] not in mesh.edge_groups:
                    raise ScenarioError(f"unknown edge group {term['group']!r}")
                idx = np.asarray(mesh.edge_groups[term["group"]], dtype=int)
            else:
                idx = mesh.edges_with_label(GAMMA1)
            pat = np.tile(comp, (len(idx), 1))
            g_terms.append((idx, pat, _profile_from_config(term.get("profile"), T)))

        sl = cfg.get("safe_load", {})
        alpha = float(sl.get("alpha", 0.0))
        rho_terms = []
        for term in sl.get("rho", []):
            comp = np.asarray(term.get("components", [0.0, 0.0, 0.0]), dtype=float)
            pat = np.tile(comp, (mesh.n_elements, 1))
            rho_terms.append((pat, _profile_from_config(term.get("profile"), T)))

        yield_scale = None
        inc = cfg.get("inclusion")
        if inc is not None:
            if inc.get("kind", "strip_y") != "strip_y":
                raise ScenarioError(f"unknown inclusion kind {inc.get('kind')!r}")
            y0, y1 = float(inc["y0"]), float(inc["y1"])
            factor = float(inc["factor"])
            cy = mesh.centroids[:, 1]
            yield_scale = np.where((cy >= y0) & (cy <= y1), factor, 1.0)

        return Scenario(
            mesh=mesh,
            material=material,
            T=T,
            alpha=alpha,
            w_terms=tuple(w_terms),
            f_terms=tuple(f_terms),
            g_terms=tuple(g_terms),
            rho_terms=tuple(rho_terms),
            dirichlet_mode=mode,
            yield_scale=yield_scale,
            tol_eq=float(sl.get("tol_eq", 1e-8)),
        )
    except KeyError as exc:
        raise ScenarioError(f"missing scenario key: {exc}") from exc


def load_scenario(path) -> Scenario:
    """Read a scenario TOML file."""
    import os

    with open(path, "rb") as fh:
        cfg = _toml.load(fh)
    return build_scenario(cfg, base_dir=os.path.dirname(os.path.abspath(path)))
