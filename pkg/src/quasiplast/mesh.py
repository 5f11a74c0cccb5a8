"""Triangulated 2D domains: geometry, P1 strains, boundary labeling, collar.

Displacements are nodal (2 dofs per node, interleaved x/y); strains, plastic
strains and stresses are elementwise-constant component vectors.  Boundary
edges carry exactly one label: ``gamma0`` (prescribed displacement),
``gamma1`` (prescribed traction) or ``collar_outer`` (hard Dirichlet on the
outer rim of a collar layer).

The relaxed Dirichlet condition (boundary plastic slip) is realized by
:func:`add_collar`: a one-element-thick layer of the same elastoplastic
material is extruded outside the ``gamma0`` edges, the original edges become
interior, and the prescribed displacement is imposed on the layer's outer
rim.  Plastic strain concentrating in the layer plays the role of boundary
slip and can be aggregated per original edge with :meth:`Mesh.collar_slip`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensors

__all__ = ["Mesh", "strain", "structured_rectangle", "add_collar",
           "read_mesh", "write_mesh", "GAMMA0", "GAMMA1", "COLLAR_OUTER"]

GAMMA0 = "gamma0"
GAMMA1 = "gamma1"
COLLAR_OUTER = "collar_outer"
_LABELS = (GAMMA0, GAMMA1, COLLAR_OUTER)


@dataclass
class Mesh:
    """Conforming triangle mesh with labeled boundary edges (dim = 2)."""

    nodes: np.ndarray                 # (N, 2)
    elements: np.ndarray              # (E, 3) node ids, CCW after validation
    edges: np.ndarray                 # (B, 2) labeled boundary edges
    edge_labels: list                 # one label per edge row
    collar_elements: np.ndarray = None  # (E,) bool
    edge_groups: dict = field(default_factory=dict)   # name -> edge index list
    collar_slip_edges: list = field(default_factory=list)  # (edge nodes, [elem ids])

    dim = 2

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=int)
        self.edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if self.collar_elements is None:
            self.collar_elements = np.zeros(len(self.elements), dtype=bool)
        self.collar_elements = np.asarray(self.collar_elements, dtype=bool)
        self._validate_and_orient()
        self._build_geometry()

    # -- validation -------------------------------------------------------

    def _validate_and_orient(self):
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ValueError("nodes must be an (N, 2) array")
        if self.elements.ndim != 2 or self.elements.shape[1] != 3:
            raise ValueError("elements must be an (E, 3) array")
        if len(self.edge_labels) != len(self.edges):
            raise ValueError("one label per boundary edge is required")
        for lab in self.edge_labels:
            if lab not in _LABELS:
                raise ValueError(f"unknown edge label {lab!r}")
        # Orient every triangle counterclockwise.
        p = self.nodes[self.elements]
        det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 2, 0] - p[:, 0, 0]
        ) * (p[:, 1, 1] - p[:, 0, 1])
        if np.any(det == 0.0):
            raise ValueError("degenerate (zero-area) element")
        flip = det < 0.0
        self.elements[flip] = self.elements[flip][:, [0, 2, 1]]
        # Conformity: boundary edges are those incident to exactly one element.
        counts = {}
        for tri in self.elements:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        if any(c > 2 for c in counts.values()):
            raise ValueError("non-conforming connectivity: edge shared by >2 elements")
        boundary = {k for k, c in counts.items() if c == 1}
        labeled = [(min(a, b), max(a, b)) for a, b in self.edges]
        if len(set(labeled)) != len(labeled):
            raise ValueError("a boundary edge is labeled more than once")
        if set(labeled) != boundary:
            missing = boundary - set(labeled)
            extra = set(labeled) - boundary
            raise ValueError(
                f"boundary labeling mismatch (missing {len(missing)}, extra {len(extra)})"
            )
        if not any(lab in (GAMMA0, COLLAR_OUTER) for lab in self.edge_labels):
            raise ValueError("the Dirichlet part of the boundary must be nonempty")

    def _build_geometry(self):
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
            y[:, 1] - y[:, 0]
        )
        self.areas = 0.5 * det  # positive after orientation
        # Barycentric gradients: grad lambda_i = (b_i, c_i) / det.
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        gx = b / det[:, None]
        gy = c / det[:, None]
        # Strain-displacement matrices: (E, 3 comps, 6 local dofs), local dof
        # order (ux1, uy1, ux2, uy2, ux3, uy3), components (e11, e22, e12).
        E = len(self.elements)
        B = np.zeros((E, 3, 6))
        B[:, 0, 0::2] = gx
        B[:, 1, 1::2] = gy
        B[:, 2, 0::2] = 0.5 * gy
        B[:, 2, 1::2] = 0.5 * gx
        self.B = B
        dofs = np.empty((E, 6), dtype=int)
        dofs[:, 0::2] = 2 * self.elements
        dofs[:, 1::2] = 2 * self.elements + 1
        self.element_dofs = dofs
        self.centroids = p.mean(axis=1)

    # -- queries ----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_dofs(self) -> int:
        return 2 * len(self.nodes)

    def edges_with_label(self, label: str) -> np.ndarray:
        idx = [i for i, lab in enumerate(self.edge_labels) if lab == label]
        return np.asarray(idx, dtype=int)

    def edge_lengths(self, edge_idx: np.ndarray) -> np.ndarray:
        e = self.edges[edge_idx]
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def dirichlet_nodes(self, collar_mode: bool) -> np.ndarray:
        label = COLLAR_OUTER if collar_mode else GAMMA0
        idx = self.edges_with_label(label)
        if len(idx) == 0:
            raise ValueError(f"no edges labeled {label!r}")
        return np.unique(self.edges[idx].ravel())

    def collar_slip(self, p_field: np.ndarray) -> list:
        """Aggregate collar plastic strain per original gamma0 edge.

        Returns a list of (edge_nodes, area-weighted mean plastic strain);
        empty when the mesh has no collar.
        """
        out = []
        for edge_nodes, elems in self.collar_slip_edges:
            w = self.areas[elems]
            mean = (w[:, None] * p_field[elems]).sum(axis=0) / w.sum()
            out.append((tuple(edge_nodes), mean))
        return out


def strain(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Elementwise symmetric gradient of the P1 displacement field."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_dofs,):
        raise ValueError(f"displacement vector must have length {mesh.n_dofs}")
    local = u[mesh.element_dofs]  # (E, 6)
    return np.einsum("ecd,ed->ec", mesh.B, local)


def scatter_internal_force(mesh: Mesh, sig: np.ndarray) -> np.ndarray:
    """Nodal force vector of an elementwise stress: sum_e area B^T W sigma."""
    sig = np.asarray(sig, dtype=float)
    w = tensors.component_weights(2)
    contrib = np.einsum("ecd,ec->ed", mesh.B, sig * w) * mesh.areas[:, None]
    out = np.zeros(mesh.n_dofs)
    np.add.at(out, mesh.element_dofs, contrib)
    return out


_SIDES = ("bottom", "right", "top", "left")


def structured_rectangle(
    nx: int,
    ny: int,
    lx: float = 1.0,
    ly: float = 1.0,
    gamma0=("bottom",),
    gamma1=None,
) -> Mesh:
    """Uniform right-triangle mesh of [0,lx] x [0,ly] with labeled sides.

    Sides not listed in ``gamma0`` default to ``gamma1``.  Edge groups named
    after the sides are attached for load targeting.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    gamma0 = tuple(gamma0)
    gamma1 = tuple(gamma1) if gamma1 is not None else tuple(
        s for s in _SIDES if s not in gamma0
    )
    for s in gamma0 + gamma1:
        if s not in _SIDES:
            raise ValueError(f"unknown side {s!r}")
    if set(gamma0) & set(gamma1):
        raise ValueError("a side cannot be both gamma0 and gamma1")

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    elements = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            elements.append([a, b, c])
            elements.append([a, c, d])

    side_edges = {
        "bottom": [(nid(i, 0), nid(i + 1, 0)) for i in range(nx)],
        "top": [(nid(i, ny), nid(i + 1, ny)) for i in range(nx)],
        "left": [(nid(0, j), nid(0, j + 1)) for j in range(ny)],
        "right": [(nid(nx, j), nid(nx, j + 1)) for j in range(ny)],
    }
    edges, labels, groups = [], [], {}
    for side in _SIDES:
        label = GAMMA0 if side in gamma0 else GAMMA1
        groups[side] = list(range(len(edges), len(edges) + len(side_edges[side])))
        for ed in side_edges[side]:
            edges.append(ed)
            labels.append(label)

    return Mesh(
        nodes=nodes,
        elements=np.asarray(elements),
        edges=np.asarray(edges),
        edge_labels=labels,
        edge_groups=groups,
    )


def add_collar(mesh: Mesh, width: float) -> Mesh:
    """Extrude a layer of elements outside the gamma0 edges.

    The original gamma0 edges become interior; the layer's outer rim (and
    the short end caps of each gamma0 chain) are labeled ``collar_outer``.
    Original node ids are preserved, so fields on the base mesh embed into
    the collar mesh by index.
    """
    if width <= 0.0:
        raise ValueError("collar width must be positive")
    if np.any(mesh.collar_elements):
        raise ValueError("mesh already has a collar")
    g0 = mesh.edges_with_label(GAMMA0)
    if len(g0) == 0:
        raise ValueError("no gamma0 edges to extrude")

    # Outward edge normals: rotate the CCW-ordered boundary tangent.  Find,
    # for each gamma0 edge, its owner triangle and point away from it.
    edge_owner = {}
    for ei, tri in enumerate(mesh.elements):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edge_owner[(min(a, b), max(a, b))] = ei
    normals = {}
    for k in g0:
        a, b = mesh.edges[k]
        owner = mesh.elements[edge_owner[(min(a, b), max(a, b))]]
        opp = [n for n in owner if n != a and n != b][0]
        t = mesh.nodes[b] - mesh.nodes[a]
        n = np.array([t[1], -t[0]])
        mid = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
        if np.dot(n, mesh.nodes[opp] - mid) > 0.0:
            n = -n
        normals[k] = n / np.linalg.norm(n)

    # Averaged outward direction per gamma0 node.
    node_normals = {}
    for k in g0:
        for nd in mesh.edges[k]:
            node_normals.setdefault(nd, []).append(normals[k])
    offsets = {
        nd: width * (sum(ns) / np.linalg.norm(sum(ns))) for nd, ns in node_normals.items()
    }

    nodes = [mesh.nodes]
    outer_id = {}
    next_id = mesh.n_nodes
    for nd in sorted(offsets):
        outer_id[nd] = next_id
        nodes.append((mesh.nodes[nd] + offsets[nd])[None, :])
        next_id += 1
    nodes = np.vstack(nodes)

    collar_flags = [mesh.collar_elements, np.ones(2 * len(g0), dtype=bool)]
    slip_edges = []
    new_elems = []
    eid = mesh.n_elements
    for k in g0:
        a, b = mesh.edges[k]
        ao, bo = outer_id[a], outer_id[b]
        new_elems.append([a, b, bo])
        new_elems.append([a, bo, ao])
        slip_edges.append(((int(a), int(b)), [eid, eid + 1]))
        eid += 2
    elements = np.vstack([mesh.elements, np.asarray(new_elems)])

    # Rebuild labels: keep gamma1, drop absorbed gamma0, add the new rim and
    # any end caps (nodes belonging to a single gamma0 edge).
    group_of = {}
    for name, idxs in mesh.edge_groups.items():
        for k in idxs:
            group_of[k] = name
    edges, labels = [], []
    groups = {name: [] for name in mesh.edge_groups}
    for k in mesh.edges_with_label(GAMMA1):
        if k in group_of:
            groups[group_of[k]].append(len(edges))
        edges.append(tuple(mesh.edges[k]))
        labels.append(GAMMA1)
    for k in g0:
        a, b = mesh.edges[k]
        edges.append((outer_id[a], outer_id[b]))
        labels.append(COLLAR_OUTER)
    edge_count = {}
    for k in g0:
        for nd in mesh.edges[k]:
            edge_count[nd] = edge_count.get(nd, 0) + 1
    for nd, cnt in sorted(edge_count.items()):
        if cnt == 1:  # end of a gamma0 chain: cap edge from nd to its offset
            edges.append((nd, outer_id[nd]))
            labels.append(COLLAR_OUTER)

    return Mesh(
        nodes=nodes,
        elements=elements,
        edges=np.asarray(edges),
        edge_labels=labels,
        collar_elements=np.concatenate(collar_flags),
        edge_groups=groups,
        collar_slip_edges=slip_edges,
    )


def write_mesh(path, mesh: Mesh) -> None:
    """Plain-text mesh file: nodes, elements (with collar flag), labeled edges."""
    with open(path, "w") as fh:
        fh.write("# quasiplast mesh: nodes <N> / elements <E> / edges <B>\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for tri, flag in zip(mesh.elements, mesh.collar_elements):
            fh.write(f"{tri[0]} {tri[1]} {tri[2]} {int(flag)}\n")
        fh.write(f"edges {len(mesh.edges)}\n")
        for (a, b), lab in zip(mesh.edges, mesh.edge_labels):
            fh.write(f"{a} {b} {lab}\n")


def read_mesh(path) -> Mesh:
    """Read the plain-text format written by :func:`write_mesh`."""
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos][0] != word:
            raise ValueError(f"malformed mesh file: expected {word!r} section")
        count = int(tokens[pos][1])
        pos += 1
        return count

    n = expect("nodes")
    nodes = np.array([[float(v) for v in tokens[pos + i]] for i in range(n)])
    pos += n
    e = expect("elements")
    rows = [tokens[pos + i] for i in range(e)]
    pos += e
    elements = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows])
    collar = np.array([bool(int(r[3])) if len(r) > 3 else False for r in rows])
    b = expect("edges")
    edges, labels = [], []
    for i in range(b):
        r = tokens[pos + i]
        edges.append((int(r[0]), int(r[1])))
        labels.append(r[2])
    return Mesh(
        nodes=nodes,
        elements=elements,
        edges=np.asarray(edges),
        edge_labels=labels,
        collar_elements=collar,
    )
