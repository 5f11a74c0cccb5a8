"""Symmetric-tensor algebra on compressed (Voigt-style) component vectors.

Symmetric n x n tensors (n = 2 or 3) are stored by their independent
components, diagonal entries first:

    n=2: (t11, t22, t12)
    n=3: (t11, t22, t33, t12, t13, t23)

Off-diagonal components carry weight 2 in the inner product so that
``inner(a, b)`` equals the Frobenius product of the full matrices.  All
module-level functions broadcast over leading axes, so a field of tensors
is simply an array of shape ``(..., ncomp(dim))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ncomp",
    "dev_dim",
    "component_weights",
    "identity",
    "trace",
    "deviator_components",
    "inner",
    "norm",
    "sym_dyad_components",
    "to_matrix",
    "from_matrix",
    "deviatoric_basis",
    "SymTensor",
    "DevTensor",
    "deviator",
    "sym_dyad",
]

_VALID_DIMS = (2, 3)


def _check_dim(dim: int) -> None:
    if dim not in _VALID_DIMS:
        raise ValueError(f"spatial dimension must be 2 or 3, got {dim}")


def ncomp(dim: int) -> int:
    """Number of independent components of a symmetric dim x dim tensor."""
    _check_dim(dim)
    return dim * (dim + 1) // 2


def dev_dim(dim: int) -> int:
    """Dimension of the trace-free (deviatoric) subspace."""
    return ncomp(dim) - 1


def component_weights(dim: int) -> np.ndarray:
    """Inner-product weights: 1 on diagonal slots, 2 on off-diagonal slots."""
    _check_dim(dim)
    w = np.ones(ncomp(dim))
    w[dim:] = 2.0
    return w


def identity(dim: int) -> np.ndarray:
    """Component vector of the identity tensor."""
    _check_dim(dim)
    comp = np.zeros(ncomp(dim))
    comp[:dim] = 1.0
    return comp


def trace(comp: np.ndarray, dim: int) -> np.ndarray:
    """Trace; broadcasts over leading axes."""
    comp = np.asarray(comp)
    return comp[..., :dim].sum(axis=-1)


def deviator_components(comp: np.ndarray, dim: int) -> np.ndarray:
    """Trace-free part, obtained by removing (tr/dim) from the diagonal."""
    comp = np.asarray(comp, dtype=float)
    out = comp.copy()
    out[..., :dim] -= (trace(comp, dim) / dim)[..., None]
    return out


def inner(a: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    """Frobenius product a:b of symmetric tensors in component form."""
    a = np.asarray(a)
    b = np.asarray(b)
    return (a * b * component_weights(dim)).sum(axis=-1)


def norm(comp: np.ndarray, dim: int) -> np.ndarray:
    """Frobenius norm |a| = sqrt(a:a)."""
    return np.sqrt(inner(comp, comp, dim))


def sym_dyad_components(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Components of the symmetrized dyad with entries (a_i b_j + a_j b_i)/2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape[-1] not in _VALID_DIMS:
        raise ValueError(f"vector shapes {a.shape} and {b.shape} do not match a 2D/3D dyad")
    dim = a.shape[-1]
    diag = a * b
    if dim == 2:
        off = 0.5 * (a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0])
        return np.stack([diag[..., 0], diag[..., 1], off], axis=-1)
    off01 = 0.5 * (a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0])
    off02 = 0.5 * (a[..., 0] * b[..., 2] + a[..., 2] * b[..., 0])
    off12 = 0.5 * (a[..., 1] * b[..., 2] + a[..., 2] * b[..., 1])
    return np.stack([diag[..., 0], diag[..., 1], diag[..., 2], off01, off02, off12], axis=-1)


def to_matrix(comp: np.ndarray, dim: int) -> np.ndarray:
    """Full symmetric matrix for a single component vector."""
    comp = np.asarray(comp, dtype=float)
    m = np.zeros((dim, dim))
    m[np.diag_indices(dim)] = comp[:dim]
    if dim == 2:
        m[0, 1] = m[1, 0] = comp[2]
    else:
        m[0, 1] = m[1, 0] = comp[3]
        m[0, 2] = m[2, 0] = comp[4]
        m[1, 2] = m[2, 1] = comp[5]
    return m


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Component vector of a symmetric matrix (symmetry is not checked)."""
    m = np.asarray(m, dtype=float)
    dim = m.shape[0]
    _check_dim(dim)
    if dim == 2:
        return np.array([m[0, 0], m[1, 1], 0.5 * (m[0, 1] + m[1, 0])])
    return np.array(
        [
            m[0, 0],
            m[1, 1],
            m[2, 2],
            0.5 * (m[0, 1] + m[1, 0]),
            0.5 * (m[0, 2] + m[2, 0]),
            0.5 * (m[1, 2] + m[2, 1]),
        ]
    )


def deviatoric_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of the trace-free subspace, shape (dev_dim, ncomp).

    Rows are component vectors, orthonormal under :func:`inner`.  Used to map
    deviatoric tensors to plain Euclidean coordinates (polytopes, Qhull).
    """
    _check_dim(dim)
    if dim == 2:
        basis = np.array(
            [
                [1.0 / np.sqrt(2.0), -1.0 / np.sqrt(2.0), 0.0],
                [0.0, 0.0, 1.0 / np.sqrt(2.0)],
            ]
        )
    else:
        s2, s6 = np.sqrt(2.0), np.sqrt(6.0)
        basis = np.array(
            [
                [1.0 / s2, -1.0 / s2, 0.0, 0.0, 0.0, 0.0],
                [1.0 / s6, 1.0 / s6, -2.0 / s6, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0 / s2, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0 / s2, 0.0],
                [0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / s2],
            ]
        )
    return basis


def dev_to_coords(comp: np.ndarray, dim: int) -> np.ndarray:
    """Coordinates of a trace-free tensor in the orthonormal deviatoric basis."""
    basis = deviatoric_basis(dim)
    w = component_weights(dim)
    return np.asarray(comp) @ (basis * w).T


def coords_to_dev(coords: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`dev_to_coords`."""
    return np.asarray(coords) @ deviatoric_basis(dim)


@dataclass(frozen=True)
class SymTensor:
    """Immutable symmetric tensor; ``comp`` follows the module's ordering."""

    dim: int
    comp: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_dim(self.dim)
        comp = np.asarray(self.comp, dtype=float)
        if comp.shape != (ncomp(self.dim),):
            raise ValueError(
                f"expected {ncomp(self.dim)} components for dim={self.dim}, got shape {comp.shape}"
            )
        comp = comp.copy()
        comp.flags.writeable = False
        object.__setattr__(self, "comp", comp)

    @classmethod
    def zero(cls, dim: int) -> "SymTensor":
        return cls(dim, np.zeros(ncomp(dim)))

    @classmethod
    def identity(cls, dim: int) -> "SymTensor":
        return cls(dim, identity(dim))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "SymTensor":
        m = np.asarray(m, dtype=float)
        return cls(m.shape[0], from_matrix(m))

    def trace(self) -> float:
        return float(trace(self.comp, self.dim))

    def norm(self) -> float:
        return float(norm(self.comp, self.dim))

    def dot(self, other: "SymTensor") -> float:
        self._check_compatible(other)
        return float(inner(self.comp, other.comp, self.dim))

    def deviator(self) -> "DevTensor":
        return DevTensor(self.dim, deviator_components(self.comp, self.dim))

    def matrix(self) -> np.ndarray:
        return to_matrix(self.comp, self.dim)

    def _check_compatible(self, other: "SymTensor") -> None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._check_compatible(other)
        return SymTensor(self.dim, self.comp + other.comp)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        self._check_compatible(other)
        return SymTensor(self.dim, self.comp - other.comp)

    def __mul__(self, s: float) -> "SymTensor":
        return type(self)(self.dim, self.comp * float(s))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return type(self)(self.dim, -self.comp)


class DevTensor(SymTensor):
    """Symmetric tensor constrained to be trace-free."""

    _TRACE_TOL = 1e-12

    def __post_init__(self):
        super().__post_init__()
        tr = abs(trace(self.comp, self.dim))
        if tr > self._TRACE_TOL * max(1.0, float(norm(self.comp, self.dim))):
            raise ValueError(f"components are not trace-free (tr = {tr:g})")

    def __add__(self, other: SymTensor) -> SymTensor:
        out = super().__add__(other)
        if isinstance(other, DevTensor):
            return DevTensor(out.dim, out.comp)
        return out

    def __sub__(self, other: SymTensor) -> SymTensor:
        out = super().__sub__(other)
        if isinstance(other, DevTensor):
            return DevTensor(out.dim, out.comp)
        return out


def deviator(xi: SymTensor) -> DevTensor:
    """Trace-free part of ``xi``: xi = deviator(xi) + (tr xi / n) I."""
    return xi.deviator()


def sym_dyad(a: np.ndarray, b: np.ndarray) -> SymTensor:
    """Symmetrized tensor product of two vectors of equal length 2 or 3."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"expected two equal-length vectors, got {a.shape} and {b.shape}")
    return SymTensor(a.shape[0], sym_dyad_components(a, b))
