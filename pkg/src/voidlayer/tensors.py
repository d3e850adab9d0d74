"""Rank-4 elasticity tensors and symmetric-matrix algebra, dimension-generic (d = 2 or 3).

Voigt convention used throughout: engineering shears.  The stress vector
holds plain components, the strain vector doubles the off-diagonal entries,
so the Voigt matrix is symmetric whenever the tensor has major symmetry and
the energy E : C E is reproduced exactly by the vector form.  Coordinate 0
is the layer-thickness direction; coordinates 1..d-1 are in-plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ElasticTensor4",
    "voigt_pairs",
    "strain_basis",
    "as_sym",
    "sym_to_voigt_strain",
    "voigt_stress_to_sym",
    "isotropic_tensor",
    "apply_tensor",
    "verify_tensor_class",
]


def voigt_pairs(dim: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i <= j, defining the Voigt ordering for dimension `dim`."""
    if dim == 2:
        return [(0, 0), (1, 1), (0, 1)]
    if dim == 3:
        return [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
    raise ValueError(f"unsupported dimension {dim}")


def strain_basis(i: int, j: int, dim: int) -> np.ndarray:
    """Symmetrised unit strain M_ij = (e_i x e_j + e_j x e_i) / 2."""
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValueError(f"indices ({i},{j}) out of range for dimension {dim}")
    m = np.zeros((dim, dim))
    m[i, j] += 0.5
    m[j, i] += 0.5
    return m


def as_sym(entries) -> np.ndarray:
    """Validate and return a symmetric d x d matrix."""
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(m).max())):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def sym_to_voigt_strain(e: np.ndarray) -> np.ndarray:
    """Symmetric matrix -> engineering-strain Voigt vector (off-diagonals doubled)."""
    dim = e.shape[0]
    pairs = voigt_pairs(dim)
    v = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        v[k] = e[i, j] if i == j else 2.0 * e[i, j]
    return v


def voigt_stress_to_sym(s: np.ndarray, dim: int) -> np.ndarray:
    """Stress Voigt vector (plain components) -> symmetric matrix."""
    out = np.zeros((dim, dim))
    for k, (i, j) in enumerate(voigt_pairs(dim)):
        out[i, j] = s[k]
        out[j, i] = s[k]
    return out


@dataclass(frozen=True)
class ElasticTensor4:
    """Rank-4 elasticity tensor with minor and major symmetries, Voigt-stored.

    Minor symmetries hold by construction of the Voigt storage; major
    symmetry is the symmetry of `voigt`.  Immutable, safe to share across
    workers.
    """

    dimension: int
    voigt: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = len(voigt_pairs(self.dimension))
        v = np.asarray(self.voigt, dtype=float)
        if v.shape != (n, n):
            raise ValueError(f"Voigt matrix must be {n}x{n} for d={self.dimension}")
        if not np.allclose(v, v.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(v).max())):
            raise ValueError("Voigt matrix must be symmetric (major symmetry)")
        object.__setattr__(self, "voigt", 0.5 * (v + v.T))
        self.voigt.setflags(write=False)

    @classmethod
    def from_array4(cls, a: np.ndarray) -> "ElasticTensor4":
        """Build from a full 4-index array (must carry minor/major symmetries)."""
        dim = a.shape[0]
        pairs = voigt_pairs(dim)
        v = np.empty((len(pairs), len(pairs)))
        for r, (i, j) in enumerate(pairs):
            for c, (k, h) in enumerate(pairs):
                v[r, c] = a[i, j, k, h]
        return cls(dim, v)

    def as_array4(self) -> np.ndarray:
        """Full 4-index array b_ijkh."""
        dim = self.dimension
        a = np.zeros((dim, dim, dim, dim))
        for r, (i, j) in enumerate(voigt_pairs(dim)):
            for c, (k, h) in enumerate(voigt_pairs(dim)):
                val = self.voigt[r, c]
                for ii, jj in ((i, j), (j, i)):
                    for kk, hh in ((k, h), (h, k)):
                        a[ii, jj, kk, hh] = val
        return a

    def mandel(self) -> np.ndarray:
        """Mandel (orthonormal-basis) matrix; its eigenvalues are the tensor's on symmetric matrices."""
        pairs = voigt_pairs(self.dimension)
        s = np.array([1.0 if i == j else np.sqrt(2.0) for (i, j) in pairs])
        return self.voigt * np.outer(s, s)

    def apply(self, strain: np.ndarray) -> np.ndarray:
        """Constitutive product C : E for a symmetric strain matrix E."""
        if strain.shape != (self.dimension, self.dimension):
            raise ValueError(
                f"strain has shape {strain.shape}, tensor dimension is {self.dimension}"
            )
        ev = sym_to_voigt_strain(strain)
        return voigt_stress_to_sym(self.voigt @ ev, self.dimension)

    def contract(self, e1: np.ndarray, e2: np.ndarray) -> float:
        """Energy pairing C e1 : e2."""
        return float(sym_to_voigt_strain(e1) @ self.voigt @ sym_to_voigt_strain(e2))

    def scaled(self, factor: float) -> "ElasticTensor4":
        return ElasticTensor4(self.dimension, factor * np.asarray(self.voigt))

    def to_csv(self) -> str:
        """One-line header (dimension, convention tag) plus the flattened Voigt matrix."""
        lines = [f"dimension={self.dimension},convention=voigt_engineering"]
        for row in self.voigt:
            lines.append(",".join(format(x, ".17g") for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "ElasticTensor4":
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = dict(item.split("=") for item in lines[0].split(","))
        dim = int(header["dimension"])
        v = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
        return cls(dim, v)


def isotropic_tensor(lam: float, mu: float, dimension: int) -> ElasticTensor4:
    """Isotropic tensor C E = lam tr(E) I + 2 mu E.

    Coercivity constant alpha = min(2 mu, d lam + 2 mu).
    """
    if mu <= 0.0:
        raise ValueError(f"shear modulus must be positive, got mu={mu}")
    if lam + 2.0 * mu / dimension <= 0.0:
        raise ValueError(f"bulk modulus must be positive, got lam={lam}, mu={mu}")
    pairs = voigt_pairs(dimension)
    n = len(pairs)
    v = np.zeros((n, n))
    for r in range(dimension):
        for c in range(dimension):
            v[r, c] = lam + (2.0 * mu if r == c else 0.0)
    for r in range(dimension, n):
        v[r, r] = mu
    return ElasticTensor4(dimension, v)


def isotropic_coercivity(lam: float, mu: float, dimension: int) -> float:
    """Exact coercivity constant of the isotropic tensor on symmetric matrices."""
    return min(2.0 * mu, dimension * lam + 2.0 * mu)


def apply_tensor(tensor: ElasticTensor4, strain: np.ndarray) -> np.ndarray:
    """Module-level alias for ElasticTensor4.apply."""
    return tensor.apply(strain)


def verify_tensor_class(
    tensor: ElasticTensor4, alpha: float, beta: float
) -> tuple[bool, str]:
    """Check alpha |m|^2 <= C m : m and |C m| <= beta |m| numerically.

    Returns (ok, report); the report names the violated bound when ok is
    False.  Eigenvalues are taken on the Mandel representation, which
    carries the correct shear weights.
    """
    if not (0.0 < alpha < beta):
        raise ValueError(f"need 0 < alpha < beta, got alpha={alpha}, beta={beta}")
    eigs = np.linalg.eigvalsh(tensor.mandel())
    tol = 1e-12 * max(1.0, np.abs(eigs).max())
    msgs = []
    if eigs[0] < alpha - tol:
        msgs.append(f"coercivity violated: min eigenvalue {eigs[0]:.6g} < alpha={alpha:.6g}")
    if np.abs(eigs).max() > beta + tol:
        msgs.append(
            f"boundedness violated: operator norm {np.abs(eigs).max():.6g} > beta={beta:.6g}"
        )
    return (not msgs, "; ".join(msgs) if msgs else "ok")
