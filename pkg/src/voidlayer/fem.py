"""Assembly and constrained solution of linear-elasticity systems on voxel meshes.

Vector-valued Q1 (bilinear/trilinear) elements with full 2-point Gauss
quadrature per direction, which integrates the stiffness of
constant-coefficient elements exactly.  Degrees of freedom are node-major:
dof = node * d + component, over the full tensor grid; nodes not touching a
solid element never receive entries and are dropped by the reduction.

Constraints (periodic identification, Dirichlet values, face-equality
groups) are eliminated through a sparse reduction operator; zero-mean
conditions are enforced with one Lagrange multiplier per component, which
keeps the reduced operator symmetric.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cellmesh import VoxelMesh
from .tensors import ElasticTensor4, sym_to_voigt_strain, voigt_pairs

__all__ = [
    "element_stiffness",
    "element_mass",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_loads",
    "strain_norm_matrix",
    "DofMap",
    "solve_constrained",
    "dump_system",
]

_G1 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _gauss_points(dim: int) -> np.ndarray:
    pts = np.array(np.meshgrid(*([_G1] * dim), indexing="ij"))
    return pts.reshape(dim, -1).T  # (2^d, d), weight 1/2^d each


def _shape_values(xi: np.ndarray, offsets) -> np.ndarray:
    """N_l(xi) for every corner l, xi in the unit reference box."""
    vals = np.ones(len(offsets))
    for l, off in enumerate(offsets):
        for k, o in enumerate(off):
            vals[l] *= xi[k] if o else (1.0 - xi[k])
    return vals


def _shape_gradients(xi: np.ndarray, offsets, h: np.ndarray) -> np.ndarray:
    """dN_l/dx_k at xi for an element of physical size h, shape (n_loc, d)."""
    dim = len(h)
    grads = np.ones((len(offsets), dim))
    for l, off in enumerate(offsets):
        for k in range(dim):
            g = 1.0
            for m, o in enumerate(off):
                if m == k:
                    g *= (1.0 if o else -1.0) / h[m]
                else:
                    g *= xi[m] if o else (1.0 - xi[m])
            grads[l, k] = g
    return grads


def _b_matrix(grads: np.ndarray, dim: int) -> np.ndarray:
    """Engineering-strain B matrix: (n_voigt, n_loc * d) at one Gauss point."""
    pairs = voigt_pairs(dim)
    n_loc = grads.shape[0]
    B = np.zeros((len(pairs), n_loc * dim))
    for r, (i, j) in enumerate(pairs):
        for l in range(n_loc):
            if i == j:
                B[r, l * dim + i] = grads[l, i]
            else:
                B[r, l * dim + j] += grads[l, i]
                B[r, l * dim + i] += grads[l, j]
    return B


def element_stiffness(tensor: ElasticTensor4, h: np.ndarray) -> np.ndarray:
    """Exact Q1 stiffness of a solid box of size h with constant tensor."""
    dim = len(h)
    offsets = _corner_offsets(dim)
    vol = float(np.prod(h))
    w = vol / 2**dim
    n = len(offsets) * dim
    Ke = np.zeros((n, n))
    for xi in _gauss_points(dim):
        B = _b_matrix(_shape_gradients(xi, offsets, h), dim)
        Ke += w * (B.T @ tensor.voigt @ B)
    return Ke


def element_mass(h: np.ndarray) -> np.ndarray:
    """Consistent unit-density mass of a box of size h, per scalar component."""
    dim = len(h)
    offsets = _corner_offsets(dim)
    vol = float(np.prod(h))
    w = vol / 2**dim
    n_loc = len(offsets)
    Me = np.zeros((n_loc, n_loc))
    for xi in _gauss_points(dim):
        N = _shape_values(xi, offsets)
        Me += w * np.outer(N, N)
    return Me


def _corner_offsets(dim: int):
    import itertools

    return list(itertools.product((0, 1), repeat=dim))


def _per_element_values(mesh: VoxelMesh, field):
    """Resolve a material field to one value per solid element.

    Accepts a single value (homogeneous), a dict keyed by the mesh material
    id, or a callable of the element center.
    """
    if isinstance(field, dict):
        mats = mesh.material[mesh.esolid]
        return [field[int(m)] for m in mats]
    if callable(field) and not isinstance(field, ElasticTensor4):
        return [field(c) for c in mesh.element_centers()]
    return [field] * mesh.n_solid


def _element_dofs(conn: np.ndarray, dim: int) -> np.ndarray:
    return (conn[:, :, None] * dim + np.arange(dim)).reshape(conn.shape[0], -1)


def _scatter(mesh: VoxelMesh, per_elem_mats, n_full: int) -> sp.csr_matrix:
    """Sum dense per-element matrices into the global sparse operator."""
    dim = mesh.dim
    conn = mesh.element_conn()
    edofs = _element_dofs(conn, dim)
    nloc = edofs.shape[1]
    rows = np.repeat(edofs, nloc, axis=1).ravel()
    cols = np.tile(edofs, (1, nloc)).ravel()
    vals = np.concatenate([m.ravel() for m in per_elem_mats])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n_full, n_full))
    return K.tocsr()


def assemble_stiffness(mesh: VoxelMesh, tensor_field) -> sp.csr_matrix:
    """Global stiffness; v . K v = integral of C e(v) : e(v) over the solid region."""
    dim = mesh.dim
    tensors = _per_element_values(mesh, tensor_field)
    sizes = mesh.element_sizes()
    cache: dict = {}
    mats = []
    for t, h in zip(tensors, sizes):
        if t.dimension != dim:
            raise ValueError("tensor dimension does not match the mesh")
        key = (id(t), tuple(h))
        if key not in cache:
            cache[key] = element_stiffness(t, h)
        mats.append(cache[key])
    return _scatter(mesh, mats, mesh.n_nodes * dim)


def assemble_mass(mesh: VoxelMesh, density_field, lumped: bool = False) -> sp.csr_matrix:
    """Consistent (or lumped) mass; densities must be strictly positive."""
    dim = mesh.dim
    rhos = np.array(_per_element_values(mesh, density_field), dtype=float)
    if np.any(rhos <= 0.0):
        raise ValueError("density field must be bounded below by a positive constant")
    sizes = mesh.element_sizes()
    cache: dict = {}
    mats = []
    for rho, h in zip(rhos, sizes):
        key = tuple(h)
        if key not in cache:
            base = element_mass(h)
            cache[key] = np.kron(base, np.eye(dim))
        mats.append(rho * cache[key])
    M = _scatter(mesh, mats, mesh.n_nodes * dim)
    if lumped:
        diag = np.asarray(M.sum(axis=1)).ravel()
        return sp.diags(diag).tocsr()
    return M


def strain_norm_matrix(mesh: VoxelMesh) -> sp.csr_matrix:
    """Matrix of the seminorm integral |e(v)|^2 (identity tensor on symmetric matrices)."""
    pairs = voigt_pairs(mesh.dim)
    w = np.array([1.0 if i == j else 0.5 for (i, j) in pairs])
    ident = ElasticTensor4(mesh.dim, np.diag(w))
    return assemble_stiffness(mesh, ident)


def assemble_loads(
    mesh: VoxelMesh,
    tensor_field=None,
    prestrain=None,
    face_loads=None,
    body_force=None,
    density_field=None,
) -> np.ndarray:
    """Load vector: f(v) = -int C E0 : e(v) + int_faces g . v + int rho b . v.

    `prestrain` is a constant symmetric matrix or a callable of physical
    points returning (n, d, d); it is sampled at the Gauss points, exact for
    affine prestrain fields.  `face_loads` is a list of (tag_faces,
    measures, g) triples as produced by VoxelMesh.plane_faces.  `body_force`
    is a constant vector or callable of element centers; it is weighted by
    `density_field`.
    """
    dim = mesh.dim
    f = np.zeros(mesh.n_nodes * dim)
    offsets = _corner_offsets(dim)

    if prestrain is not None:
        if tensor_field is None:
            raise ValueError("prestrain loads need the elasticity tensor field")
        tensors = _per_element_values(mesh, tensor_field)
        sizes = mesh.element_sizes()
        conn = mesh.element_conn()
        lows = mesh.element_centers() - 0.5 * sizes
        gauss = _gauss_points(dim)
        edofs = _element_dofs(conn, dim)
        fe_all = np.zeros(edofs.shape)
        const = isinstance(prestrain, np.ndarray)
        b_cache: dict = {}
        for xi in gauss:
            pts = lows + sizes * xi
            if const:
                E0 = np.broadcast_to(prestrain, (len(pts), dim, dim))
            else:
                E0 = prestrain(pts)
            eps = np.array([sym_to_voigt_strain(e) for e in E0])
            for row in range(mesh.n_solid):
                h = sizes[row]
                key = (tuple(xi), tuple(h))
                if key not in b_cache:
                    b_cache[key] = _b_matrix(_shape_gradients(xi, offsets, h), dim)
                w = float(np.prod(h)) / 2**dim
                fe_all[row] -= w * (b_cache[key].T @ (tensors[row].voigt @ eps[row]))
        np.add.at(f, edofs.ravel(), fe_all.ravel())

    if face_loads is not None:
        for face_nodes, measures, g in face_loads:
            g = np.asarray(g, dtype=float)
            n_corner = face_nodes.shape[1]
            for c in range(dim):
                gc = g[:, c] if g.ndim == 2 else np.full(len(measures), g[c])
                np.add.at(
                    f,
                    face_nodes * dim + c,
                    (gc * measures / n_corner)[:, None] * np.ones((1, n_corner)),
                )

    if body_force is not None:
        rhos = np.array(
            _per_element_values(mesh, 1.0 if density_field is None else density_field),
            dtype=float,
        )
        centers = mesh.element_centers()
        b = body_force(centers) if callable(body_force) else np.broadcast_to(
            np.asarray(body_force, dtype=float), (mesh.n_solid, dim)
        )
        vols = mesh.element_volumes()
        conn = mesh.element_conn()
        share = (rhos * vols / 2**dim)[:, None] * b  # (n_solid, d) per corner
        for li in range(2**dim):
            for c in range(dim):
                np.add.at(f, conn[:, li] * dim + c, share[:, c])

    return f


class DofMap:
    """Constraint bookkeeping and reduction operator for one mesh.

    Builds u_full = T u_red + g_dirichlet where slaves follow their periodic
    masters, face-group nodes share one vector unknown per group, and
    Dirichlet dofs are eliminated with prescribed values.  Each dof belongs
    to at most one constraint class; the reduced operator T' K T stays
    symmetric.
    """

    def __init__(self, mesh: VoxelMesh, periodic: np.ndarray | None = None):
        self.mesh = mesh
        self.dim = mesh.dim
        self.canonical = (
            periodic if periodic is not None else np.arange(mesh.n_nodes, dtype=int)
        )
        self.dirichlet: dict[tuple[int, int], float] = {}
        self.face_groups: list[np.ndarray] = []
        self._built = False

    def add_dirichlet(self, nodes, components=None, values=0.0):
        comps = list(range(self.dim)) if components is None else list(components)
        vals = np.broadcast_to(
            np.asarray(values, dtype=float), (len(nodes), len(comps))
        )
        for i, n in enumerate(nodes):
            rep = int(self.canonical[int(n)])
            for j, c in enumerate(comps):
                self.dirichlet[(rep, c)] = float(vals[i, j])
        self._built = False

    def add_face_group(self, nodes):
        """Constrain all (vector) dofs of `nodes` to one shared unknown vector."""
        reps = np.unique(self.canonical[np.asarray(nodes, dtype=int)])
        self.face_groups.append(reps)
        self._built = False
        return len(self.face_groups) - 1

    def _build(self):
        if self._built:
            return
        mesh, dim = self.mesh, self.dim
        active = mesh.active_nodes()
        group_of_node = {}
        for gi, reps in enumerate(self.face_groups):
            for r in reps:
                if (int(r), 0) in self.dirichlet:
                    raise ValueError("face-group node is also Dirichlet-constrained")
                if int(r) in group_of_node:
                    raise ValueError("node appears in two face groups")
                group_of_node[int(r)] = gi

        col_of: dict[tuple[int, int], int] = {}
        group_cols = [None] * len(self.face_groups)
        n_red = 0
        for node in active:
            rep = int(self.canonical[node])
            if rep != node:
                continue  # slaves handled through their master
            gi = group_of_node.get(rep)
            if gi is not None:
                if group_cols[gi] is None:
                    group_cols[gi] = n_red
                    n_red += dim
                for c in range(dim):
                    col_of[(rep, c)] = group_cols[gi] + c
                continue
            for c in range(dim):
                if (rep, c) in self.dirichlet:
                    continue
                col_of[(rep, c)] = n_red
                n_red += 1

        n_full = mesh.n_nodes * dim
        g = np.zeros(n_full)
        rows, cols = [], []
        for node in active:
            rep = int(self.canonical[node])
            for c in range(dim):
                full = node * dim + c
                if (rep, c) in self.dirichlet:
                    g[full] = self.dirichlet[(rep, c)]
                else:
                    rows.append(full)
                    cols.append(col_of[(rep, c)])
        data = np.ones(len(rows))
        self.T = sp.coo_matrix(
            (data, (rows, cols)), shape=(n_full, n_red)
        ).tocsr()
        self.g = g
        self.n_reduced = n_red
        self._col_of = col_of
        self._group_cols = group_cols
        self._built = True

    # -- public queries ---------------------------------------------------

    def reduction(self):
        self._build()
        return self.T, self.g

    def reduced_index(self, node: int, comp: int) -> int:
        self._build()
        rep = int(self.canonical[int(node)])
        return self._col_of[(rep, comp)]

    def restrict(self, u_full: np.ndarray) -> np.ndarray:
        """Reduced coefficients of a full field (which must satisfy the constraints)."""
        self._build()
        out = np.zeros(self.n_reduced)
        for (rep, c), col in self._col_of.items():
            out[col] = u_full[rep * self.dim + c]
        return out

    def group_indices(self, group_id: int) -> np.ndarray:
        self._build()
        base = self._group_cols[group_id]
        if base is None:
            raise ValueError("face group has no active nodes")
        return np.arange(base, base + self.dim)

    def reduce_matrix(self, A: sp.csr_matrix) -> sp.csr_matrix:
        self._build()
        return (self.T.T @ A @ self.T).tocsr()

    def reduce_rhs(self, f: np.ndarray, A: sp.csr_matrix | None = None) -> np.ndarray:
        self._build()
        if A is not None and np.any(self.g):
            f = f - A @ self.g
        return self.T.T @ f

    def expand(self, u_red: np.ndarray, with_dirichlet: bool = True) -> np.ndarray:
        self._build()
        u = self.T @ u_red
        if with_dirichlet:
            u = u + self.g
        return u

    def mean_weight_rows(self) -> sp.csr_matrix:
        """Rows C (d x n_red) with C u_red = componentwise integral of u over the solid region."""
        self._build()
        mesh, dim = self.mesh, self.dim
        conn = mesh.element_conn()
        vols = mesh.element_volumes()
        w_node = np.zeros(mesh.n_nodes)
        np.add.at(
            w_node,
            conn.ravel(),
            np.repeat(vols / 2**dim, conn.shape[1]),
        )
        rows, cols, vals = [], [], []
        for c in range(dim):
            full = np.arange(mesh.n_nodes) * dim + c
            rows.extend([c] * mesh.n_nodes)
            cols.extend(full)
            vals.extend(w_node)
        W = sp.coo_matrix(
            (vals, (rows, cols)), shape=(dim, mesh.n_nodes * dim)
        ).tocsr()
        return (W @ self.T).tocsr()


def solve_constrained(
    K_full: sp.csr_matrix,
    f_full: np.ndarray,
    dofmap: DofMap,
    zero_mean: bool = False,
) -> np.ndarray:
    """Solve the constrained system and return the full nodal field.

    With `zero_mean`, one Lagrange multiplier per component enforces a
    vanishing componentwise mean over the solid region (removes the
    rigid-translation kernel of pure-Neumann problems).  Raises a
    diagnostic error when the reduced operator is singular.
    """
    K = dofmap.reduce_matrix(K_full)
    f = dofmap.reduce_rhs(f_full, K_full)
    if zero_mean:
        C = dofmap.mean_weight_rows()
        sys = sp.bmat([[K, C.T], [C, None]], format="csc")
        rhs = np.concatenate([f, np.zeros(C.shape[0])])
    else:
        sys = K.tocsc()
        rhs = f
    try:
        solve = spla.factorized(sys)
    except RuntimeError as exc:
        raise RuntimeError(
            "singular constrained system: the rigid-translation kernel was not "
            f"removed (add Dirichlet data or a zero-mean constraint): {exc}"
        ) from exc
    sol = solve(rhs)
    sol = sol + solve(rhs - sys @ sol)  # one refinement pass
    mat_scale = np.abs(sys.data).max() if sys.nnz else 1.0
    if not np.all(np.isfinite(sol)) or (
        np.linalg.norm(rhs) > 0
        and np.linalg.norm(sol) > 1e12 * np.linalg.norm(rhs) / mat_scale
    ):
        raise RuntimeError(
            "singular constrained system: the rigid-translation kernel was not "
            "removed (add Dirichlet data or a zero-mean constraint)"
        )
    res = sys @ sol - rhs
    scale = max(np.linalg.norm(rhs), np.linalg.norm(sys @ sol), 1e-300)
    if np.linalg.norm(res) > 1e-10 * scale:
        raise RuntimeError(
            f"constrained solve residual too large: {np.linalg.norm(res) / scale:.3e}"
        )
    return dofmap.expand(sol[: K.shape[0]])


def dump_system(K: sp.spmatrix, f: np.ndarray, path: str) -> None:
    """Coordinate text dump (row col value per line, then rhs) for debugging."""
    coo = K.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# matrix {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        order = np.lexsort((coo.col, coo.row))
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {format(coo.data[i], '.17g')}\n")
        fh.write(f"# rhs {len(f)}\n")
        for v in f:
            fh.write(format(v, ".17g") + "\n")
