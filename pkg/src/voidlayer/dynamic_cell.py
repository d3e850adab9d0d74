"""Time-dependent cell problems, interface memory kernels, and the layer representation.

Four families of cell waves are integrated on the perforated cell, all
Y'-periodic laterally and traction-free on the hole boundary:

* boundary-driven fields held at a lifting trace on both faces (started
  from the lifting itself, zero velocity);
* impulse fields with zero face traces and velocity -lifting at t = 0;
* force-impulse fields with zero face traces and unit initial velocity;
* the initial-velocity field of the layer data.

The interface kernels are the face tractions of the first two families,
extracted as variationally consistent nodal reactions M a + K u summed
over the face dofs.  With the lifting as a test field, that reaction sum
equals the discrete volume pairing exactly, which is the identity the
kernel sanity checks assert.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cellmesh import PeriodicCellMesh
from .fem import DofMap, assemble_mass, assemble_stiffness, solve_constrained
from .newmark import (
    NewmarkSeries,
    TimeGrid,
    newmark,
    trapezoid_convolution_series,
)

__all__ = [
    "DynamicCellSolution",
    "MemoryKernelTable",
    "boundary_lifting",
    "elastostatic_lifting",
    "solve_dynamic_cell",
    "solve_kernel_family",
    "extract_kernels",
    "kernel_weak_identity",
    "kernel_volume_diagnostic",
    "boundary_step_response",
    "represent_layer_displacement",
    "layer_weak_residual",
]

KINDS = ("chi", "eta", "theta", "u1_tilde")
DIRECTIONS = {"plus": "S_plus", "minus": "S_minus"}


def boundary_lifting(mesh: PeriodicCellMesh, component: int, direction: str) -> np.ndarray:
    """Linear blend with trace e_i on the chosen face and 0 on the opposite one."""
    d = mesh.dim
    coords = mesh.node_coords()
    sign = 1.0 if direction == "plus" else -1.0
    phi = np.zeros(mesh.n_nodes * d)
    phi[component::d] = 0.5 + sign * coords[:, 0]
    return phi


def elastostatic_lifting(
    mesh: PeriodicCellMesh, tensor_field, component: int, direction: str
) -> np.ndarray:
    """Harmonic (elastostatic) lifting with the same face traces as the linear blend."""
    d = mesh.dim
    K = assemble_stiffness(mesh, tensor_field)
    dofmap = DofMap(mesh, periodic=mesh.canonical)
    ek = np.eye(d)[component]
    plus, minus = mesh.face_nodes("S_plus"), mesh.face_nodes("S_minus")
    dofmap.add_dirichlet(plus, values=ek if direction == "plus" else np.zeros(d))
    dofmap.add_dirichlet(minus, values=ek if direction == "minus" else np.zeros(d))
    return solve_constrained(K, np.zeros(mesh.n_nodes * d), dofmap)


@dataclass
class DynamicCellSolution:
    """Newmark series of one dynamic cell problem, stored on reduced dofs."""

    kind: str
    direction: str | None
    component: int
    grid: TimeGrid
    mesh: PeriodicCellMesh
    dofmap: DofMap
    series: NewmarkSeries
    lifting: np.ndarray | None = None

    def full(self, which: str = "u") -> np.ndarray:
        """Full nodal snapshots (n_stored, n_full), Dirichlet values included."""
        T, g = self.dofmap.reduction()
        data = getattr(self.series, which)
        out = (T @ data.T).T
        if which == "u":
            out = out + g
        return out


def _cell_operators(mesh, tensor_field, density_field):
    K = assemble_stiffness(mesh, tensor_field)
    M = assemble_mass(mesh, density_field)
    return M, K


def _warn_if_dt_coarse(M_red, K_red, dt):
    """Estimate the smallest discrete period from a few Lanczos eigenvalues."""
    try:
        lam = spla.eigsh(
            K_red, k=min(3, K_red.shape[0] - 1), M=M_red, which="LM", return_eigenvectors=False
        )
        w_max = float(np.sqrt(lam.max()))
    except Exception:  # Lanczos failure is not worth aborting a solve
        return
    if w_max > 0 and dt > 0.5 * (2.0 * np.pi / w_max):
        warnings.warn(
            f"dt={dt:.3e} exceeds half the smallest discrete period "
            f"{2 * np.pi / w_max:.3e}; the scheme stays stable but poorly resolves "
            "the fastest cell modes",
            RuntimeWarning,
        )


def solve_dynamic_cell(
    mesh: PeriodicCellMesh,
    tensor_field,
    density_field,
    kind: str,
    direction: str | None,
    component: int,
    grid: TimeGrid,
    lifting: np.ndarray | None = None,
    initial_velocity_field: np.ndarray | None = None,
    stride: int = 1,
    check_dt: bool = False,
) -> DynamicCellSolution:
    """Integrate one cell problem of the given kind.

    chi: u(0) = lifting, v(0) = 0, faces held at the lifting trace;
    eta: u(0) = 0, v(0) = -lifting, zero face traces;
    theta: u(0) = 0, v(0) = e_i, zero face traces;
    u1_tilde: u(0) = 0, v(0) = given field, zero face traces.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown cell problem kind {kind!r}")
    d = mesh.dim
    n_full = mesh.n_nodes * d
    M, K = _cell_operators(mesh, tensor_field, density_field)

    dofmap = DofMap(mesh, periodic=mesh.canonical)
    plus, minus = mesh.face_nodes("S_plus"), mesh.face_nodes("S_minus")
    if kind == "chi":
        if lifting is None:
            lifting = boundary_lifting(mesh, component, direction)
        lift2 = lifting.reshape(-1, d)
        dofmap.add_dirichlet(plus, values=lift2[plus])
        dofmap.add_dirichlet(minus, values=lift2[minus])
        u0_full, v0_full = lifting, np.zeros(n_full)
    else:
        dofmap.add_dirichlet(plus)
        dofmap.add_dirichlet(minus)
        u0_full = np.zeros(n_full)
        if kind == "eta":
            if lifting is None:
                lifting = boundary_lifting(mesh, component, direction)
            v0_full = -lifting
        elif kind == "theta":
            v0_full = np.zeros(n_full)
            v0_full[component::d] = 1.0
        else:  # u1_tilde
            if initial_velocity_field is None:
                raise ValueError("u1_tilde needs the layer initial velocity field")
            v0_full = initial_velocity_field

    T, g = dofmap.reduction()
    M_red = dofmap.reduce_matrix(M)
    K_red = dofmap.reduce_matrix(K)
    shift = -(T.T @ (K @ g))  # constant Dirichlet data enter as a fixed load
    u0 = dofmap.restrict(u0_full)
    # Initial velocities may be incompatible with the face constraints (the
    # weak form only pairs them against admissible tests); the mass-weighted
    # projection keeps the convolution representation of boundary-driven
    # fields consistent at the semidiscrete level.
    v0 = spla.factorized(M_red.tocsc())(T.T @ (M @ v0_full))
    if check_dt:
        _warn_if_dt_coarse(M_red, K_red, grid.dt)
    load = (lambda k, t: shift) if np.any(g) else None
    series = newmark(M_red, K_red, grid, u0, v0, load=load, stride=stride)
    return DynamicCellSolution(
        kind=kind,
        direction=direction,
        component=component,
        grid=grid,
        mesh=mesh,
        dofmap=dofmap,
        series=series,
        lifting=lifting,
    )


@dataclass
class MemoryKernelTable:
    """Sampled interface kernels G, F: arrays (steps+1, 2, 2, d, d).

    Axis 1 is the driving face alpha (0 = plus, 1 = minus), axis 2 the
    observation face beta; the trailing axes are (force component j,
    driving component i).  The face normal is the outward normal of the
    solid cell, so the tables feed the bulk weak form with a minus sign.
    """

    G: np.ndarray
    F: np.ndarray
    dt: float
    provenance: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.G.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.G.shape[-1]

    def scaled(self, factor: float) -> "MemoryKernelTable":
        return MemoryKernelTable(factor * self.G, factor * self.F, self.dt, dict(self.provenance))

    def to_csv_rows(self):
        labels = ("plus", "minus")
        for n in range(self.steps + 1):
            tau = n * self.dt
            for ai, al in enumerate(labels):
                for bi, be in enumerate(labels):
                    for j in range(self.dim):
                        for i in range(self.dim):
                            yield (tau, al, be, j, i, self.G[n, ai, bi, j, i], self.F[n, ai, bi, j, i])


def solve_kernel_family(mesh, tensor_field, density_field, grid, lifting_style="linear", threads=1):
    """All 2 d boundary-driven and 2 d impulse solutions needed for the kernels."""
    d = mesh.dim
    tasks = []
    for kind in ("chi", "eta"):
        for direction in ("plus", "minus"):
            for i in range(d):
                if lifting_style == "linear":
                    lift = boundary_lifting(mesh, i, direction)
                else:
                    lift = elastostatic_lifting(mesh, tensor_field, i, direction)
                tasks.append(((kind, direction, i), lift))

    def run(task):
        (kind, direction, i), lift = task
        return solve_dynamic_cell(
            mesh, tensor_field, density_field, kind, direction, i, grid, lifting=lift
        )

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    return {key: sol for (key, _), sol in zip(tasks, results)}


def _face_dof_lists(mesh):
    d = mesh.dim
    out = []
    for tag in ("S_plus", "S_minus"):
        nodes = mesh.face_nodes(tag)
        out.append([nodes * d + c for c in range(d)])
    return out


def extract_kernels(solutions: dict, mesh, tensor_field, density_field, grid) -> MemoryKernelTable:
    """Face-reaction kernels of the boundary-driven (G) and impulse (F) families.

    The reaction at step n is the full-row residual M a + K u; summed over
    the dofs of face beta it is the variationally consistent integral of
    the traction against the face indicator.  F(0) = 0 holds exactly
    because the impulse family starts from zero displacement and zero
    reduced acceleration.
    """
    d = mesh.dim
    M, K = _cell_operators(mesh, tensor_field, density_field)
    faces = _face_dof_lists(mesh)
    n_steps = grid.steps
    G = np.zeros((n_steps + 1, 2, 2, d, d))
    F = np.zeros_like(G)
    for (kind, direction, i), sol in solutions.items():
        if sol.grid != grid or sol.series.stride != 1:
            raise ValueError("kernel extraction needs unthinned solutions on the common grid")
        table = G if kind == "chi" else F
        ai = 0 if direction == "plus" else 1
        u_full = sol.full("u")
        a_full = sol.full("a")
        r = (M @ a_full.T + K @ u_full.T).T  # (steps+1, n_full)
        for bi in range(2):
            for j in range(d):
                table[:, ai, bi, j, i] = r[:, faces[bi][j]].sum(axis=1)
    return MemoryKernelTable(
        G=G,
        F=F,
        dt=grid.dt,
        provenance={"steps": n_steps, "dim": d, "solid_elements": int(mesh.n_solid)},
    )


def kernel_weak_identity(sol: DynamicCellSolution, test_field: np.ndarray, mesh, tensor_field, density_field) -> np.ndarray:
    """Volume pairing phi . (M a + K u) per step, for a full test field phi.

    With phi a lifting of face beta this equals the surface kernel series
    exactly (discrete weak-form identity).
    """
    M, K = _cell_operators(mesh, tensor_field, density_field)
    u_full = sol.full("u")
    a_full = sol.full("a")
    return (M @ a_full.T + K @ u_full.T).T @ test_field


def kernel_volume_diagnostic(
    sol_first: DynamicCellSolution,
    sol_second: DynamicCellSolution,
    mesh,
    tensor_field,
    density_field,
    tau_index: int,
    t_index: int,
) -> float:
    """Two-time volume form with the inertial term by central differences.

    Diagnostic companion of the surface kernels: pairs d/dt(rho d/dt first)
    at tau with the second solution at t, plus the stiffness pairing.
    One-sided differences are used at the ends of the grid.
    """
    M, K = _cell_operators(mesh, tensor_field, density_field)
    n = sol_first.series.u.shape[0] - 1
    if not (0 <= tau_index <= n and 0 <= t_index <= n):
        raise ValueError("tau or t off the stored grid")
    v_full = sol_first.full("v")
    dt = sol_first.grid.dt * sol_first.series.stride
    if 0 < tau_index < n:
        dv = (v_full[tau_index + 1] - v_full[tau_index - 1]) / (2.0 * dt)
    elif tau_index == 0:
        dv = (v_full[1] - v_full[0]) / dt
    else:
        dv = (v_full[n] - v_full[n - 1]) / dt
    u_first = sol_first.full("u")[tau_index]
    w = sol_second.full("u")[t_index]
    return float(w @ (M @ dv) + w @ (K @ u_first))


def boundary_step_response(table: MemoryKernelTable, trace: np.ndarray, dt: float) -> np.ndarray:
    """Face tractions produced by a prescribed trace history on both faces.

    `trace` has shape (steps+1, 2, d): the boundary displacement per
    driving face.  Returns (steps+1, 2, d) tractions per observation face,
    combining the velocity (G) and acceleration (F) convolutions with the
    initial-velocity impulse term; this combination is independent of the
    lifting used to build the tables.
    """
    vel = np.gradient(trace, dt, axis=0)
    acc = np.gradient(vel, dt, axis=0)
    out = np.einsum("nabji,ai->nbj", table.F, vel[0])
    for ai in range(2):
        for i in range(table.dim):
            out += trapezoid_convolution_series(vel[:, ai, i], table.G[:, ai, :, :, i], dt)
            out += trapezoid_convolution_series(acc[:, ai, i], table.F[:, ai, :, :, i], dt)
    return out


def represent_layer_displacement(
    grid: TimeGrid,
    trace_velocity: dict,
    trace_acceleration: dict,
    cell_solutions: dict,
    layer_force: np.ndarray | None = None,
    theta_solutions: dict | None = None,
    u0_field: np.ndarray | None = None,
    u1_solution: DynamicCellSolution | None = None,
) -> np.ndarray:
    """Reconstruct the layer displacement from traces, forces and cell solutions.

    trace_velocity / trace_acceleration map 'plus'/'minus' to (steps+1, d)
    histories of the bulk interface traces; `cell_solutions` is the
    chi/eta family; `layer_force` is an x'-independent force history
    (steps+1, d) convolved against the force-impulse responses.  Returns
    full nodal snapshots (steps+1, n_full).
    """
    n1 = grid.steps + 1
    dt = grid.dt
    some = next(iter(cell_solutions.values()))
    n_full = some.mesh.n_nodes * some.mesh.dim
    d = some.mesh.dim
    out = np.zeros((n1, n_full))
    if u0_field is not None:
        out += u0_field[None, :]
    if u1_solution is not None:
        out += u1_solution.full("u")

    for direction in ("plus", "minus"):
        vel = np.asarray(trace_velocity[direction])
        acc = np.asarray(trace_acceleration[direction])
        for i in range(d):
            chi = cell_solutions[("chi", direction, i)].full("u")
            eta = cell_solutions[("eta", direction, i)].full("u")
            out += trapezoid_convolution_series(vel[:, i], chi, dt)
            out += trapezoid_convolution_series(acc[:, i], eta, dt)
            out += vel[0, i] * eta  # impulse start of the trace velocity

    if layer_force is not None:
        if theta_solutions is None:
            raise ValueError("layer forcing needs the force-impulse solutions")
        # Duhamel kernel: the force convolves against the impulse response
        # itself (the displacement started from unit velocity), which is the
        # form the convolution lemma for these cell waves justifies.
        lf = np.asarray(layer_force)
        for i in range(d):
            theta_u = theta_solutions[i].full("u")
            out += trapezoid_convolution_series(lf[:, i], theta_u, dt)
    return out


def layer_weak_residual(
    series_full: np.ndarray,
    mesh,
    tensor_field,
    density_field,
    grid: TimeGrid,
    force: np.ndarray | None = None,
) -> float:
    """Relative residual of the layer wave equation on interior test functions.

    Accelerations are formed by central second differences of the
    reconstructed snapshots; the residual is restricted to the free
    (non-face) dofs and normalized by the stiffness term.
    """
    M, K = _cell_operators(mesh, tensor_field, density_field)
    dofmap = DofMap(mesh, periodic=mesh.canonical)
    dofmap.add_dirichlet(mesh.face_nodes("S_plus"))
    dofmap.add_dirichlet(mesh.face_nodes("S_minus"))
    T, _ = dofmap.reduction()
    dt = grid.dt
    worst = 0.0
    scale = 0.0
    for n in range(1, series_full.shape[0] - 1):
        acc = (series_full[n + 1] - 2 * series_full[n] + series_full[n - 1]) / dt**2
        res = M @ acc + K @ series_full[n]
        if force is not None:
            res = res - force[n]
        r = T.T @ res
        worst = max(worst, float(np.linalg.norm(r)))
        scale = max(scale, float(np.linalg.norm(T.T @ (K @ series_full[n]))))
    return worst / max(scale, 1e-300)
