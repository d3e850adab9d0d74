"""Average-acceleration Newmark time stepping for linear second-order systems.

The single integrator of the toolkit (beta = 1/4, gamma = 1/2):
unconditionally stable and, for unforced linear systems, exactly
energy-conserving in the discrete sense

    E_{n+1} - E_n = dt/4 (v_n + v_{n+1}) . (f_n + f_{n+1}),

which the conservation tests exploit as a sharp identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TimeGrid",
    "NewmarkSeries",
    "newmark",
    "trapezoid_convolution",
    "trapezoid_convolution_series",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on (0, t_final] with dt * steps = t_final."""

    t_final: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_final <= 0.0:
            raise ValueError("time grid needs dt > 0 and t_final > 0")
        n = round(self.t_final / self.dt)
        if n < 1 or abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError(
                f"dt={self.dt} does not evenly divide t_final={self.t_final}"
            )

    @property
    def steps(self) -> int:
        return round(self.t_final / self.dt)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)


@dataclass
class NewmarkSeries:
    """Displacement/velocity/acceleration snapshots of one integration run."""

    times: np.ndarray
    u: np.ndarray  # (n_stored, n_dof)
    v: np.ndarray
    a: np.ndarray
    stride: int

    def energy(self, M: sp.spmatrix, K: sp.spmatrix) -> np.ndarray:
        return 0.5 * (
            np.einsum("ni,ni->n", self.v, (M @ self.v.T).T)
            + np.einsum("ni,ni->n", self.u, (K @ self.u.T).T)
        )


def newmark(
    M: sp.spmatrix,
    K: sp.spmatrix,
    grid: TimeGrid,
    u0: np.ndarray,
    v0: np.ndarray,
    load=None,
    stride: int = 1,
) -> NewmarkSeries:
    """Integrate M a + K u = f(t) with the average-acceleration scheme.

    `load` is a callable (step, t) -> vector or None for f = 0.  Snapshots
    are stored every `stride` steps (the final step always included).
    """
    dt = grid.dt
    n = grid.steps
    times = grid.times()
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    f = load(0, 0.0) if load is not None else np.zeros_like(u)
    solve_M = spla.factorized(M.tocsc())
    a = solve_M(f - K @ u)
    S = (M + (dt**2 / 4.0) * K).tocsc()
    solve_S = spla.factorized(S)

    stored = sorted(set(range(0, n + 1, stride)) | {n})
    out_u = np.empty((len(stored), len(u)))
    out_v = np.empty_like(out_u)
    out_a = np.empty_like(out_u)
    out_t = times[stored]
    pos = 0
    if stored[pos] == 0:
        out_u[0], out_v[0], out_a[0] = u, v, a
        pos += 1

    for k in range(1, n + 1):
        u_pred = u + dt * v + (dt**2 / 4.0) * a
        f = load(k, times[k]) if load is not None else 0.0
        a_new = solve_S((f - K @ u_pred) if load is not None else (-(K @ u_pred)))
        u = u_pred + (dt**2 / 4.0) * a_new
        v = v + (dt / 2.0) * (a + a_new)
        a = a_new
        if pos < len(stored) and stored[pos] == k:
            out_u[pos], out_v[pos], out_a[pos] = u, v, a
            pos += 1

    return NewmarkSeries(times=out_t, u=out_u, v=out_v, a=out_a, stride=stride)


def trapezoid_convolution(g: np.ndarray, H: np.ndarray, n: int, dt: float):
    """Trapezoidal (g * H)(t_n) = dt sum_{k=0..n} w_k g(t_k) H(t_n - t_k).

    `g` is a scalar series (steps+1,), `H` an array-valued series with the
    time axis first; returns the lag-n value with H's trailing shape.
    """
    if n == 0:
        return np.zeros_like(H[0])
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return dt * np.tensordot(g[: n + 1] * w, H[n::-1], axes=(0, 0))


def trapezoid_convolution_series(g: np.ndarray, H: np.ndarray, dt: float) -> np.ndarray:
    """All lags of the trapezoidal convolution at once (FFT-accelerated).

    Same quadrature as `trapezoid_convolution`: the endpoint half-weights
    are restored after a plain discrete convolution.
    """
    from scipy.signal import fftconvolve

    n1 = g.shape[0]
    gg = g.reshape((n1,) + (1,) * (H.ndim - 1))
    full = fftconvolve(gg, H, axes=0)[:n1]
    out = dt * (full - 0.5 * gg[0] * H - 0.5 * g.reshape(-1, *([1] * (H.ndim - 1))) * H[0])
    out[0] = 0.0
    return out
