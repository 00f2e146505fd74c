"""Finite-difference solver for the limit process's Cauchy problem.

Solves u_t = (1/(2y) - y) u_y + u_yy / 2 on [0, y_max] with the reflecting
condition u_y(0+) = 0, cross-validated against probabilistic
representations: the exact limit sampler in one dimension and the full
fast-slow system in two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import StatReport
from .limit import TestFunction, limit_exact_terminal
from .model import ModelParams, project_pi, rescaled_reduce
from .sde import TimeGrid


@dataclass(frozen=True)
class Grid1D:
    """Space-time grid for the explicit scheme.

    The stability bound dt <= dy^2 / (1 + max|drift| * dy) is checked at
    construction; the singular node at y = 0 additionally needs
    dt <= dy^2 / 2, which the default dt satisfies with margin.  y_max
    defaults to 6: the stationary mass beyond it is ~e^{-36}.
    """

    y_max: float = 6.0
    n_points: int = 601
    t_final: float = 1.0
    dt: float | None = None
    dy: float = field(init=False)
    n_steps: int = field(init=False)

    def __post_init__(self):
        if self.n_points < 8:
            raise ValueError("need at least 8 grid points")
        if not self.y_max > 0.0 or not self.t_final > 0.0:
            raise ValueError("y_max and t_final must be positive")
        dy = self.y_max / (self.n_points - 1)
        object.__setattr__(self, "dy", dy)
        if dy * self.y_max > 1.0:
            raise ValueError("dy too coarse for a monotone scheme: "
                             "need dy * y_max <= 1")
        max_drift = max(abs(0.5 / dy - dy), self.y_max)
        stability = dy * dy / (1.0 + max_drift * dy)
        dt = self.dt
        if dt is None:
            dt = 0.9 * min(stability, 0.5 * dy * dy)
            # land exactly on t_final
            dt = self.t_final / math.ceil(self.t_final / dt)
            object.__setattr__(self, "dt", dt)
        if dt > stability * (1.0 + 1e-12):
            raise ValueError(
                f"dt={dt:.3e} violates the stability bound {stability:.3e}")
        if dt > 0.5 * dy * dy * (1.0 + 1e-12):
            raise ValueError(
                f"dt={dt:.3e} violates the singular-node bound "
                f"{0.5 * dy * dy:.3e}")
        object.__setattr__(self, "n_steps",
                           int(round(self.t_final / dt)))

    def y_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.n_points)


@dataclass
class PDESolution:
    grid: Grid1D
    times: np.ndarray
    u: np.ndarray  # (len(times), n_points)
    initial: str
    u_min: float
    u_max: float
    constant_drift_per_step: float

    def at(self, t: float, y) -> np.ndarray | float:
        """Solution at snapshot time t, linearly interpolated in y."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a stored snapshot time")
        ys = self.grid.y_nodes()
        return np.interp(np.asarray(y, dtype=np.float64), ys, self.u[k])


def solve_limit_pde(f: TestFunction | np.ndarray, grid: Grid1D,
                    snapshot_times=None) -> PDESolution:
    """Explicit finite differences for the limit Cauchy problem.

    Interior nodes use central differences.  The singular node y = 0 uses
    the even-extension ghost value u(-dy) = u(dy), under which the
    generator limit at the origin discretizes to 2 (u_1 - u_0) / dy^2.
    The far boundary is reflecting (zero-derivative outflow).
    """
    ys = grid.y_nodes()
    dy = grid.dy
    dt = grid.dt
    if isinstance(f, TestFunction):
        u = np.asarray(f(ys), dtype=np.float64).copy()
        name = f.name
    else:
        u = np.asarray(f, dtype=np.float64).copy()
        if u.shape != ys.shape:
            raise ValueError("initial data must match the grid")
        name = "array"
    if snapshot_times is None:
        snapshot_times = [grid.t_final]
    snapshot_times = sorted(float(t) for t in snapshot_times)
    if snapshot_times and snapshot_times[-1] > grid.t_final * (1 + 1e-12):
        raise ValueError("snapshot time beyond t_final")
    if any(t < 0.0 for t in snapshot_times):
        raise ValueError("snapshot times must be nonnegative")

    b = 0.5 / ys[1:-1] - ys[1:-1]  # drift at interior nodes

    def step_many(u, span, dt_cap):
        # integrate over span, landing exactly on its end
        nonlocal u_min, u_max, drift_const
        if span <= 0.0:
            return u
        n = max(1, math.ceil(span / dt_cap - 1e-12))
        dt_k = span / n
        c_up = dt_k * (0.5 / (dy * dy) + b / (2.0 * dy))
        c_dn = dt_k * (0.5 / (dy * dy) - b / (2.0 * dy))
        c_mid = 1.0 - dt_k / (dy * dy)
        c0 = 2.0 * dt_k / (dy * dy)
        ones_step = c_mid + c_up + c_dn  # row sums of the interior stencil
        drift_const = max(drift_const, float(np.abs(ones_step - 1.0).max()))
        un = np.empty_like(u)
        for _ in range(n):
            un[1:-1] = c_mid * u[1:-1] + c_up * u[2:] + c_dn * u[:-2]
            un[0] = u[0] + c0 * (u[1] - u[0])
            un[-1] = u[-1] + dt_k * (u[-2] - u[-1]) / (dy * dy)
            u, un = un, u
            u_min = min(u_min, float(u.min()))
            u_max = max(u_max, float(u.max()))
        return u

    u_min = float(u.min())
    u_max = float(u.max())
    drift_const = 0.0
    snaps = []
    t_prev = 0.0
    for t in snapshot_times:
        u = step_many(u, t - t_prev, dt)
        snaps.append(u.copy())
        t_prev = t
    if t_prev < grid.t_final * (1 - 1e-12):
        u = step_many(u, grid.t_final - t_prev, dt)

    times = np.asarray(snapshot_times)
    u_hist = np.stack(snaps) if snaps else np.empty((0, ys.size))
    return PDESolution(grid=grid, times=times, u=u_hist, initial=name,
                       u_min=u_min, u_max=u_max,
                       constant_drift_per_step=drift_const)


def feynman_kac_mc(y: float, t: float, f: TestFunction, n: int,
                   master_seed: int) -> StatReport:
    """E_y f(Y_t) by the exact limit sampler (single exact transition)."""
    if t == 0.0:
        return StatReport(estimate=float(f(np.float64(y))), std_error=0.0,
                          n_replicas=n, config={"y0": y, "t": 0.0,
                                                "f": f.name})
    samples = limit_exact_terminal(y, [t], n, master_seed)[:, 0]
    return StatReport.from_samples(f(samples), y0=y, t=t, f=f.name,
                                   seed=master_seed)


def cauchy_2d_mc(x: float, y: float, t: float, f2, p: ModelParams, n: int,
                 master_seed: int, h: float = 5e-4,
                 batch_size: int = 1024) -> StatReport:
    """E_{(x,y)} f2(X_t, Y_t) on the fast-slow system.

    As epsilon shrinks this approaches the limit solution evaluated at the
    projected start, u(t, y^pi(x, y)) with initial data f2(0, .).
    """
    p = ModelParams(epsilon=p.epsilon, alpha=p.alpha, variant=p.variant,
                    x0=x, y0=y, horizon=t)
    grid = TimeGrid(0.0, t, h)
    out = rescaled_reduce(
        p, grid, master_seed, n,
        lambda ts, xs, ys, div: {
            "val": np.asarray(f2(xs[:, -1], ys[:, -1]), dtype=np.float64)},
        batch_size=batch_size)
    return StatReport.from_samples(out["val"], x0=x, y0=y, t=t,
                                   epsilon=p.epsilon, h=h, seed=master_seed,
                                   y_pi=project_pi((x, y)))
