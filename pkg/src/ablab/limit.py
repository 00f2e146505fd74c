"""The limiting process: a damped 2-d radial Bessel diffusion.

On (0, inf) the process solves dY = (1/(2Y) - Y) dt + dW and is exactly the
radius of a two-dimensional unit-damping OU process, which gives an
exact-in-law sampler with no discretization bias.  Its generator is

    A f(y) = f''(y)/2 + (1/(2y) - y) f'(y),   y > 0,

extended to y = 0 by the limit value and set to 0 for y < 0.  Functions in
the generator's domain have one-sided derivative vanishing at 0+, which is
what makes the origin inaccessible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .sde import PathSample, RngStream, TimeGrid, normal_matrix

VARIANTS = ("damped", "no_dissipation")


@dataclass(frozen=True)
class TestFunction:
    """A test function with closed-form derivatives.

    ``df_over_y_limit0`` is the analytic limit of f'(y)/y at 0+, supplied in
    closed form because the generator's value at the origin hinges on it.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    d3f: Callable[[np.ndarray], np.ndarray]
    df_over_y_limit0: float | None
    in_domain: bool
    bounded_derivs3: bool

    def __call__(self, y):
        return self.f(y)


def gauss_bump() -> TestFunction:
    e = lambda y: np.exp(-np.square(y))
    return TestFunction(
        name="exp(-y^2)",
        f=e,
        df=lambda y: -2.0 * y * e(y),
        d2f=lambda y: (4.0 * np.square(y) - 2.0) * e(y),
        d3f=lambda y: (12.0 * y - 8.0 * y ** 3) * e(y),
        df_over_y_limit0=-2.0,
        in_domain=True,
        bounded_derivs3=True,
    )


def lorentzian() -> TestFunction:
    return TestFunction(
        name="1/(1+y^2)",
        f=lambda y: 1.0 / (1.0 + np.square(y)),
        df=lambda y: -2.0 * y / (1.0 + np.square(y)) ** 2,
        d2f=lambda y: (6.0 * np.square(y) - 2.0) / (1.0 + np.square(y)) ** 3,
        d3f=lambda y: (24.0 * y - 24.0 * y ** 3) / (1.0 + np.square(y)) ** 4,
        df_over_y_limit0=-2.0,
        in_domain=True,
        bounded_derivs3=True,
    )


def square_fn() -> TestFunction:
    # unbounded: pointwise tests only
    return TestFunction(
        name="y^2",
        f=lambda y: np.square(y),
        df=lambda y: 2.0 * y,
        d2f=lambda y: 2.0 * np.ones_like(np.asarray(y, dtype=np.float64)),
        d3f=lambda y: np.zeros_like(np.asarray(y, dtype=np.float64)),
        df_over_y_limit0=2.0,
        in_domain=True,
        bounded_derivs3=False,
    )


def cos_square() -> TestFunction:
    return TestFunction(
        name="cos(y^2)",
        f=lambda y: np.cos(np.square(y)),
        df=lambda y: -2.0 * y * np.sin(np.square(y)),
        d2f=lambda y: -2.0 * np.sin(np.square(y))
        - 4.0 * np.square(y) * np.cos(np.square(y)),
        d3f=lambda y: -12.0 * y * np.cos(np.square(y))
        + 8.0 * y ** 3 * np.sin(np.square(y)),
        df_over_y_limit0=0.0,
        in_domain=True,
        bounded_derivs3=False,
    )


def constant_fn(c: float = 1.0) -> TestFunction:
    z = lambda y: np.zeros_like(np.asarray(y, dtype=np.float64))
    return TestFunction(
        name=f"const({c})",
        f=lambda y: np.full_like(np.asarray(y, dtype=np.float64), c),
        df=z, d2f=z, d3f=z,
        df_over_y_limit0=0.0,
        in_domain=True,
        bounded_derivs3=True,
    )


def identity_fn() -> TestFunction:
    # f'(0) = 1 != 0: not in the generator's domain
    return TestFunction(
        name="y",
        f=lambda y: np.asarray(y, dtype=np.float64) + 0.0,
        df=lambda y: np.ones_like(np.asarray(y, dtype=np.float64)),
        d2f=lambda y: np.zeros_like(np.asarray(y, dtype=np.float64)),
        d3f=lambda y: np.zeros_like(np.asarray(y, dtype=np.float64)),
        df_over_y_limit0=None,
        in_domain=False,
        bounded_derivs3=True,
    )


def catalog() -> tuple[TestFunction, ...]:
    """The shipped test functions; all satisfy f'(0) = 0."""
    return (gauss_bump(), lorentzian(), square_fn(), cos_square())


@dataclass(frozen=True)
class LimitParams:
    y0: float
    variant: str = "damped"
    horizon: float = 1.0

    def __post_init__(self):
        if not self.y0 > 0.0:
            raise ValueError("y0 must be positive (the origin is never hit)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")


def generator_apply(f: TestFunction, y):
    """A f at y: the displayed formula for y > 0, its limit at 0, 0 below."""
    arr = np.asarray(y, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.zeros_like(arr)
    pos = arr > 0.0
    if pos.any():
        yp = arr[pos]
        out[pos] = 0.5 * f.d2f(yp) + (0.5 / yp - yp) * f.df(yp)
    zero = arr == 0.0
    if zero.any():
        if not f.in_domain or f.df_over_y_limit0 is None:
            raise ValueError(
                f"{f.name}: generator limit at 0 needs f'(y)/y -> const")
        out[zero] = 0.5 * f.d2f(np.zeros(1))[0] + 0.5 * f.df_over_y_limit0
    return float(out[0]) if scalar else out


@dataclass
class DomainReport:
    name: str
    probe_points: np.ndarray
    fprime_values: np.ndarray
    ratio_values: np.ndarray
    fprime_vanishes: bool
    ratio_stabilizes: bool
    ratio_estimate: float

    @property
    def passed(self) -> bool:
        return self.fprime_vanishes and self.ratio_stabilizes


def domain_check(f: TestFunction) -> DomainReport:
    """Numerically probe whether f'(0+) = 0 and f'(y)/y has a limit."""
    ys = 10.0 ** -np.arange(1, 7, dtype=np.float64)
    fp = np.asarray(f.df(ys), dtype=np.float64)
    ratio = fp / ys
    vanishes = abs(fp[-1]) < 1e-4
    stabilizes = abs(ratio[-1] - ratio[-2]) <= 1e-3 * max(1.0, abs(ratio[-1]))
    return DomainReport(
        name=f.name, probe_points=ys, fprime_values=fp, ratio_values=ratio,
        fprime_vanishes=bool(vanishes), ratio_stabilizes=bool(stabilizes),
        ratio_estimate=float(ratio[-1]))


def _drift_coeffs(variant: str) -> tuple[float, float]:
    # d(Y^2) = (a - b Y^2) dt + 2|Y| dW
    if variant == "damped":
        return 2.0, 2.0
    return 3.0, 0.0


def simulate_limit_em(p: LimitParams, grid: TimeGrid,
                      stream: RngStream | None,
                      drift_only: bool = False) -> PathSample:
    """Direct discretization, positivity-preserving.

    The square S = Y^2 satisfies dS = (a - b S) dt + 2 sqrt(S) dW with
    (a, b) = (2, 2) for the damped variant and (3, 0) without dissipation;
    S is stepped explicitly, reflecting rare negative excursions, and the
    path returned is sqrt(S) > 0.

    ``drift_only`` integrates the noise-free Y-equation instead (the unit
    of the S-drift coming from the quadratic variation is dropped with the
    noise), e.g. dY = (1/(2Y) - Y) dt with fixed point 1/sqrt(2).
    """
    if drift_only:
        z = np.zeros((1, grid.n_steps))
    elif stream is None:
        raise ValueError("a noise stream is required unless drift_only")
    else:
        z = stream.normals(grid.n_steps).reshape(1, -1)
    ys = np.empty((1, grid.n_steps + 1))
    a, b = _drift_coeffs(p.variant)
    if drift_only:
        a -= 1.0
    _kernels.limit_sq_em(p.y0, a, b, grid.step, z, ys)
    seed = -1 if stream is None else stream.master_seed
    ids = () if stream is None else (stream.stream_id,)
    return PathSample(grid=grid, states=ys[0].reshape(-1, 1),
                      master_seed=seed, stream_ids=ids,
                      scheme=f"limit_sq_em_{p.variant}")


def limit_em_reduce(p: LimitParams, grid: TimeGrid, master_seed: int,
                    n_replicas: int, reduce_fn, stream_base: int = 0,
                    batch_size: int = 2048) -> dict:
    """Batched replicas of the direct scheme; reduce_fn(times, ys) -> dict."""
    ts = grid.times()
    a, b = _drift_coeffs(p.variant)
    chunks = []
    for b0 in range(0, n_replicas, batch_size):
        nb = min(batch_size, n_replicas - b0)
        ids = stream_base + np.arange(b0, b0 + nb, dtype=np.uint64)
        z = normal_matrix(master_seed, ids, grid.n_steps)
        ys = np.empty((nb, grid.n_steps + 1))
        _kernels.limit_sq_em(p.y0, a, b, grid.step, z, ys)
        chunks.append(reduce_fn(ts, ys))
    return {k: np.concatenate([c[k] for c in chunks]) for k in chunks[0]}


def _exact_step_coeffs(h: float) -> tuple[float, float]:
    decay = math.exp(-h)
    sd = math.sqrt(-math.expm1(-2.0 * h) / 2.0)
    return decay, sd


def simulate_limit_exact(p: LimitParams, grid: TimeGrid,
                         streams: tuple[RngStream, RngStream]) -> PathSample:
    """Exact-in-law sampler: radius of a 2-d OU process dZ = -Z dt + dW.

    Gaussian transitions are sampled coordinate-wise from Z0 = (0, y0), so
    the path law at the grid times carries no discretization bias.  The
    damped variant only.
    """
    if p.variant != "damped":
        raise ValueError("exact sampler exists for the damped variant only")
    s1, s2 = streams
    z1 = s1.normals(grid.n_steps).reshape(1, -1)
    z2 = s2.normals(grid.n_steps).reshape(1, -1)
    rs = np.empty((1, grid.n_steps + 1))
    decay, sd = _exact_step_coeffs(grid.step)
    _kernels.ou2d_radius(p.y0, decay, sd, z1, z2, rs)
    return PathSample(grid=grid, states=rs[0].reshape(-1, 1),
                      master_seed=s1.master_seed,
                      stream_ids=(s1.stream_id, s2.stream_id),
                      scheme="limit_exact_ou2d")


def limit_exact_reduce(p: LimitParams, grid: TimeGrid, master_seed: int,
                       n_replicas: int, reduce_fn, stream_base: int = 0,
                       batch_size: int = 2048) -> dict:
    if p.variant != "damped":
        raise ValueError("exact sampler exists for the damped variant only")
    ts = grid.times()
    decay, sd = _exact_step_coeffs(grid.step)
    chunks = []
    for b0 in range(0, n_replicas, batch_size):
        nb = min(batch_size, n_replicas - b0)
        ids = stream_base + 2 * np.arange(b0, b0 + nb, dtype=np.uint64)
        z1 = normal_matrix(master_seed, ids, grid.n_steps)
        z2 = normal_matrix(master_seed, ids + 1, grid.n_steps)
        rs = np.empty((nb, grid.n_steps + 1))
        _kernels.ou2d_radius(p.y0, decay, sd, z1, z2, rs)
        chunks.append(reduce_fn(ts, rs))
    return {k: np.concatenate([c[k] for c in chunks]) for k in chunks[0]}


def limit_exact_terminal(y0: float, times, n: int, master_seed: int,
                         stream_base: int = 0) -> np.ndarray:
    """Exact draws of the damped radial process at the given times.

    Jumps the underlying 2-d OU process through the strictly increasing
    ``times`` in single exact transitions; returns shape (n, len(times)).
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if not (np.diff(times) > 0.0).all() or times[0] <= 0.0:
        raise ValueError("times must be strictly increasing and positive")
    ids = stream_base + 2 * np.arange(n, dtype=np.uint64)
    z1 = normal_matrix(master_seed, ids, len(times))
    z2 = normal_matrix(master_seed, ids + 1, len(times))
    u = np.zeros(n)
    v = np.full(n, y0, dtype=np.float64)
    out = np.empty((n, len(times)))
    t_prev = 0.0
    for j, t in enumerate(times):
        decay, sd = _exact_step_coeffs(t - t_prev)
        u = u * decay + sd * z1[:, j]
        v = v * decay + sd * z2[:, j]
        out[:, j] = np.hypot(u, v)
        t_prev = t
    return out


def expected_square(y0: float, t, variant: str = "damped"):
    """Closed-form E[Y_t^2] from the generator applied to y^2.

    Damped: d/dt E[Y^2] = 2 - 2 E[Y^2], so E[Y_t^2] = 1 + (y0^2 - 1)e^{-2t}.
    Without dissipation: d/dt E[Y^2] = 3, so E[Y_t^2] = y0^2 + 3t.
    """
    t = np.asarray(t, dtype=np.float64)
    if variant == "damped":
        return 1.0 + (y0 * y0 - 1.0) * np.exp(-2.0 * t)
    return y0 * y0 + 3.0 * t


def stationary_square_cdf(s):
    """Stationary CDF of Y^2 (damped variant): Exp(1), i.e. 1 - e^{-s}."""
    return -np.expm1(-np.asarray(s, dtype=np.float64))


def stationary_mean() -> float:
    """Stationary E[Y] for the damped variant: sqrt(pi)/2."""
    return math.sqrt(math.pi) / 2.0
