"""Seeded Brownian path generation and generic time stepping.

All randomness in the package flows through counter-based Philox streams
keyed by ``(master_seed, stream_id)``: the same key always reproduces the
same draws, and distinct stream ids give statistically independent
sequences regardless of scheduling or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GUARD = 1.0e6


@dataclass(frozen=True)
class RngStream:
    """One reproducible noise stream, keyed by (master_seed, stream_id)."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def normals(self, n: int) -> np.ndarray:
        return self.generator().standard_normal(n)

    def uniforms(self, n: int) -> np.ndarray:
        return self.generator().random(n)


def normal_matrix(master_seed: int, stream_ids: np.ndarray | list[int],
                  n: int) -> np.ndarray:
    """Stack independent N(0,1) rows, one stream per row."""
    ids = np.asarray(stream_ids, dtype=np.uint64)
    out = np.empty((len(ids), n), dtype=np.float64)
    for row, sid in enumerate(ids):
        out[row] = RngStream(master_seed, int(sid)).normals(n)
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid covering [t0, horizon] with n_steps steps of size step."""

    t0: float
    horizon: float
    step: float
    n_steps: int = field(init=False)

    def __post_init__(self):
        if not self.step > 0.0:
            raise ValueError(f"step must be positive, got {self.step}")
        span = self.horizon - self.t0
        if not span > 0.0:
            raise ValueError("horizon must exceed t0")
        # tolerate float noise in span/step before taking the ceiling
        n = math.ceil(span / self.step - 1e-9)
        object.__setattr__(self, "n_steps", max(n, 1))

    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n_steps + 1)


@dataclass
class PathSample:
    """A single trajectory on a grid, with its RNG provenance."""

    grid: TimeGrid
    states: np.ndarray  # (n_steps + 1, d)
    master_seed: int
    stream_ids: tuple[int, ...]
    scheme: str
    diverged: bool = False
    flags: np.ndarray | None = None  # per-sample quality flags, if any

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        if self.states.shape[0] == 1 and self.grid.n_steps > 0 \
                and self.states.shape[1] == self.grid.n_steps + 1:
            self.states = self.states.T
        if self.states.shape[0] != self.grid.n_steps + 1:
            raise ValueError("states length must equal n_steps + 1")
        if not self.diverged and not np.isfinite(self.states).all():
            raise ValueError("non-finite states in a path not flagged diverged")


def brownian_increments(stream: RngStream, grid: TimeGrid) -> np.ndarray:
    """n_steps draws of N(0, step)."""
    return math.sqrt(grid.step) * stream.normals(grid.n_steps)


def exact_ou_step(x: float, lam: float, h: float, noise: float) -> float:
    """Advance dX = -lam*X dt + dW over h, exactly in law.

    Returns x*exp(-lam*h) + sqrt((1 - exp(-2*lam*h)) / (2*lam)) * noise,
    with the lam -> 0 limit sqrt(h)*noise.  Valid for any lam >= 0 and,
    by the same formula, for lam < 0 (exponentially unstable case).
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    u = lam * h
    if abs(u) < 1e-12:
        var = h
    else:
        var = -math.expm1(-2.0 * u) / (2.0 * lam)
    return x * math.exp(-u) + math.sqrt(var) * noise


def euler_maruyama(drift, diffusion, x0, grid: TimeGrid,
                   streams: list[RngStream] | tuple[RngStream, ...],
                   guard: float = DEFAULT_GUARD) -> PathSample:
    """Explicit Euler-Maruyama with constant diffusion, one stream per dim.

    The path is flagged ``diverged`` (not raised) as soon as any coordinate
    magnitude exceeds ``guard``; remaining samples repeat the last finite
    state.  This keeps stiffness failures observable as data.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    d = x.size
    if len(streams) != d:
        raise ValueError(f"need {d} streams, got {len(streams)}")
    g = np.asarray(diffusion, dtype=np.float64)
    dw = np.empty((d, grid.n_steps))
    for j, s in enumerate(streams):
        dw[j] = brownian_increments(s, grid)
    states = np.empty((grid.n_steps + 1, d))
    states[0] = x
    diverged = False
    for k in range(grid.n_steps):
        if not diverged:
            if g.ndim == 2:
                noise = g @ dw[:, k]
            else:
                noise = g * dw[:, k]
            xn = x + np.asarray(drift(x), dtype=np.float64) * grid.step + noise
            if not np.isfinite(xn).all() or np.abs(xn).max() > guard:
                diverged = True
            else:
                x = xn
        states[k + 1] = x
    return PathSample(
        grid=grid,
        states=states,
        master_seed=streams[0].master_seed,
        stream_ids=tuple(s.stream_id for s in streams),
        scheme="euler_maruyama",
        diverged=diverged,
    )
