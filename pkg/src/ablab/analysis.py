"""Statistical verification of the fast-slow system against its limit.

Estimators here turn the qualitative convergence statements into numbers:
moment scalings of the fast coordinate, martingale residuals of the limit
generator along perturbed paths, weak-convergence gaps, band-crossing
statistics with exit-time quadrature oracles, and metastable excursion
statistics.  Every estimator is a pure function of its seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import erf, erfcx, erfi

from . import _kernels
from .limit import LimitParams, TestFunction, generator_apply, \
    limit_exact_reduce, limit_exact_terminal
from .model import DTHETA_MAX, ModelParams, _run_rescaled, project_pi, \
    rescaled_reduce
from .sde import PathSample, RngStream, TimeGrid, normal_matrix

KS_COEFF_1PCT = 1.6276  # sqrt(-ln(alpha/2)/2) at alpha = 0.01


def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    """Two-sample Kolmogorov-Smirnov critical value (asymptotic)."""
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n + m) / (n * m))


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample KS statistic via a sorted merge."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    both = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, both, side="right") / a.size
    cdf_b = np.searchsorted(b, both, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


@dataclass
class StatReport:
    """Monte Carlo estimate with its standard error and provenance."""

    estimate: float
    std_error: float
    n_replicas: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_replicas < 2:
            raise ValueError("a standard error needs at least 2 replicas")

    @classmethod
    def from_samples(cls, samples: np.ndarray, **config) -> "StatReport":
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.size
        return cls(estimate=float(samples.mean()),
                   std_error=float(samples.std(ddof=1) / math.sqrt(n)),
                   n_replicas=n, config=config)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error,
                "n_replicas": self.n_replicas, "config": self.config}


@dataclass
class ScalingFit:
    """Log-log regression of estimates against epsilon."""

    epsilons: list[float]
    estimates: list[float]
    std_errors: list[float]
    slope: float
    slope_se: float
    intercept: float

    def __post_init__(self):
        eps = np.asarray(self.epsilons)
        if len(eps) < 3 or not (np.diff(eps) < 0).all():
            raise ValueError("need >= 3 strictly decreasing epsilon values")

    @property
    def slope_ci95(self) -> tuple[float, float]:
        return (self.slope - 1.96 * self.slope_se,
                self.slope + 1.96 * self.slope_se)

    @classmethod
    def from_points(cls, epsilons, estimates, std_errors) -> "ScalingFit":
        lx = np.log(np.asarray(epsilons, dtype=np.float64))
        ly = np.log(np.asarray(estimates, dtype=np.float64))
        w = (lx - lx.mean()) / np.sum((lx - lx.mean()) ** 2)
        slope = float(np.sum(w * ly))
        intercept = float(ly.mean() - slope * lx.mean())
        rel = np.asarray(std_errors) / np.asarray(estimates)
        slope_se = float(math.sqrt(np.sum((w * rel) ** 2)))
        return cls(list(map(float, epsilons)), list(map(float, estimates)),
                   list(map(float, std_errors)), slope, slope_se, intercept)

    def to_dict(self) -> dict:
        return {"epsilons": self.epsilons, "estimates": self.estimates,
                "std_errors": self.std_errors, "slope": self.slope,
                "slope_se": self.slope_se, "intercept": self.intercept}


# ---------------------------------------------------------------------------
# band-crossing stopping times
# ---------------------------------------------------------------------------

@dataclass
class StoppingRecord:
    """Alternating first hits of |Y| = delta (taus) and |Y| = 2*delta
    (sigmas), read discretely: first grid time at or past the level."""

    taus: np.ndarray
    sigmas: np.ndarray
    n: int
    delta: float

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=np.float64)
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        k = self.sigmas.size
        if k > self.taus.size:
            raise ValueError("each sigma needs a preceding tau")
        prev_sigma = np.concatenate([[-np.inf], self.sigmas[:-1]]) \
            if k else np.empty(0)
        if k and not (self.taus[:k] >= prev_sigma).all():
            raise ValueError("stopping times must interleave")
        if k and not (self.sigmas >= self.taus[:k]).all():
            raise ValueError("stopping times must interleave")


def _scan_batch(ys: np.ndarray, delta: float, max_ev: int = 2048):
    n_paths = ys.shape[0]
    tau_idx = np.zeros((n_paths, max_ev), dtype=np.int64)
    sig_idx = np.zeros((n_paths, max_ev), dtype=np.int64)
    n_tau = np.zeros(n_paths, dtype=np.int64)
    n_sig = np.zeros(n_paths, dtype=np.int64)
    overflow = np.zeros(n_paths, dtype=bool)
    _kernels.scan_crossings(np.ascontiguousarray(ys, dtype=np.float64),
                            delta, tau_idx, sig_idx, n_tau, n_sig, overflow)
    if overflow.any():
        raise RuntimeError("crossing buffer overflow; raise max_ev")
    return tau_idx, sig_idx, n_tau, n_sig


def detect_stopping_times(path: PathSample, delta: float,
                          T: float | None = None) -> StoppingRecord:
    """Read the alternating band-crossing times off one path."""
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    y = path.states[:, -1]
    ts = path.grid.times()
    horizon = path.grid.horizon if T is None else T
    tau_idx, sig_idx, n_tau, n_sig = _scan_batch(y.reshape(1, -1), delta)
    taus = ts[tau_idx[0, :n_tau[0]]]
    sigmas = ts[sig_idx[0, :n_sig[0]]]
    n = int(np.sum(sigmas <= horizon))
    return StoppingRecord(taus=taus, sigmas=sigmas, n=n, delta=delta)


# ---------------------------------------------------------------------------
# second moment of the fast coordinate
# ---------------------------------------------------------------------------

def min_time_for_moment(p: ModelParams) -> float:
    """Shortest t at which the fast coordinate has relaxed: eps^((1-alpha)/2)."""
    return p.epsilon ** ((1.0 - p.alpha) / 2.0)


def x_second_moment(p: ModelParams, t: float, n: int, master_seed: int,
                    h: float = 1e-3, batch_size: int = 1024) -> StatReport:
    """E[X_t^2] over replicas whose Y stayed >= delta up to t.

    Replicas violating the conditioning band are excluded and the exclusion
    rate reported (warning above 10%): the conditional statement is read as
    exclusion-and-report, with the discard rate itself a diagnostic.
    """
    t0 = min_time_for_moment(p)
    if t < t0:
        raise ValueError(f"t={t} below the relaxation time {t0:.4g}")
    delta = p.delta()
    grid = TimeGrid(0.0, t, h)
    out = rescaled_reduce(
        p, grid, master_seed, n,
        lambda ts, xs, ys, div: {"x2": xs[:, -1] ** 2,
                                 "ok": (ys.min(axis=1) >= delta) & ~div},
        batch_size=batch_size)
    kept = out["x2"][out["ok"]]
    excl = 1.0 - kept.size / n
    if excl > 0.10:
        warnings.warn(f"exclusion rate {excl:.1%} above 10%", stacklevel=2)
    rep = StatReport.from_samples(
        kept, epsilon=p.epsilon, alpha=p.alpha, t=t, h=h,
        seed=master_seed, exclusion_rate=excl)
    return rep


def x_second_moment_scaling(epsilons, alpha: float, t: float, n: int,
                            master_seed: int, x0: float = 0.0,
                            y0: float = 2.0, h: float = 1e-3) -> ScalingFit:
    """Log-log scaling of E[X_t^2] against epsilon at fixed alpha."""
    estimates, ses = [], []
    for i, eps in enumerate(epsilons):
        p = ModelParams(epsilon=eps, alpha=alpha, x0=x0, y0=y0, horizon=t)
        rep = x_second_moment(p, t, n, master_seed + i, h=h)
        estimates.append(rep.estimate)
        ses.append(rep.std_error)
    return ScalingFit.from_points(epsilons, estimates, ses)


# ---------------------------------------------------------------------------
# martingale residual of the limit generator
# ---------------------------------------------------------------------------

def _trapezoid(w: np.ndarray, h: float) -> np.ndarray:
    return h * (w.sum(axis=1) - 0.5 * (w[:, 0] + w[:, -1]))


def martingale_residual(p: ModelParams, f: TestFunction, T: float, n: int,
                        master_seed: int, h: float = 1e-3,
                        batch_size: int = 512,
                        control_variate: bool = True) -> StatReport:
    """E[f(Y_T) - f(projected start) - int_0^T A f(Y_t) dt] on the
    perturbed system; the generator value is 0 wherever Y < 0.

    With ``control_variate`` the path's own radius hypot(X, Y) serves as a
    coupled control: it is exactly the limit process in law (the 1/eps
    terms cancel in the radial equation), starts exactly at the projected
    value, and its residual has mean 0, so subtracting it leaves the
    estimand unchanged while cancelling nearly all shared noise.
    """
    y_pi = project_pi((p.x0, p.y0))
    grid = TimeGrid(0.0, T, h)

    def reduce_fn(ts, xs, ys, div):
        af = generator_apply(f, ys.ravel()).reshape(ys.shape)
        res = f(ys[:, -1]) - f(np.float64(y_pi)) - _trapezoid(af, h)
        if control_variate:
            rs = np.hypot(xs, ys)
            af_c = generator_apply(f, rs.ravel()).reshape(rs.shape)
            res = res - (f(rs[:, -1]) - f(np.float64(y_pi))
                         - _trapezoid(af_c, h))
        return {"res": res, "div": div}

    out = rescaled_reduce(p, grid, master_seed, n, reduce_fn,
                          batch_size=batch_size)
    return StatReport.from_samples(
        out["res"], epsilon=p.epsilon, f=f.name, T=T, h=h, seed=master_seed,
        y_pi=y_pi, diverged=int(out["div"].sum()),
        control_variate=control_variate)


def martingale_residual_limit(y0: float, f: TestFunction, T: float, n: int,
                              master_seed: int, h: float = 1e-3,
                              batch_size: int = 2048) -> StatReport:
    """Control run: the residual on the exact limit sampler itself,
    which is a true martingale, so the estimate should sit at 0."""
    lp = LimitParams(y0=y0, horizon=T)
    grid = TimeGrid(0.0, T, h)

    def reduce_fn(ts, rs):
        af = generator_apply(f, rs.ravel()).reshape(rs.shape)
        res = f(rs[:, -1]) - f(np.float64(y0)) - _trapezoid(af, h)
        return {"res": res}

    out = limit_exact_reduce(lp, grid, master_seed, n, reduce_fn,
                             batch_size=batch_size)
    return StatReport.from_samples(out["res"], y0=y0, f=f.name, T=T, h=h,
                                   seed=master_seed, process="limit_exact")


# ---------------------------------------------------------------------------
# weak-convergence gaps
# ---------------------------------------------------------------------------

def x_collapse_gap(p: ModelParams, F, T: float, n: int, master_seed: int,
                   h: float = 1e-3, batch_size: int = 1024) -> StatReport:
    """E[F(X_T, Y_T) - F(0, Y_T)]: the fast coordinate's footprint on any
    Lipschitz observable, which vanishes with epsilon."""
    grid = TimeGrid(0.0, T, h)

    def reduce_fn(ts, xs, ys, div):
        xT = xs[:, -1]
        yT = ys[:, -1]
        return {"gap": np.asarray(F(xT, yT) - F(np.zeros_like(xT), yT),
                                  dtype=np.float64)}

    out = rescaled_reduce(p, grid, master_seed, n, reduce_fn,
                          batch_size=batch_size)
    return StatReport.from_samples(out["gap"], epsilon=p.epsilon, T=T, h=h,
                                   seed=master_seed)


@dataclass
class TerminalGapReport:
    gap: StatReport
    ks_stat: float
    ks_critical: float
    y_pi: float

    def to_dict(self) -> dict:
        return {"gap": self.gap.to_dict(), "ks_stat": self.ks_stat,
                "ks_critical": self.ks_critical, "y_pi": self.y_pi}


def terminal_law_gap(p: ModelParams, f: TestFunction, T: float, n: int,
                     master_seed: int, h: float = 1e-3,
                     batch_size: int = 1024,
                     coupled: bool = True) -> TerminalGapReport:
    """|E f(Y_T^eps) - E f(Y_T^limit)| with the limit started at the
    projected initial point, plus a two-sample KS of the terminal laws.

    With ``coupled`` the gap is estimated as the per-replica difference
    f(Y_T) - f(hypot(X_T, Y_T)): the path's radius is exactly the limit
    process in law from exactly the projected start, so the estimand is
    identical but almost all noise cancels.  The KS statistic always uses
    an independent exact reference sample.
    """
    y_pi = project_pi((p.x0, p.y0))
    grid = TimeGrid(0.0, T, h)

    def reduce_fn(ts, xs, ys, div):
        out = {"yT": ys[:, -1]}
        if coupled:
            rT = np.hypot(xs[:, -1], ys[:, -1])
            out["diff"] = np.asarray(f(ys[:, -1]) - f(rT), dtype=np.float64)
        return out

    out = rescaled_reduce(p, grid, master_seed, n, reduce_fn,
                          batch_size=batch_size)
    ref = limit_exact_terminal(y_pi, [T], n, master_seed + 1)[:, 0]
    if coupled:
        rep = StatReport.from_samples(
            out["diff"], epsilon=p.epsilon, f=f.name, T=T, h=h,
            seed=master_seed, y_pi=y_pi, coupled=True)
    else:
        fe = np.asarray(f(out["yT"]), dtype=np.float64)
        fl = np.asarray(f(ref), dtype=np.float64)
        se = math.sqrt(fe.var(ddof=1) / n + fl.var(ddof=1) / n)
        rep = StatReport(estimate=float(fe.mean() - fl.mean()),
                         std_error=se, n_replicas=n,
                         config={"epsilon": p.epsilon, "f": f.name, "T": T,
                                 "h": h, "seed": master_seed, "y_pi": y_pi,
                                 "coupled": False})
    return TerminalGapReport(gap=rep, ks_stat=ks_statistic(out["yT"], ref),
                             ks_critical=ks_critical_value(n, n), y_pi=y_pi)


# ---------------------------------------------------------------------------
# exit-time oracles for the auxiliary OU process dY = -Y dt + dW
# ---------------------------------------------------------------------------

def ou_exit_two_sided(delta: float) -> float:
    """Expected exit time of the unit-rate OU process from (-2d, 2d)
    started at d, by quadrature of the closed-form double integral."""
    if not 0.0 < delta <= 5.0:
        raise ValueError("delta must lie in (0, 5] for stable quadrature")
    d = delta
    sp = math.sqrt(math.pi)

    def inner(z):
        # int_{-2d}^{z} e^{-u^2} du
        return 0.5 * sp * (erf(z) + erf(2.0 * d))

    def big_i(y):
        # int_{-2d}^{y} e^{z^2} dz
        return 0.5 * sp * (erfi(y) + erfi(2.0 * d))

    def big_d(y):
        val, err = integrate.quad(lambda z: math.exp(z * z) * inner(z),
                                  -2.0 * d, y, epsabs=0.0, epsrel=1e-11,
                                  limit=200)
        if abs(err) > 1e-8 * max(abs(val), 1e-300):
            raise RuntimeError("quadrature did not converge")
        return val

    d2d = big_d(2.0 * d)
    return -2.0 * big_d(d) + 2.0 * big_i(d) * d2d / big_i(2.0 * d)


def ou_exit_one_sided(delta: float) -> float:
    """Expected time for the unit-rate OU process started at 2d to hit d:
    2 int_d^{2d} e^{z^2} int_z^inf e^{-u^2} du dz = sqrt(pi) int erfcx."""
    if not 0.0 < delta <= 5.0:
        raise ValueError("delta must lie in (0, 5] for stable quadrature")
    val, err = integrate.quad(erfcx, delta, 2.0 * delta, epsabs=0.0,
                              epsrel=1e-11, limit=200)
    if abs(err) > 1e-8 * max(abs(val), 1e-300):
        raise RuntimeError("quadrature did not converge")
    return math.sqrt(math.pi) * val


def ou_exit_mc(delta: float, mode: str, n: int, master_seed: int,
               h: float | None = None, chunk: int = 512,
               t_max: float | None = None) -> StatReport:
    """Simulation oracle for the exit times, with Brownian-bridge crossing
    detection between grid points to kill the O(sqrt(h)) hitting bias.

    mode "two_sided": exit of (-2d, 2d) from d; "one_sided": hit of d
    from 2d.  Default h targets ~300 steps per mean exit.
    """
    if mode == "two_sided":
        lo, hi, x0 = -2.0 * delta, 2.0 * delta, delta
        scale = ou_exit_two_sided(delta)
    elif mode == "one_sided":
        lo, hi, x0 = delta, np.inf, 2.0 * delta
        scale = ou_exit_one_sided(delta)
    else:
        raise ValueError("mode must be 'two_sided' or 'one_sided'")
    if h is None:
        h = scale / 300.0
    if t_max is None:
        t_max = 60.0 * scale
    decay = math.exp(-h)
    sd = math.sqrt(-math.expm1(-2.0 * h) / 2.0)

    x = np.full(n, x0, dtype=np.float64)
    t = np.zeros(n)
    tau = np.full(n, np.nan)
    done = np.zeros(n, dtype=bool)
    gen_z = RngStream(master_seed, 0).generator()
    gen_u = RngStream(master_seed, 1).generator()
    while not done.all():
        idx = np.nonzero(~done)[0]
        z = gen_z.standard_normal((idx.size, chunk))
        u = gen_u.random((idx.size, chunk, 2))
        xa = x[idx].copy()
        ta = t[idx].copy()
        tau_a = tau[idx].copy()
        done_a = done[idx].copy()
        xa, ta = _kernels.ou_exit_chunk(xa, ta, tau_a, done_a, z, u,
                                        lo, hi, decay, sd, h)
        x[idx] = xa
        t[idx] = ta
        tau[idx] = tau_a
        done[idx] = done_a
        timed_out = ~done & (t >= t_max)
        if timed_out.any():
            raise RuntimeError(f"{timed_out.sum()} paths not exited "
                               f"by t_max={t_max}")
    return StatReport.from_samples(tau, delta=delta, mode=mode, h=h,
                                   seed=master_seed)


# ---------------------------------------------------------------------------
# crossing statistics of the perturbed system
# ---------------------------------------------------------------------------

@dataclass
class CrossingStats:
    mean_n: StatReport
    mean_sigma_minus_tau: StatReport | None
    mean_tau_minus_sigma: StatReport | None
    deep_dip_rate: float  # fraction of tau->sigma windows with Y < -1.99 delta
    delta: float
    bounds: dict

    def to_dict(self) -> dict:
        return {
            "mean_n": self.mean_n.to_dict(),
            "mean_sigma_minus_tau":
                None if self.mean_sigma_minus_tau is None
                else self.mean_sigma_minus_tau.to_dict(),
            "mean_tau_minus_sigma":
                None if self.mean_tau_minus_sigma is None
                else self.mean_tau_minus_sigma.to_dict(),
            "deep_dip_rate": self.deep_dip_rate,
            "delta": self.delta,
            "bounds": self.bounds,
        }


def crossing_stats(p: ModelParams, T: float, n: int, master_seed: int,
                   h: float = 1e-3, safety: float = 2.0,
                   batch_size: int = 512) -> CrossingStats:
    """Up-crossing counts and durations at delta = eps^alpha, checked
    against the OU exit-time quadrature oracles with a safety factor.

    Durations carry a +h slack in the bound checks: discrete reading
    overestimates each hitting time by at most one step.
    """
    delta = p.delta()
    grid = TimeGrid(0.0, T, h)

    def reduce_fn(ts, xs, ys, div):
        tau_idx, sig_idx, n_tau, n_sig = _scan_batch(ys, delta)
        nb = ys.shape[0]
        n_up = np.empty(nb)
        st_sum = np.empty(nb)
        st_cnt = np.zeros(nb)
        ts_sum = np.empty(nb)
        ts_cnt = np.zeros(nb)
        deep = np.zeros(nb)
        for i in range(nb):
            k = int(n_sig[i])
            kt = int(n_tau[i])
            n_up[i] = np.sum(ts[sig_idx[i, :k]] <= T) if k else 0
            st_sum[i] = (ts[sig_idx[i, :k]] - ts[tau_idx[i, :k]]).sum() \
                if k else 0.0
            st_cnt[i] = k
            if kt > 1:
                gaps = ts[tau_idx[i, 1:kt]] - ts[sig_idx[i, :kt - 1]]
                ts_sum[i] = gaps.sum()
                ts_cnt[i] = kt - 1
            else:
                ts_sum[i] = 0.0
            for j in range(k):
                window = ys[i, tau_idx[i, j]:sig_idx[i, j] + 1]
                deep[i] += float(window.min() < -1.99 * delta)
        return {"n_up": n_up, "st_sum": st_sum, "st_cnt": st_cnt,
                "ts_sum": ts_sum, "ts_cnt": ts_cnt, "deep": deep}

    out = rescaled_reduce(p, grid, master_seed, n, reduce_fn,
                          batch_size=batch_size)
    mean_n = StatReport.from_samples(
        out["n_up"], epsilon=p.epsilon, T=T, h=h, seed=master_seed,
        delta=delta, frac_zero=float((out["n_up"] == 0).mean()))
    n_st = int(out["st_cnt"].sum())
    n_ts = int(out["ts_cnt"].sum())
    mean_st = None
    mean_ts = None
    def _duration_report(sums, counts, total):
        per_path = sums[counts > 0] / counts[counts > 0]
        se = float(per_path.std(ddof=1) / math.sqrt(per_path.size)) \
            if per_path.size >= 2 else 0.0
        return StatReport(estimate=float(sums.sum() / total), std_error=se,
                          n_replicas=total, config={"events": total})

    if n_st >= 2:
        mean_st = _duration_report(out["st_sum"], out["st_cnt"], n_st)
    if n_ts >= 2:
        mean_ts = _duration_report(out["ts_sum"], out["ts_cnt"], n_ts)
    u_two = ou_exit_two_sided(delta)
    u_one = ou_exit_one_sided(delta)
    bounds = {
        "n_bound": safety * (4.0 / 3.0) * T / u_one,
        "n_ok": bool(mean_n.estimate
                     <= safety * (4.0 / 3.0) * T / u_one),
        "sigma_minus_tau_bound": safety * (4.0 / 3.0) * u_two + h,
        "sigma_minus_tau_ok":
            mean_st is None
            or bool(mean_st.estimate <= safety * (4.0 / 3.0) * u_two + h),
        "tau_minus_sigma_bound": u_one / safety - h,
        "tau_minus_sigma_ok":
            mean_ts is None
            or bool(mean_ts.estimate >= u_one / safety - h),
        "oracle_two_sided": u_two,
        "oracle_one_sided": u_one,
    }
    total_windows = max(n_st, 1)
    return CrossingStats(mean_n=mean_n, mean_sigma_minus_tau=mean_st,
                         mean_tau_minus_sigma=mean_ts,
                         deep_dip_rate=float(out["deep"].sum()
                                             / total_windows),
                         delta=delta, bounds=bounds)


# ---------------------------------------------------------------------------
# metastable excursions below the unstable half-axis
# ---------------------------------------------------------------------------

def excursion_probability(p: ModelParams, a: float, t: float, n: int,
                          master_seed: int, h: float = 1e-3,
                          batch_size: int = 1024) -> StatReport:
    """P(min of Y over the grid reaches -a before t)."""
    if not a > 0.0:
        raise ValueError("a must be positive")
    grid = TimeGrid(0.0, t, h)
    out = rescaled_reduce(
        p, grid, master_seed, n,
        lambda ts, xs, ys, div: {"hit": (ys.min(axis=1) <= -a)
                                 .astype(np.float64)},
        batch_size=batch_size)
    p_hat = float(out["hit"].mean())
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / n) / n)
    return StatReport(estimate=p_hat, std_error=se, n_replicas=n,
                      config={"epsilon": p.epsilon, "a": a, "t": t, "h": h,
                              "seed": master_seed})


@dataclass
class ExcursionRecord:
    entry_time: float
    return_time: float | None
    max_abs_x: float
    min_y: float


def excursion_anatomy(path: PathSample, a: float) -> list[ExcursionRecord]:
    """Dips of Y below -a: entry time, time of return above +a, and the
    largest |X| seen in between (the excursions hug the y-axis)."""
    if not a > 0.0:
        raise ValueError("a must be positive")
    ts = path.grid.times()
    x = path.states[:, 0]
    y = path.states[:, -1]
    records: list[ExcursionRecord] = []
    i = 0
    length = y.size
    while i < length:
        below = np.nonzero(y[i:] <= -a)[0]
        if below.size == 0:
            break
        start = i + int(below[0])
        back = np.nonzero(y[start:] >= a)[0]
        if back.size == 0:
            end = length - 1
            ret = None
        else:
            end = start + int(back[0])
            ret = float(ts[end])
        seg_x = x[start:end + 1]
        seg_y = y[start:end + 1]
        records.append(ExcursionRecord(
            entry_time=float(ts[start]), return_time=ret,
            max_abs_x=float(np.abs(seg_x).max()),
            min_y=float(seg_y.min())))
        i = end + 1
        if ret is None:
            break
    return records


# ---------------------------------------------------------------------------
# residuals restricted to the away-from-origin windows
# ---------------------------------------------------------------------------

def window_residuals(p: ModelParams, f: TestFunction, T: float, n: int,
                     master_seed: int, h: float = 1e-3,
                     batch_size: int = 512) -> dict:
    """Per-path sums over the away-from-band segments of (a) the generator
    residual of f and (b) the drift-replacement integral
    int (X^2/eps - 1/(2Y)) dt.  Both shrink with epsilon.

    Segments run [sigma_{k-1}, tau_k], plus the truncated tail up to T when
    the path ends outside the band: dropping the tail would condition on
    hitting the band and bias the estimator away from 0 even for an exact
    martingale.
    """
    delta = p.delta()
    grid = TimeGrid(0.0, T, h)
    inv_eps = 1.0 / p.epsilon

    def reduce_fn(ts, xs, ys, div):
        nb, length = ys.shape
        tau_idx, sig_idx, n_tau, n_sig = _scan_batch(ys, delta)
        af = generator_apply(f, ys.ravel()).reshape(ys.shape)
        res = np.zeros(nb)
        rep = np.zeros(nb)
        wins = np.zeros(nb)
        for i in range(nb):
            kt = int(n_tau[i])
            ks = int(n_sig[i])
            segments = [(0 if k == 0 else int(sig_idx[i, k - 1]),
                         int(tau_idx[i, k])) for k in range(kt)]
            if ks == kt:  # path ends outside the band
                segments.append((int(sig_idx[i, ks - 1]) if ks else 0,
                                 length - 1))
            for lo, hi in segments:
                if hi <= lo:
                    continue
                seg_af = af[i, lo:hi + 1]
                res[i] += f(ys[i, hi]) - f(ys[i, lo]) \
                    - h * (seg_af.sum() - 0.5 * (seg_af[0] + seg_af[-1]))
                seg = xs[i, lo:hi + 1] ** 2 * inv_eps \
                    - 0.5 / ys[i, lo:hi + 1]
                rep[i] += h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
                wins[i] += 1
        return {"res": res, "rep": rep, "wins": wins}

    out = rescaled_reduce(p, grid, master_seed, n, reduce_fn,
                          batch_size=batch_size)
    cfg = {"epsilon": p.epsilon, "f": f.name, "T": T, "h": h,
           "seed": master_seed, "delta": delta,
           "mean_windows": float(out["wins"].mean())}
    return {"generator_residual": StatReport.from_samples(out["res"], **cfg),
            "drift_replacement": StatReport.from_samples(out["rep"], **cfg)}
