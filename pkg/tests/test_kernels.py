"""Backend equivalence: the numba kernels and their numpy fallbacks must
produce the same trajectories from the same draws."""

import numpy as np
import pytest

from ablab import _kernels

pytestmark = pytest.mark.skipif(
    not _kernels.NUMBA_ENABLED,
    reason="numba backend disabled; nothing to compare")


@pytest.fixture(scope="module")
def impls():
    return _kernels.implementations()


def _close(a, b):
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13), \
        f"max diff {np.abs(a - b).max()}"


def test_rescaled_split_equivalence(impls):
    rng = np.random.default_rng(1)
    z1 = rng.standard_normal((16, 400))
    z2 = rng.standard_normal((16, 400))
    outs = {}
    for name, kk in impls.items():
        xs = np.empty((16, 401))
        ys = np.empty((16, 401))
        dv = np.zeros(16, dtype=bool)
        # eps small and x0 off-axis so the substepping branch is exercised
        kk["rescaled_split"](1.5, 0.5, 100.0, 1.0, 1e-3, 0.02, 1e6,
                             z1, z2, xs, ys, dv)
        outs[name] = (xs, ys, dv)
    _close(outs["numba"][0], outs["numpy"][0])
    _close(outs["numba"][1], outs["numpy"][1])
    assert np.array_equal(outs["numba"][2], outs["numpy"][2])


def test_rescaled_euler_equivalence(impls):
    rng = np.random.default_rng(2)
    z1 = rng.standard_normal((8, 300))
    z2 = rng.standard_normal((8, 300))
    outs = {}
    for name, kk in impls.items():
        xs = np.empty((8, 301))
        ys = np.empty((8, 301))
        dv = np.zeros(8, dtype=bool)
        kk["rescaled_euler"](0.0, 2.0, 10.0, 1.0, 1e-3, 1e6,
                             z1, z2, xs, ys, dv)
        outs[name] = (xs, ys)
    _close(outs["numba"][0], outs["numpy"][0])
    _close(outs["numba"][1], outs["numpy"][1])


def test_slowtime_equivalence(impls):
    rng = np.random.default_rng(3)
    z1 = rng.standard_normal((8, 300))
    z2 = rng.standard_normal((8, 300))
    outs = {}
    for name, kk in impls.items():
        xs = np.empty((8, 301))
        ys = np.empty((8, 301))
        dv = np.zeros(8, dtype=bool)
        kk["slowtime_euler"](0.3, 1.5, 0.1, 1.0, 1e-2, 1e6,
                             z1, z2, xs, ys, dv)
        outs[name] = (xs, ys)
    _close(outs["numba"][0], outs["numpy"][0])
    _close(outs["numba"][1], outs["numpy"][1])


def test_limit_and_radius_equivalence(impls):
    rng = np.random.default_rng(4)
    z = rng.standard_normal((8, 500))
    z2 = rng.standard_normal((8, 500))
    outs = {}
    for name, kk in impls.items():
        ys = np.empty((8, 501))
        kk["limit_sq_em"](1.0, 2.0, 2.0, 1e-3, z, ys)
        rs = np.empty((8, 501))
        kk["ou2d_radius"](2.0, np.exp(-1e-3),
                          np.sqrt(-np.expm1(-2e-3) / 2.0), z, z2, rs)
        outs[name] = (ys, rs)
    _close(outs["numba"][0], outs["numpy"][0])
    _close(outs["numba"][1], outs["numpy"][1])


def test_ou_exit_equivalence(impls):
    rng = np.random.default_rng(5)
    n = 64
    z = rng.standard_normal((n, 200))
    u = rng.random((n, 200, 2))
    h = 1e-4
    outs = {}
    for name, kk in impls.items():
        x = np.full(n, 0.1)
        t = np.zeros(n)
        tau = np.full(n, np.nan)
        done = np.zeros(n, dtype=bool)
        x, t = kk["ou_exit_chunk"](x, t, tau, done, z, u, -0.2, 0.2,
                                   np.exp(-h),
                                   np.sqrt(-np.expm1(-2 * h) / 2), h)
        outs[name] = (x, t, tau.copy(), done.copy())
    for i in range(4):
        a, b = outs["numba"][i], outs["numpy"][i]
        assert np.allclose(a, b, rtol=1e-12, equal_nan=True)


def test_scan_crossings_equivalence(impls):
    rng = np.random.default_rng(6)
    ys = np.cumsum(rng.standard_normal((32, 2000)) * 0.05, axis=1) + 1.0
    outs = {}
    for name, kk in impls.items():
        tau = np.zeros((32, 64), dtype=np.int64)
        sig = np.zeros((32, 64), dtype=np.int64)
        nt = np.zeros(32, dtype=np.int64)
        ns = np.zeros(32, dtype=np.int64)
        ov = np.zeros(32, dtype=bool)
        kk["scan_crossings"](ys, 0.5, tau, sig, nt, ns, ov)
        outs[name] = (tau, sig, nt, ns, ov)
    for i in range(5):
        assert np.array_equal(outs["numba"][i], outs["numpy"][i])
