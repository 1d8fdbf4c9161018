"""Backend equivalence and stepping-kernel semantics.

The compiled kernel must reproduce the numpy fallback bitwise: same
accumulation order, same clamping, same statistics updates.
"""

import numpy as np
import pytest

from kimura_lab._kernels import reference

_core = pytest.importorskip("kimura_lab._kernels._core")


def _random_inputs(rng, B, n, m, sigma_batched):
    d = n + m
    x = rng.standard_normal((B, n)) * 0.6 + 0.4
    y = rng.standard_normal((B, m))
    drift_x = rng.standard_normal((B, n))
    drift_y = rng.standard_normal((B, m))
    sigma = rng.standard_normal((B, d, d)) if sigma_batched else rng.standard_normal((d, d))
    dw = rng.standard_normal((B, d)) * 0.05
    return x, y, drift_x, drift_y, sigma, dw


@pytest.mark.parametrize("n,m", [(1, 0), (2, 0), (1, 1), (2, 2), (0, 1)])
@pytest.mark.parametrize("sigma_batched", [False, True])
@pytest.mark.parametrize("clamp", [True, False])
def test_backends_bitwise_identical(n, m, sigma_batched, clamp):
    rng = np.random.default_rng(12345)
    B = 257
    x, y, bx, by, sigma, dw = _random_inputs(rng, B, n, m, sigma_batched)
    state = {}
    for name, impl in (("py", reference), ("c", _core)):
        xx, yy = x.copy(), y.copy()
        neg = np.zeros(B)
        hits = np.zeros(B, dtype=np.int64)
        pre = np.empty((B, n))
        impl.em_step(xx, yy, bx, by, sigma, dw, 1e-3, clamp, neg, hits, pre_x=pre)
        state[name] = (xx, yy, neg, hits, pre)
    for a, b in zip(state["py"], state["c"]):
        assert np.array_equal(a, b)


def test_clamp_produces_exact_zeros_and_counts_hits():
    # strong negative drift forces the clamp
    x = np.array([[0.01]])
    y = np.zeros((1, 0))
    bx = np.array([[-5.0]])
    by = np.zeros((1, 0))
    sigma = np.zeros((1, 1))
    dw = np.zeros((1, 1))
    neg = np.zeros(1)
    hits = np.zeros(1, dtype=np.int64)
    pre = np.empty((1, 1))
    reference.em_step(x, y, bx, by, sigma, dw, 1.0, True, neg, hits, pre_x=pre)
    assert x[0, 0] == 0.0
    assert pre[0, 0] == pytest.approx(0.01 - 5.0)
    assert neg[0] == pytest.approx(5.0 - 0.01)
    assert hits[0] == 1


def test_record_only_leaves_state_unclamped():
    x = np.array([[0.01]])
    y = np.zeros((1, 0))
    neg = np.zeros(1)
    hits = np.zeros(1, dtype=np.int64)
    reference.em_step(
        x, y, np.array([[-5.0]]), np.zeros((1, 0)), np.zeros((1, 1)),
        np.zeros((1, 1)), 1.0, False, neg, hits,
    )
    assert x[0, 0] == pytest.approx(-4.99)
    assert hits[0] == 1  # ended at or below the boundary
    assert neg[0] == pytest.approx(4.99)


def test_sqrt_scaling_uses_positive_part():
    # negative x contributes no noise: sqrt(max(x,0)) = 0
    x = np.array([[-1.0]])
    y = np.zeros((1, 0))
    neg = np.zeros(1)
    hits = np.zeros(1, dtype=np.int64)
    reference.em_step(
        x, y, np.array([[2.0]]), np.zeros((1, 0)), np.eye(1),
        np.array([[10.0]]), 0.5, False, neg, hits,
    )
    assert x[0, 0] == pytest.approx(-1.0 + 2.0 * 0.5)
