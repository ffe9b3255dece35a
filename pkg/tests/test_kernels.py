"""Backend equivalence: the compiled kernels must agree with the numpy
fallback (bit-identically where the contract promises it)."""

import numpy as np
import pytest

from panelift import _pykernels
from panelift.kernels import available_backends, get_backend

backends = available_backends()
needs_c = pytest.mark.skipif("c" not in backends, reason="compiled extension not built")


def _brute_inversions(v):
    n = len(v)
    return sum(1 for i in range(n) for j in range(i + 1, n) if v[i] > v[j])


def test_backend_identifies_itself():
    assert get_backend() in ("c", "python")
    assert "python" in backends


@pytest.mark.parametrize("name,impl", sorted(backends.items()))
def test_count_inversions_matches_brute_force(name, impl, rng):
    for n in (0, 1, 2, 3, 17, 64, 65, 128, 300, 1000):
        v = rng.integers(0, max(2, n // 2 + 1), max(n, 1)).astype(float)[:n]
        assert impl.count_inversions(v) == _brute_inversions(v), (name, n)
    sorted_v = np.arange(50, dtype=float)
    assert impl.count_inversions(sorted_v) == 0
    assert impl.count_inversions(sorted_v[::-1].copy()) == 50 * 49 // 2


@needs_c
def test_count_inversions_backends_agree(rng):
    c = backends["c"]
    for n in (5, 100, 4096, 10_001):
        v = rng.standard_normal(n)
        assert c.count_inversions(v) == _pykernels.count_inversions(v)


@pytest.mark.parametrize("name,impl", sorted(backends.items()))
def test_ols_moments_against_numpy_reference(name, impl, rng):
    offsets = np.array([0, 4, 10, 30, 31], dtype=np.int64)
    x = rng.standard_normal(31) * 3.0 + 5.0
    y = rng.standard_normal(31)
    counts, mx, my, sxx, sxy, syy = impl.ols_moments(offsets, x, y)
    for g in range(4):
        xs = x[offsets[g] : offsets[g + 1]]
        ys = y[offsets[g] : offsets[g + 1]]
        assert counts[g] == len(xs)
        assert mx[g] == pytest.approx(xs.mean(), rel=1e-13)
        assert my[g] == pytest.approx(ys.mean(), rel=1e-13)
        assert sxx[g] == pytest.approx(((xs - xs.mean()) ** 2).sum(), rel=1e-11, abs=1e-12)
        assert sxy[g] == pytest.approx(
            ((xs - xs.mean()) * (ys - ys.mean())).sum(), rel=1e-11, abs=1e-12
        )
        assert syy[g] == pytest.approx(((ys - ys.mean()) ** 2).sum(), rel=1e-11, abs=1e-12)


@needs_c
def test_ols_moments_backends_close(rng):
    c = backends["c"]
    n_units, T = 50, 40
    offsets = np.arange(n_units + 1, dtype=np.int64) * T
    x = rng.standard_normal(n_units * T) + 10.0
    y = 2.0 * x + rng.standard_normal(n_units * T)
    out_c = c.ols_moments(offsets, x, y)
    out_p = _pykernels.ols_moments(offsets, x, y)
    assert np.array_equal(out_c[0], out_p[0])
    for a, b in zip(out_c[1:], out_p[1:]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_c
def test_scan_feature_splits_bit_identical(rng):
    c = backends["c"]
    for trial in range(5):
        n = 3000
        xv = rng.integers(0, 25, n).astype(float)  # heavy ties
        grad = rng.standard_normal(n)
        node_of = rng.integers(-1, 6, n).astype(np.int32)
        sort_idx = np.argsort(xv, kind="stable")
        out_c = c.scan_feature_splits(sort_idx, xv, node_of, grad, 6, 3)
        out_p = _pykernels.scan_feature_splits(sort_idx, xv, node_of, grad, 6, 3)
        for a, b in zip(out_c, out_p):
            assert np.array_equal(a, b), trial


@pytest.mark.parametrize("name,impl", sorted(backends.items()))
def test_scan_feature_splits_semantics(name, impl):
    # one node, values 0..9, gradient +1 on the right half: best split at 4.5
    xv = np.arange(10, dtype=float)
    grad = np.where(xv >= 5, 1.0, -1.0)
    sort_idx = np.argsort(xv, kind="stable")
    node_of = np.zeros(10, dtype=np.int32)
    gain, thr, left_cnt, left_sum = impl.scan_feature_splits(sort_idx, xv, node_of, grad, 1, 1)
    assert thr[0] == pytest.approx(4.5)
    assert left_cnt[0] == 5
    assert left_sum[0] == pytest.approx(-5.0)
    assert gain[0] == pytest.approx(10.0)  # 25/5 + 25/5 - 0

    # min_leaf can forbid every candidate
    gain2, *_ = impl.scan_feature_splits(sort_idx, xv, node_of, grad, 1, 6)
    assert gain2[0] == -np.inf

    # inactive samples are ignored
    node_of2 = node_of.copy()
    node_of2[:5] = -1
    gain3, thr3, *_ = impl.scan_feature_splits(sort_idx, xv, node_of2, grad, 1, 1)
    assert gain3[0] == pytest.approx(0.0, abs=1e-12) or gain3[0] == -np.inf


@needs_c
def test_trained_model_identical_across_backends(rng, monkeypatch):
    # training decisions flow solely through scan_feature_splits outputs,
    # which are bit-identical, so tree structures must match exactly
    from panelift import gbdt, kernels

    X = rng.standard_normal((800, 5))
    margin = X[:, 0] - 0.5 * X[:, 1]
    y = (margin + 0.3 * rng.standard_normal(800) > 0).astype(float)

    def run(impl):
        monkeypatch.setattr(kernels, "scan_feature_splits", impl.scan_feature_splits)
        monkeypatch.setattr(gbdt.kernels, "scan_feature_splits", impl.scan_feature_splits)
        trees, base, losses, leafs = gbdt.boost(
            X, y, n_trees=12, max_depth=3, min_leaf=10, learning_rate=0.1
        )
        return trees, base, losses

    trees_c, base_c, losses_c = run(backends["c"])
    trees_p, base_p, losses_p = run(_pykernels)
    assert base_c == base_p
    assert losses_c == losses_p
    for tc, tp in zip(trees_c, trees_p):
        assert np.array_equal(tc.feature, tp.feature)
        assert np.array_equal(tc.threshold, tp.threshold)
        assert np.array_equal(tc.left, tp.left)
        assert np.array_equal(tc.value, tp.value)
