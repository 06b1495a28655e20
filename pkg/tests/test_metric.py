import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from craig.dataset import Dataset, normalize_rows
from craig.metric import (
    DissimilarityBlock,
    calibrate_scale,
    convex_feature_bounds,
    lipschitz_constant,
    load_block,
    proxy_bounds,
    sample_ball,
    save_block,
    softmax_proxy,
)
from craig.optim import LossModel
from craig.synthetic import gaussian_blobs, linear_regression


def one_class(X):
    return Dataset(np.asarray(X, dtype=float), np.zeros(len(X), dtype=int))


def test_identical_points_zero():
    b = convex_feature_bounds(one_class([[0.2, 0.1], [0.2, 0.1]]), [0, 1], 3.0)
    assert b.dist[0, 1] == 0.0


def test_unit_distance():
    b = convex_feature_bounds(one_class([[1.0, 0.0], [0.0, 0.0]]), [0, 1], 1.0)
    assert b.dist[0, 1] == 1.0


def test_line_points_row():
    # brute-force oracle: 2 * |x_a - x_b| on the line
    b = convex_feature_bounds(one_class([[0.0], [0.3], [1.0]]), [0, 1, 2], 2.0)
    np.testing.assert_allclose(b.dist[0], [0.0, 0.6, 2.0], rtol=0, atol=1e-15)


def test_mixed_labels_rejected():
    ds = Dataset(np.zeros((2, 1)), [0, 1])
    with pytest.raises(ValueError, match="single-label"):
        convex_feature_bounds(ds, [0, 1], 1.0)


@pytest.mark.parametrize("scale", [0.0, -1.0])
def test_nonpositive_scale_rejected(scale):
    with pytest.raises(ValueError):
        convex_feature_bounds(one_class([[0.0], [1.0]]), [0, 1], scale)


def test_softmax_proxy_uniform():
    np.testing.assert_allclose(softmax_proxy([[0.0, 0.0]], [0]).vectors[0], [-0.5, 0.5], atol=1e-15)


def test_softmax_proxy_saturated():
    g = softmax_proxy([[1000.0, 0.0]], [0]).vectors[0]
    assert np.all(np.abs(g) <= 1e-9)


def test_softmax_proxy_three_classes():
    # frozen from a 50-digit decimal evaluation of softmax(1, 2, 3) - e_3
    expect = [0.09003057317038046, 0.24472847105479764, -0.3347590442251781]
    np.testing.assert_allclose(softmax_proxy([[1.0, 2.0, 3.0]], [2]).vectors[0], expect, rtol=1e-14)


def test_softmax_proxy_rows_sum_to_zero():
    rng = np.random.default_rng(0)
    pv = softmax_proxy(rng.standard_normal((50, 7)) * 5, rng.integers(0, 7, 50))
    assert np.all(np.abs(pv.vectors.sum(axis=1)) <= 1e-12)


def test_softmax_proxy_label_out_of_range():
    with pytest.raises(ValueError):
        softmax_proxy([[0.0, 1.0]], [2])


def test_proxy_bounds_examples():
    pv = softmax_proxy(np.zeros((3, 2)), [0, 0, 1])
    b = proxy_bounds(pv, [0, 1])
    assert b.dist[0, 1] == 0.0
    from craig.metric import ProxyVectors

    b = proxy_bounds(ProxyVectors([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
    assert b.dist[0, 1] == pytest.approx(np.sqrt(2), abs=1e-15)


def test_proxy_bounds_brute_force():
    rng = np.random.default_rng(7)
    from craig.metric import ProxyVectors

    V = rng.standard_normal((4, 3))
    b = proxy_bounds(ProxyVectors(V), np.arange(4))
    brute = np.array([[np.sqrt(sum((V[i, k] - V[j, k]) ** 2 for k in range(3))) for j in range(4)] for i in range(4)])
    np.testing.assert_allclose(b.dist, brute, rtol=0, atol=1e-12)


@pytest.mark.parametrize("sparse", [False, True])
def test_block_is_metric(sparse):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 6)) * 0.3
    if sparse:
        X[rng.random(X.shape) < 0.6] = 0.0
        X = sp.csr_matrix(X)
    b = convex_feature_bounds(Dataset(X, np.zeros(20, dtype=int)), np.arange(20), 1.7)
    D = b.dist
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0) and np.all(D >= 0) and np.all(np.isfinite(D))
    for i, j, k in itertools.product(range(20), repeat=3):
        assert D[i, k] <= D[i, j] + D[j, k] + 1e-12


def test_on_demand_rows_match_materialized():
    ds = gaussian_blobs(120, 5, 1, seed=2)
    lazy = convex_feature_bounds(ds, np.arange(ds.n), 2.0, materialize=False)
    full = convex_feature_bounds(ds, np.arange(ds.n), 2.0)
    assert lazy.dist is None
    np.testing.assert_allclose(lazy.rows(np.arange(ds.n)), full.dist, rtol=0, atol=1e-13)
    assert lazy.max_dist() == pytest.approx(full.max_dist(), abs=1e-13)


def test_regression_block_adds_label_term():
    ds = Dataset(np.array([[0.1], [0.1]]), np.array([0.0, 2.0]), task="regression")
    b = convex_feature_bounds(ds, [0, 1], 5.0)
    assert b.dist[0, 1] == 2.0


@pytest.mark.parametrize("kind", ["logistic", "ridge"])
def test_calibrated_bound_holds(kind):
    radius = 10.0
    loss = LossModel(kind, 1e-5)
    if kind == "logistic":
        ds = gaussian_blobs(200, 4, 2, spread=0.5, seed=3)
        group = np.flatnonzero(ds.labels == 0)[:30]
    else:
        ds = linear_regression(200, 4, seed=3)
        group = np.arange(30)
    scale = calibrate_scale(loss, ds, radius, samples=500, seed=0)
    D = convex_feature_bounds(ds, group, scale).dist
    rng = np.random.default_rng(11)
    X, y = ds.rows(group), ds.labels[group]
    for w in sample_ball(rng, ds.d, radius, 100):
        G = loss.grads(w, X, y)
        diff = np.linalg.norm(G[:, None, :] - G[None, :, :], axis=2)
        assert np.all(diff <= D + 1e-9)


def test_logistic_scale_at_unit_radius_passes_audit():
    ds = gaussian_blobs(300, 5, 2, spread=0.8, seed=4)
    loss = LossModel("logistic", 0.0)
    c = calibrate_scale(loss, ds, 1.0, samples=1000, seed=5)
    assert c >= 1.0
    # fresh Monte-Carlo audit
    rng = np.random.default_rng(99)
    W = sample_ball(rng, ds.d, 1.0, 1000)
    for t in range(1000):
        cls = rng.integers(2)
        i, j = rng.choice(np.flatnonzero(ds.labels == cls), 2, replace=False)
        rows = ds.rows([i, j])
        g = loss.grads(W[t], rows, ds.labels[[i, j]])
        assert np.linalg.norm(g[0] - g[1]) <= c * np.linalg.norm(rows[0] - rows[1]) + 1e-12


def test_ridge_zero_radius_equal_labels():
    ds = normalize_rows(Dataset(np.random.default_rng(0).standard_normal((10, 3)), np.full(10, 0.7), task="regression"))
    loss = LossModel("ridge", 0.0)
    c = calibrate_scale(loss, ds, 0.0, samples=200)
    assert c == pytest.approx(0.7)
    g = loss.grads(np.zeros(3), ds.features, ds.labels)
    # at w = 0 the gradient is -y x; equal labels leave only the feature term
    assert np.linalg.norm(g[0] - g[1]) <= c * np.linalg.norm(ds.features[0] - ds.features[1]) + 1e-15


def test_single_point_returns_closed_form():
    ds = Dataset(np.array([[0.5, 0.5]]), [0])
    loss = LossModel("logistic")
    assert calibrate_scale(loss, ds, 3.0) == lipschitz_constant(loss, 3.0)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        calibrate_scale(LossModel(), one_class([[0.0], [1.0]]), -1.0)


def test_block_binary_roundtrip(tmp_path):
    ds = gaussian_blobs(30, 3, 1, seed=0)
    b = convex_feature_bounds(ds, np.arange(5, 25), 1.25, class_id=0)
    save_block(b, tmp_path / "b.bin")
    back = load_block(tmp_path / "b.bin")
    assert (back.class_id, back.m, back.scale, back.kind) == (0, 20, 1.25, "convex-feature")
    assert np.array_equal(back.dist, b.dist)
    assert np.array_equal(back.indices, b.indices)


def test_block_binary_truncated(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(b"CRGDIST1")
    with pytest.raises(ValueError):
        load_block(p)


def test_unknown_kind():
    with pytest.raises(ValueError):
        DissimilarityBlock(0, [0], 1.0, "other")
