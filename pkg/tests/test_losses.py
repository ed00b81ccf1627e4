import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudograph.errors import InvalidInputError
from pseudograph.graph import IGNORED, PartialLabelGrid
from pseudograph.losses import (LossBreakdown, LossWeights, loss_bg, loss_entropy, loss_fg,
                                loss_laplacian, total_loss)
from pseudograph.numeric import SparseMatrix


def labels(*vals, classes=2):
    return PartialLabelGrid(1, len(vals), classes, list(vals))


def random_case(rng, n=None, k=None):
    n = n or int(rng.integers(2, 13))
    k = k or int(rng.integers(2, 5))
    q = rng.dirichlet(np.ones(k), size=n) * 0.9 + 0.1 / k  # interior of the simplex
    lab = rng.integers(-1, k, size=n)
    p = PartialLabelGrid(1, n, k - 1, np.where(lab < 0, IGNORED, lab))
    dense = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
    dense = dense + dense.T
    return q, p, SparseMatrix.from_dense(dense)


def finite_diff(fn, q, h=1e-6):
    g = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        up, dn = q.copy(), q.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (fn(up) - fn(dn)) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rel=1e-6):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    # near-zero entries are judged against the central-difference roundoff floor (~eps*|f|/h)
    assert np.all((err <= rel * scale) | (err <= 1e-8)), np.max(err / np.maximum(scale, 1e-300))


def test_fg_examples():
    p = labels(1, 2, classes=2)
    assert loss_fg(np.array([[0, 1, 0], [0, 0, 1.0]]), p)[0] == 0.0
    assert loss_fg(np.full((2, 3), 1 / 3), p)[0] == pytest.approx(math.log(3), abs=1e-12)
    assert loss_fg(np.full((2, 3), 1 / 3), p)[0] == pytest.approx(1.098612, abs=1e-6)
    value, grad = loss_fg(np.array([[0.5, 0.25, 0.25]]), labels(1))
    assert value == pytest.approx(-math.log(0.25), abs=1e-15)
    assert value == pytest.approx(1.386294, abs=1e-6)
    assert np.allclose(grad, [[0, -4.0, 0]])


def test_bg_examples():
    perfect = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert loss_bg(perfect, labels(0, 0, classes=1))[0] == 0.0
    value, grad = loss_bg(np.full((2, 2), 0.5), labels(1, IGNORED, classes=1))
    assert value == 0.0 and not grad.any()
    q = np.array([[0.5, 0.5], [0.25, 0.75]])
    value, _ = loss_bg(q, labels(0, 0, classes=1))
    assert value == pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-15)
    assert value == pytest.approx(1.039721, abs=1e-6)


def test_entropy_examples():
    p = labels(IGNORED, IGNORED, classes=1)
    assert loss_entropy(np.array([[1.0, 0.0], [0.0, 1.0]]), p)[0] == 0.0
    one = labels(IGNORED, classes=1)
    assert loss_entropy(np.array([[0.5, 0.5]]), one)[0] == pytest.approx(math.log(2), abs=1e-15)
    v = loss_entropy(np.array([[0.9, 0.1]]), one)[0]
    assert v == pytest.approx(-(0.9 * math.log(0.9) + 0.1 * math.log(0.1)), abs=1e-15)
    assert v == pytest.approx(0.325083, abs=1e-6)


def test_laplacian_examples():
    phi = SparseMatrix.from_dense([[0, 0.5], [0.5, 0]])
    assert loss_laplacian(np.array([[0.3, 0.7], [0.3, 0.7]]), phi)[0] == 0.0
    assert loss_laplacian(np.eye(2), SparseMatrix.zeros(2))[0] == 0.0
    assert loss_laplacian(np.eye(2), phi)[0] == pytest.approx(0.5, abs=1e-15)


def test_laplacian_matches_double_sum():
    rng = np.random.default_rng(7)
    q, _, phi = random_case(rng, n=9, k=3)
    dense = phi.to_dense()
    expect = sum(dense[i, j] * np.sum((q[i] - q[j]) ** 2) for i in range(9) for j in range(9)) / 18
    assert loss_laplacian(q, phi)[0] == pytest.approx(expect, rel=1e-13)


def test_laplacian_rejects_asymmetric_kernel():
    with pytest.raises(InvalidInputError):
        loss_laplacian(np.eye(2), SparseMatrix.from_dense([[0, 1.0], [0.5, 0]]))


def test_class_count_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        loss_fg(np.full((1, 3), 1 / 3), labels(1, classes=1))


def test_total_examples():
    assert LossBreakdown.from_terms(1, 2, 0.5, 10, LossWeights(10, 0.01)).total == pytest.approx(8.1, abs=1e-12)
    rng = np.random.default_rng(0)
    q, p, phi = random_case(rng)
    parts, _ = total_loss(q, p, phi, LossWeights(0, 0))
    assert parts.total == parts.fg + parts.bg
    p_all = labels(0, 1, classes=1)
    parts, grad = total_loss(np.array([[1.0, 0], [0, 1.0]]), p_all, SparseMatrix.zeros(2), LossWeights())
    assert parts.total == 0.0


def test_masked_terms_report_zero():
    rng = np.random.default_rng(1)
    q, p, phi = random_case(rng)
    parts, grad = total_loss(q, p, None, LossWeights(), use_ent=False, use_lp=False)
    ref, ref_grad = total_loss(q, p, phi, LossWeights(0, 0))
    assert parts.ent == parts.lp == 0.0
    assert parts.total == ref.total and np.array_equal(grad, ref_grad)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_term_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    q, p, phi = random_case(rng)
    for fn in (lambda x: loss_fg(x, p), lambda x: loss_bg(x, p), lambda x: loss_entropy(x, p),
               lambda x: loss_laplacian(x, phi)):
        assert_grad_close(fn(q)[1], finite_diff(lambda x: fn(x)[0], q))
    w = LossWeights()
    parts, grad = total_loss(q, p, phi, w)
    assert_grad_close(grad, finite_diff(lambda x: total_loss(x, p, phi, w)[0].total, q))
    assert abs(parts.total - (parts.fg + parts.bg + w.beta1 * parts.ent + w.beta2 * parts.lp)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_entropy_bounds(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    q = rng.dirichlet(np.full(k, rng.uniform(0.05, 3)), size=6)
    p = PartialLabelGrid(1, 6, k - 1, [IGNORED] * 6)
    v = loss_entropy(q, p)[0]
    assert 0.0 <= v <= math.log(k) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    q, _, phi = random_case(rng)
    n = q.shape[0]
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    phi_p = SparseMatrix.from_triplets(inv[phi.rows], inv[phi.cols], phi.values, phi.shape)
    assert loss_laplacian(q[perm], phi_p)[0] == pytest.approx(loss_laplacian(q, phi)[0], rel=1e-12)


def test_cross_entropy_ignores_rows_outside_partition():
    rng = np.random.default_rng(5)
    q, p, _ = random_case(rng, n=10, k=3)
    other = np.flatnonzero(p.labels <= 0)
    q2 = q.copy()
    q2[other] = rng.dirichlet(np.ones(3), size=len(other))
    assert loss_fg(q2, p)[0] == loss_fg(q, p)[0]
    outside_bg = np.flatnonzero(p.labels != 0)
    q3 = q.copy()
    q3[outside_bg] = rng.dirichlet(np.ones(3), size=len(outside_bg))
    assert loss_bg(q3, p)[0] == loss_bg(q, p)[0]
