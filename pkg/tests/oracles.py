"""Independent reference computations shared by the test modules."""
import numpy as np

from pseudograph.gcn import GcnParams
from pseudograph.graph import IGNORED, FeatureGrid, GuidanceImage, PartialLabelGrid, build_self_augmented
from pseudograph.numeric import SparseMatrix


def random_gcn_instance(seed, max_n=10, max_d=6, max_k=3, hidden=16):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(1, 4))
    w = int(rng.integers(1, max_n // h + 1))
    n = h * w
    d = int(rng.integers(1, max_d + 1))
    k = int(rng.integers(2, max_k + 1))
    dense = rng.random((n, n)) * (rng.random((n, n)) < 0.6)
    dense = np.triu(dense, 1)
    dense = dense + dense.T
    aff = build_self_augmented(SparseMatrix.from_dense(dense))
    fg = FeatureGrid(h, w, rng.normal(size=(n, d)))
    params = GcnParams(rng.normal(size=(d, hidden)) * 0.7, rng.normal(size=(hidden, k)) * 0.7)
    lab = rng.integers(-1, k, size=n)
    lab[0] = rng.integers(0, k)  # at least one labeled node
    p = PartialLabelGrid(h, w, k - 1, np.where(lab < 0, IGNORED, lab))
    guidance = GuidanceImage(h, w, rng.random((n, 3)))
    return aff, fg, params, p, guidance


def dense_gcn(a_tilde, v, w1, w2):
    """Plain dense evaluation of softmax(A relu(A V W1) W2), row by row."""
    z1 = a_tilde @ (v @ w1)
    h1 = np.where(z1 > 0, z1, 0.0)
    z2 = a_tilde @ (h1 @ w2)
    out = np.empty_like(z2)
    for i, row in enumerate(z2):
        e = np.exp(row - row.max())
        out[i] = e / e.sum()
    return out


def mlp_per_node(v, w1, w2):
    """Graph-free reference: each node classified on its own features."""
    out = []
    for row in v:
        hidden = np.maximum(row @ w1, 0.0)
        logits = hidden @ w2
        e = np.exp(logits - logits.max())
        out.append(e / e.sum())
    return np.array(out)


def central_diff(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn()
        x[idx] = old - h
        dn = fn()
        x[idx] = old
        g[idx] = (up - dn) / (2 * h)
    return g


def gradient_mismatch(analytic, numeric, rel, floor):
    """Entries failing ``|a - n| <= rel * max(|a|, |n|)`` that are also above ``floor``."""
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return (err > rel * scale) & (err > floor)
