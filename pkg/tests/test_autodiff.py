"""Finite-difference checks for every differentiable primitive."""
import numpy as np

from s2plab import autodiff as ad
from s2plab.rng import RngStream

EPS = 1e-6
TOL = 1e-4


def numeric_grad(f, x0):
    """Central-difference gradient of scalar f at x0."""
    g = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x0.copy(); xp[idx] += EPS
        xm = x0.copy(); xm[idx] -= EPS
        g[idx] = (f(xp) - f(xm)) / (2 * EPS)
        it.iternext()
    return g


def check_unary(op, x0, reduce_first=False):
    def scalar(x):
        t = ad.leaf(x)
        out = op(t)
        return float(out.data if out.data.ndim == 0 else out.data.sum())

    t = ad.leaf(x0)
    out = op(t)
    if out.data.ndim == 0:
        out.backward()
    else:
        ad.sum_all(out).backward()
    num = numeric_grad(scalar, x0)
    denom = max(np.abs(num).max(), 1.0)
    assert np.abs(t.grad - num).max() / denom < TOL


RNG = np.random.default_rng(7)
X = RNG.normal(size=(3, 4))
Y = RNG.normal(size=(3, 4))


def test_add():
    check_unary(lambda t: ad.add(t, ad.constant(Y)), X.copy())


def test_sub():
    check_unary(lambda t: ad.sub(ad.constant(Y), t), X.copy())


def test_mul():
    check_unary(lambda t: ad.mul(t, ad.constant(Y)), X.copy())


def test_scale():
    check_unary(lambda t: ad.scale(t, -2.5), X.copy())


def test_add_scalar():
    check_unary(lambda t: ad.add_scalar(t, 3.0), X.copy())


def test_matmul_left():
    W = RNG.normal(size=(4, 5))
    check_unary(lambda t: ad.matmul(t, ad.constant(W)), X.copy())


def test_matmul_right():
    W = RNG.normal(size=(5, 3))
    check_unary(lambda t: ad.matmul(ad.constant(W), t), X.copy())


def test_tanh():
    check_unary(ad.tanh, X.copy())


def test_sigmoid():
    check_unary(ad.sigmoid, X.copy())


def test_recip():
    check_unary(ad.recip, np.abs(X) + 0.5)


def test_mean_cols():
    check_unary(ad.mean_cols, X.copy())


def test_sum_all():
    check_unary(ad.sum_all, X.copy())


def test_mean_all():
    check_unary(ad.mean_all, X.copy())


def test_concat_cols():
    check_unary(lambda t: ad.concat_cols([t, ad.constant(Y)]), X.copy())


def test_slice_cols():
    check_unary(lambda t: ad.slice_cols(t, 1, 3), X.copy())


def test_embedding():
    idx = np.array([0, 2, 2, 1])
    check_unary(lambda t: ad.embedding(t, idx), X.copy())


def test_softmax_rows():
    # weighted sum so the gradient is nontrivial (plain sum has zero grad)
    W = RNG.normal(size=(3, 4))
    check_unary(lambda t: ad.sum_all(ad.mul(ad.softmax_rows(t), ad.constant(W))),
                X.copy())


def test_log_softmax_rows():
    W = RNG.normal(size=(3, 4))
    check_unary(lambda t: ad.sum_all(ad.mul(ad.log_softmax_rows(t), ad.constant(W))),
                X.copy())


def test_pick_cols():
    idx = np.array([0, 3, 1])
    check_unary(lambda t: ad.pick_cols(t, idx), X.copy())


def test_cross_entropy_rows():
    targets = np.array([1, 0, 2])
    check_unary(lambda t: ad.cross_entropy_rows(t, targets), X.copy()[:, :3] * 2)


def test_affine():
    W = RNG.normal(size=(4, 5))
    b = RNG.normal(size=(1, 5))
    check_unary(lambda t: ad.affine(t, ad.constant(W), ad.constant(b)), X.copy())
    check_unary(lambda t: ad.affine(ad.constant(X), t, ad.constant(b)), W.copy())
    check_unary(lambda t: ad.affine(ad.constant(X), ad.constant(W), t), b.copy())


def test_gru_step():
    d = 4
    names = ["wxz", "whz", "bz", "wxr", "whr", "br", "wxh", "whh", "bh"]
    weights = {}
    for n in names:
        shape = (1, d) if n.startswith("b") else (d, d)
        weights[n] = RNG.normal(size=shape)
    h0 = RNG.normal(size=(3, d))
    x0 = RNG.normal(size=(3, d))

    def as_tensors(over_name=None, leaf_val=None):
        out = {}
        for n in names:
            if n == over_name:
                out[n] = ad.leaf(leaf_val)
            else:
                out[n] = ad.constant(weights[n])
        return out

    # gradient wrt the hidden state
    check_unary(lambda t: ad.gru_step(t, ad.constant(x0), as_tensors()), h0.copy())
    # gradient wrt the input
    check_unary(lambda t: ad.gru_step(ad.constant(h0), t, as_tensors()), x0.copy())
    # gradient wrt each weight matrix
    for n in names:
        def op(t, n=n):
            w = as_tensors()
            w[n] = t
            return ad.gru_step(ad.constant(h0), ad.constant(x0), w)
        check_unary(op, weights[n].copy())


def test_gumbel_softmax_st_forward_is_onehot():
    logits = ad.leaf(RNG.normal(size=(16, 5)))
    hard, soft = ad.gumbel_softmax_st(logits, 1.0, RngStream.from_seed(0))
    assert hard.data.shape == (16, 5)
    assert np.allclose(hard.data.sum(axis=1), 1.0)
    assert set(np.unique(hard.data)) <= {0.0, 1.0}
    assert np.allclose(soft.data.sum(axis=1), 1.0)


def test_gumbel_softmax_st_gradient_matches_soft_path():
    """Straight-through: d(hard)/d(logits) is exactly d(soft)/d(logits)."""
    x0 = RNG.normal(size=(4, 5))
    W = RNG.normal(size=(4, 5))

    t_hard = ad.leaf(x0)
    hard, _ = ad.gumbel_softmax_st(t_hard, 0.7, RngStream.from_seed(3))
    ad.sum_all(ad.mul(hard, ad.constant(W))).backward()

    t_soft = ad.leaf(x0)
    _, soft = ad.gumbel_softmax_st(t_soft, 0.7, RngStream.from_seed(3))
    ad.sum_all(ad.mul(soft, ad.constant(W))).backward()

    assert np.allclose(t_hard.grad, t_soft.grad)


def test_gumbel_softmax_st_samples_follow_softmax():
    logits = np.log(np.array([[0.6, 0.3, 0.1]]))
    counts = np.zeros(3)
    rng = RngStream.from_seed(11)
    n = 4000
    t = ad.constant(np.repeat(logits, n, axis=0))
    hard, _ = ad.gumbel_softmax_st(t, 1.0, rng)
    counts = hard.data.sum(axis=0)
    assert np.abs(counts / n - np.array([0.6, 0.3, 0.1])).max() < 0.03


def test_unbroadcast_bias_grad():
    b0 = RNG.normal(size=(1, 4))
    check_unary(lambda t: ad.add(ad.constant(X), t), b0)


def test_softmax_helper_normalizes():
    v = np.array([1.0, 2.0, 3.0])
    s = ad.softmax(v)
    assert s.shape == (3,)
    assert abs(s.sum() - 1.0) < 1e-12
    assert s.argmax() == 2


def test_cross_entropy_helper_matches_grad():
    logits = np.array([0.3, -1.2, 2.0])
    loss, grad = ad.cross_entropy(logits, 1)
    p = ad.softmax(logits)
    assert abs(loss + np.log(p[1])) < 1e-12
    expected = p.copy()
    expected[1] -= 1.0
    assert np.allclose(grad, expected)


def test_backward_accumulates_through_shared_node():
    t = ad.leaf(X.copy())
    y = ad.add(ad.mul(t, t), t)       # x^2 + x, grad 2x + 1
    ad.sum_all(y).backward()
    assert np.allclose(t.grad, 2 * X + 1)
