import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfipin import learncore as lc
from bfipin.learncore import Tensor, check_gradients, checkpoint

TOL = 1e-4


def param(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestOpGradients:
    """Every differentiable op against central differences (h = 1e-4, float64)."""

    def test_elementwise_arithmetic(self, rng):
        a, b = param(rng, 3, 4), param(rng, 4, low=0.5, high=2.0)
        assert check_gradients(lambda: ((a + b) * (a - b) / b).sum(), [a, b]) < TOL
        assert check_gradients(lambda: (2.0 - a * 3.0 + 1.0 / b).sum(), [a, b]) < TOL

    def test_pow_exp_log_sqrt_tanh(self, rng):
        x = param(rng, 5, low=0.3, high=2.0)
        assert check_gradients(lambda: (x ** 3).sum() + x.exp().sum() + x.log().sum(), [x]) < TOL
        assert check_gradients(lambda: (x.sqrt() * x.tanh()).sum(), [x]) < TOL

    def test_relu(self, rng):
        x = Tensor(rng.choice([-1, 1], size=(4, 3)) * rng.uniform(0.1, 1.0, size=(4, 3)), requires_grad=True)
        assert check_gradients(lambda: (x.relu() * x).sum(), [x]) < TOL

    def test_matmul_broadcast(self, rng):
        a, b = param(rng, 2, 3, 4), param(rng, 4, 5)
        assert check_gradients(lambda: ((a @ b) ** 2).mean(), [a, b]) < TOL

    def test_shape_ops(self, rng):
        x = param(rng, 2, 3, 4)
        assert check_gradients(lambda: (x.reshape(6, 4).T @ x.reshape(6, 4)).sum(), [x]) < TOL
        assert check_gradients(lambda: (x.transpose(2, 0, 1)[1:, :, ::2] ** 2).sum(), [x]) < TOL
        idx = np.array([0, 2, 0])
        assert check_gradients(lambda: (x[1, idx] ** 2).sum(), [x]) < TOL
        assert check_gradients(lambda: (x.mean(axis=(0, 2)) ** 2).sum() + x.sum(axis=1, keepdims=True).mean(),
                               [x]) < TOL

    def test_concat_stack(self, rng):
        a, b = param(rng, 2, 3), param(rng, 2, 2)
        assert check_gradients(lambda: (lc.concat([a, b], axis=1) ** 2).sum(), [a, b]) < TOL
        c = param(rng, 2, 3)
        assert check_gradients(lambda: (lc.stack([a, c], axis=1) ** 3).sum(), [a, c]) < TOL

    def test_log_softmax_and_cross_entropy(self, rng):
        z = param(rng, 6, 4, low=-3, high=3)
        y = rng.integers(0, 4, size=6)
        assert check_gradients(lambda: lc.cross_entropy(z, y), [z]) < TOL
        w = rng.uniform(0.5, 2, size=6)
        assert check_gradients(lambda: lc.cross_entropy(z, y, weights=w), [z]) < TOL
        assert check_gradients(lambda: -(lc.log_softmax(z)[np.arange(6), y]).mean(), [z]) < TOL

    def test_cross_entropy_matches_log_softmax(self, rng):
        z = Tensor(rng.normal(size=(5, 3)))
        y = rng.integers(0, 3, size=5)
        ce = lc.cross_entropy(z, y).item()
        ref = -np.mean(lc.log_softmax(z).data[np.arange(5), y])
        assert ce == pytest.approx(ref, rel=1e-12)

    def test_dense_relu_ce_graph(self, rng):
        layer1, layer2 = lc.Dense(5, 7, rng), lc.Dense(7, 3, rng)
        x = Tensor(rng.normal(size=(8, 5)))
        y = rng.integers(0, 3, size=8)
        params = layer1.parameters() + layer2.parameters()
        # nudge biases off zero so no relu sits at its kink
        for p in params:
            p.data += rng.uniform(-0.05, 0.05, size=p.shape)
        assert check_gradients(lambda: lc.cross_entropy(layer2(layer1(x).relu()), y), params) < TOL

    def test_linear_graph_is_exact(self, rng):
        a, x = param(rng, 3, 3), Tensor(rng.normal(size=(3,)))
        coef = rng.normal(size=3)
        assert check_gradients(lambda: ((a @ x) * coef).sum(), [a]) < 1e-10

    def test_conv1d(self, rng):
        x, w, b = param(rng, 2, 3, 9), param(rng, 4, 3, 5), param(rng, 4)
        assert check_gradients(lambda: (lc.conv1d(x, w, b, padding=2) ** 2).sum(), [x, w, b]) < TOL
        assert check_gradients(lambda: (lc.conv1d(x, w) ** 2).sum(), [x, w]) < TOL

    def test_conv1d_against_loop(self, rng):
        x, w = rng.normal(size=(2, 3, 7)), rng.normal(size=(4, 3, 3))
        out = lc.conv1d(Tensor(x), Tensor(w), padding=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1)))
        ref = np.zeros((2, 4, 7))
        for bi in range(2):
            for o in range(4):
                for t in range(7):
                    ref[bi, o, t] = np.sum(xp[bi, :, t:t + 3] * w[o])
        np.testing.assert_allclose(out, ref, atol=1e-12)

    def test_dropout_frozen_mask(self, rng):
        x = param(rng, 4, 6)
        mask = rng.random((4, 6)) >= 0.3
        assert check_gradients(lambda: (lc.dropout(x, 0.3, mask=mask) ** 2).sum(), [x]) < TOL

    def test_l2_normalize(self, rng):
        x = param(rng, 4, 3)
        assert check_gradients(lambda: (lc.l2_normalize(x) * np.arange(3)).sum(), [x]) < TOL

    def test_mmd(self, rng):
        a, b = param(rng, 5, 3), param(rng, 4, 3)
        assert check_gradients(lambda: lc.mmd(a, b), [a, b]) < TOL

    def test_supcon(self, rng):
        e = param(rng, 6, 4)
        y = np.array([0, 1, 0, 1, 2, 2])
        assert check_gradients(lambda: lc.supcon_loss(e, y, temperature=0.5), [e]) < TOL

    def test_uncertainty(self, rng):
        s = param(rng, 2)
        l1, l2 = param(rng, 1, low=0.5, high=2), param(rng, 1, low=0.5, high=2)
        assert check_gradients(lambda: lc.uncertainty_loss([l1.sum(), l2.sum()], s), [s, l1, l2]) < TOL

    def test_grl_branch(self, rng):
        w, v = param(rng, 3, 4), param(rng, 4, 2)
        x = Tensor(rng.normal(size=(5, 3)))

        def plain():
            return ((x @ w).tanh() @ v).sum()

        def reversed_():
            return (lc.grl((x @ w).tanh(), 0.7) @ v).sum()

        assert check_gradients(reversed_, [v]) < TOL
        w.grad = None
        plain().backward()
        g_plain = w.grad.copy()
        w.grad = None
        reversed_().backward()
        np.testing.assert_allclose(w.grad, -0.7 * g_plain, rtol=1e-12)
        # the numeric gradient of the un-reversed graph is what GRL negates
        num = lc.numeric_gradient(plain, w)
        assert lc.relative_error(w.grad, -0.7 * num).max() < TOL


class TestGRL:
    def test_forward_identity(self, rng):
        x = Tensor(rng.normal(size=(3, 2)))
        for lam in (0.0, 0.3, 5.0):
            np.testing.assert_array_equal(lc.grl(x, lam).data, x.data)

    def test_backward_exact(self, rng):
        x = param(rng, 3, 2)
        g = rng.normal(size=(3, 2))
        lc.grl(x, 1.0).backward(g)
        np.testing.assert_array_equal(x.grad, -g)
        x.grad = None
        lc.grl(x, 0.0).backward(g)
        assert np.all(x.grad == 0)

    def test_negative_lambda(self, rng):
        with pytest.raises(ValueError):
            lc.grl(param(rng, 2), -0.1)

    def test_schedule(self):
        assert lc.grl_schedule(0.0) == 0.0
        assert lc.grl_schedule(1.0) == pytest.approx(2 / (1 + math.exp(-10)) - 1)
        assert lc.grl_schedule(1.0) == pytest.approx(0.99991, abs=1e-5)
        assert lc.grl_schedule(0.5) == pytest.approx(0.98661, abs=1e-5)
        ps = np.linspace(0, 1, 101)
        assert np.all(np.diff([lc.grl_schedule(p) for p in ps]) > 0)
        with pytest.raises(ValueError):
            lc.grl_schedule(1.5)


class TestLosses:
    def test_uncertainty_examples(self):
        s = Tensor(np.zeros(2), requires_grad=True)
        assert lc.uncertainty_loss([Tensor(1.5), Tensor(2.0)], s).item() == pytest.approx(3.5)
        L = 2.7
        one = Tensor(np.array([math.log(L)]), requires_grad=True)
        assert lc.uncertainty_loss([Tensor(L)], one).item() == pytest.approx(1 + math.log(L))

    def test_uncertainty_stationarity(self):
        # gradient descent on s alone converges to exp(-s) = 1 / L
        L = 3.2
        s = Tensor(np.array([0.0]), requires_grad=True)
        opt = lc.AdamW([s], lr=0.05, weight_decay=0.0)
        for _ in range(2000):
            opt.zero_grad()
            lc.uncertainty_loss([Tensor(L)], s).backward()
            opt.step()
        assert math.exp(-s.data[0]) == pytest.approx(1 / L, rel=1e-4)
        s.grad = None
        lc.uncertainty_loss([Tensor(L)], Tensor(np.array([math.log(L)]), requires_grad=True)).backward()

    def test_mmd_examples(self, rng):
        x = Tensor(rng.normal(size=(6, 3)))
        assert lc.mmd(x, x).item() == 0.0
        a, b = Tensor([[0.0, 0.0]]), Tensor([[0.3, 0.4]])
        gamma = 2.0
        assert lc.mmd(a, b, (gamma,)).item() == pytest.approx(2 * (1 - math.exp(-gamma * 0.25)))
        y = Tensor(rng.normal(size=(4, 3)) + 1)
        assert lc.mmd(x, y).item() == pytest.approx(lc.mmd(y, x).item(), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    def test_mmd_non_negative(self, na, nb, seed):
        r = np.random.default_rng(seed)
        assert lc.mmd(Tensor(r.normal(size=(na, 2))), Tensor(r.normal(size=(nb, 2)))).item() >= -1e-12

    def test_supcon_identical_embeddings(self):
        for n in (4, 6, 9):
            e = Tensor(np.ones((n, 3)))
            y = np.arange(n) % 2
            assert lc.supcon_loss(e, y, 0.1).item() == pytest.approx(math.log(n - 1))

    def test_supcon_three_term(self):
        e = Tensor([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        loss = lc.supcon_loss(e, [0, 0, 1], temperature=1.0).item()
        assert loss == pytest.approx(-math.log(math.e / (math.e + 1)))

    def test_supcon_permutation(self, rng):
        e = rng.normal(size=(8, 4))
        y = np.array([0, 1, 2, 0, 1, 2, 0, 3])
        perm = rng.permutation(8)
        a = lc.supcon_loss(Tensor(e), y).item()
        b = lc.supcon_loss(Tensor(e[perm]), y[perm]).item()
        assert a == pytest.approx(b, rel=1e-12)
        assert a >= 0

    def test_supcon_degenerate(self):
        with pytest.raises(ValueError, match="degenerate-batch"):
            lc.supcon_loss(Tensor(np.eye(3)), [0, 1, 2])

    def test_softmax_rows(self, rng):
        p = lc.softmax(rng.normal(size=(10, 7)) * 30)
        np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-12)

    def test_perfect_prediction(self):
        z = Tensor(np.array([[800.0, 0.0], [0.0, 800.0]]))
        assert lc.cross_entropy(z, [0, 1]).item() == 0.0


class TestOptimizer:
    def test_zero_grad_only_decays(self, rng):
        p = param(rng, 5)
        before = p.data.copy()
        opt = lc.AdamW([p], lr=1e-3, weight_decay=1e-4)
        p.grad = np.zeros(5)
        opt.step()
        np.testing.assert_allclose(p.data, before - 1e-4 * before * 1e-3, rtol=0, atol=1e-18)

    def test_first_step_size(self, rng):
        p = Tensor(np.zeros(3), requires_grad=True)
        opt = lc.AdamW([p], lr=0.01, weight_decay=0.0)
        p.grad = np.array([0.5, -2.0, 1e-3])
        opt.step()
        # bias-corrected first step is lr * sign(g) for |g| >> eps
        np.testing.assert_allclose(p.data, -0.01 * np.sign(p.grad), rtol=1e-4)

    def test_minimizes_quadratic(self):
        p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        opt = lc.AdamW([p], lr=0.05, weight_decay=0.0)
        for _ in range(1000):
            opt.zero_grad()
            ((p - 1.0) ** 2).sum().backward()
            opt.step()
        np.testing.assert_allclose(p.data, [1.0, 1.0], atol=1e-3)


class TestTensor:
    def test_grad_accumulates_over_shared_nodes(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * x
        (y + y * x).sum().backward()
        # d/dx (x^2 + x^3) = 2x + 3x^2
        assert x.grad[0] == pytest.approx(4 + 12)

    def test_nonscalar_backward_needs_grad(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2).backward()

    def test_constants_get_no_grad(self):
        x = Tensor(np.ones(3), requires_grad=True)
        c = Tensor(np.ones(3))
        (x * c).sum().backward()
        assert c.grad is None and x.grad is not None


class TestModules:
    def test_parameter_order_stable(self, rng):
        class Net(lc.Module):
            def __init__(self, r):
                self.conv = lc.Conv1d(2, 3, 3, r)
                self.heads = [lc.Dense(3, 2, r), lc.Dense(3, 4, r)]

        names = [n for n, _ in Net(rng).named_parameters()]
        assert names == ["conv.w", "conv.b", "heads.0.w", "heads.0.b", "heads.1.w", "heads.1.b"]

    def test_dropout_eval_identity(self, rng):
        d = lc.Dropout(0.5, rng)
        x = Tensor(np.ones((3, 3)))
        assert d.eval()(x) is x
        out = d.train()(x).data
        assert set(np.unique(out)) <= {0.0, 2.0}


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        arrays = {"a": rng.normal(size=(3, 4)), "b": np.arange(5.0), "s": np.array(2.5)}
        state = {"epoch": 3, "seed": 11}
        path = tmp_path / "m.ckpt"
        checkpoint.save(path, arrays, state)
        back, st_ = checkpoint.load(path)
        assert st_ == state
        for k in arrays:
            np.testing.assert_array_equal(back[k], arrays[k])

    def test_bytes_deterministic(self, rng):
        arrays = {"w": rng.normal(size=(2, 2))}
        assert checkpoint.dumps(arrays, {"x": 1, "y": 2}) == checkpoint.dumps(arrays, {"y": 2, "x": 1})

    def test_bad_input(self):
        with pytest.raises(ValueError):
            checkpoint.loads(b"nope" * 4)
        blob = checkpoint.dumps({"w": np.ones(10)})
        with pytest.raises(ValueError):
            checkpoint.loads(blob[:-8])
