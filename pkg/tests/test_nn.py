import numpy as np
import pytest

from vodu_alloc.errors import DomainError, NumericError, StateError
from vodu_alloc.nn import (
    Adam,
    DenseNet,
    finite_diff_check,
    load_checkpoint,
    quadratic_loss,
    save_checkpoint,
)


def fixed_net(weight, bias=0.0):
    net = DenseNet(1, (), 1)
    net.params = [np.array([[weight]]), np.array([bias])]
    return net


class TestForward:
    def test_zero_params(self):
        net = DenseNet(4, (8, 8), 3, seed=1)
        net.params = [np.zeros_like(p) for p in net.params]
        assert np.all(net(np.ones(4)) == 0)

    def test_single_affine(self):
        assert fixed_net(2.0)(np.array([3.0]))[0] == 6.0

    def test_hidden_permutation_invariance(self):
        net = DenseNet(3, (5,), 2, seed=4)
        x = np.random.default_rng(0).normal(size=(6, 3))
        out = net(x)
        perm = [4, 0, 2, 1, 3]
        net.params[0] = net.params[0][:, perm]
        net.params[1] = net.params[1][perm]
        net.params[2] = net.params[2][perm, :]
        np.testing.assert_allclose(net(x), out, rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            DenseNet(3, (4,), 2)(np.ones(4))

    def test_empty_layer_rejected(self):
        with pytest.raises(DomainError):
            DenseNet(3, (0,), 2)

    def test_seeded_init(self):
        a, b = DenseNet(5, (7,), 2, seed=3), DenseNet(5, (7,), 2, seed=3)
        assert all(np.array_equal(p, q) for p, q in zip(a.params, b.params))
        bound = 1 / np.sqrt(5)
        assert np.all(np.abs(a.params[0]) <= bound)
        assert np.all(a.params[1] == 0)


class TestBackward:
    def test_linear(self):
        net = fixed_net(1.5)
        out, cache = net.forward(np.array([3.0]))
        grads, gin = net.backward(cache, np.array([1.0]))
        assert grads[0][0, 0] == 3.0
        assert gin[0] == 1.5

    def test_shared_parameter_product_rule(self):
        # f = w * (w * x) at x = 1: chain two copies of the same weight
        w = 3.0
        net = DenseNet(1, (1,), 1)
        net.params = [np.array([[w]]), np.zeros(1), np.array([[w]]), np.zeros(1)]
        _, cache = net.forward(np.array([1e-8]))  # tanh is linear near 0
        grads, _ = net.backward(cache, np.array([1.0]))
        # df/dw summed over both uses, scaled back by x
        total = (grads[0][0, 0] + grads[2][0, 0]) / 1e-8
        assert total == pytest.approx(2 * w, rel=1e-6)

    def test_stale_cache(self):
        net = DenseNet(2, (3,), 1)
        _, cache = net.forward(np.ones(2))
        net.touch()
        with pytest.raises(StateError):
            net.backward(cache, np.ones(1))

    def test_random_net_against_finite_differences(self):
        rng = np.random.default_rng(7)
        net = DenseNet(5, (17,), 3, seed=7)
        loss_fn, grad_fn = quadratic_loss(rng.normal(size=(4, 3)))
        report = finite_diff_check(net, rng.normal(size=(4, 5)), loss_fn, grad_fn)
        assert report.passed, report.max_rel_error

    def test_corrupted_gradient_fails(self):
        rng = np.random.default_rng(1)
        net = DenseNet(3, (6,), 2, seed=1)
        x = rng.normal(size=(5, 3))
        loss_fn, grad_fn = quadratic_loss(rng.normal(size=(5, 2)))
        out, cache = net.forward(x)
        grads, _ = net.backward(cache, grad_fn(out))
        grads[0] = grads[0].copy()
        grads[0][1, 2] *= 2
        assert not finite_diff_check(net, x, loss_fn, grad_fn, grads=grads).passed

    @pytest.mark.parametrize("width", [16, 64])
    def test_sweep_widths(self, width):
        rng = np.random.default_rng(width)
        net = DenseNet(8, (width, width), 4, seed=width)
        loss_fn, grad_fn = quadratic_loss(rng.normal(size=(3, 4)))
        assert finite_diff_check(net, rng.normal(size=(3, 8)), loss_fn, grad_fn).passed


class TestAdam:
    def test_first_step(self):
        net = fixed_net(0.5)
        Adam(net, lr=1e-3).step([np.array([[1.0]]), np.array([0.0])])
        assert net.params[0][0, 0] == pytest.approx(0.5 - 1e-3, rel=1e-9)
        assert net.params[1][0] == 0.0

    def test_zero_gradient_is_noop(self):
        net = DenseNet(3, (4,), 2, seed=2)
        before = [p.copy() for p in net.params]
        opt = Adam(net)
        for _ in range(3):
            opt.step([np.zeros_like(p) for p in net.params])
        assert all(np.array_equal(p, q) for p, q in zip(before, net.params))
        assert opt.t == 3

    def test_nan_aborts(self):
        net = DenseNet(2, (2,), 1)
        before = [p.copy() for p in net.params]
        grads = [np.zeros_like(p) for p in net.params]
        grads[0][0, 0] = np.nan
        opt = Adam(net)
        with pytest.raises(NumericError):
            opt.step(grads)
        assert opt.t == 0
        assert all(np.array_equal(p, q) for p, q in zip(before, net.params))

    def test_bit_identical_twins(self):
        nets = [DenseNet(4, (5,), 2, seed=9) for _ in range(2)]
        opts = [Adam(n, lr=1e-2) for n in nets]
        rng = np.random.default_rng(0)
        for _ in range(100):
            g = [rng.normal(size=p.shape) for p in nets[0].params]
            for opt in opts:
                opt.step([x.copy() for x in g])
        assert all(np.array_equal(p, q) for p, q in zip(nets[0].params, nets[1].params))

    def test_second_moments_nonnegative(self):
        net = DenseNet(3, (3,), 1)
        opt = Adam(net)
        rng = np.random.default_rng(1)
        for _ in range(10):
            opt.step([rng.normal(size=p.shape) for p in net.params])
        assert all(np.all(v >= 0) for v in opt.v)

    def test_grad_norm_clip(self):
        net = fixed_net(0.0)
        opt = Adam(net, lr=1.0, max_grad_norm=1e-3)
        opt.step([np.array([[100.0]]), np.array([0.0])])
        assert np.isfinite(net.params[0]).all()


def test_checkpoint_round_trip(tmp_path):
    net = DenseNet(4, (6,), 3, seed=5)
    opt = Adam(net, lr=3e-4)
    rng = np.random.default_rng(0)
    for _ in range(3):
        opt.step([rng.normal(size=p.shape) for p in net.params])
    path = tmp_path / "ck.json"
    save_checkpoint(path, {"actor": net}, {"actor": opt}, meta={"algo": "ppo"})
    nets, opts, meta = load_checkpoint(path)
    assert meta == {"algo": "ppo"}
    loaded = nets["actor"]
    assert all(np.array_equal(p, q) for p, q in zip(net.params, loaded.params))
    restored = Adam(loaded)
    restored.load_state_dict(opts["actor"])
    assert restored.t == 3
    x = rng.normal(size=(2, 4))
    assert np.array_equal(net(x), loaded(x))


def test_checkpoint_rejects_foreign(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other", "version": 1}')
    with pytest.raises(DomainError):
        load_checkpoint(path)
