import numpy as np
import pytest

from dimosr import autodiff as ad
from dimosr.autodiff import GradientTape, Tensor, backward, grad_check
from dimosr.errors import ContractError, DimosrError


def test_sum_gradient_is_ones():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4, 4)))
    backward(ad.total(x))
    assert np.array_equal(x.grad, np.ones_like(x.data))


def test_silu_gradient_at_zero():
    x = Tensor(np.zeros((1, 2, 3, 3)))
    backward(ad.total(ad.silu(x)))
    np.testing.assert_allclose(x.grad, 0.5)


def test_loss_self_gradient_is_one():
    x = Tensor(np.ones((1, 1, 2, 2)))
    loss = ad.mean(x)
    backward(loss)
    assert float(loss.grad) == 1.0


def test_fanout_accumulates():
    x = Tensor(np.full((1, 1, 2, 2), 3.0))
    backward(ad.total(ad.mul(x, x)))  # d/dx sum(x*x) = 2x
    np.testing.assert_allclose(x.grad, 6.0)


def test_sum_of_squares_gradcheck_tight():
    x = np.random.default_rng(1).normal(size=(2, 3, 3, 3))
    report = grad_check(lambda t: ad.total(ad.mul(t, t)), x, tol=1e-6)
    assert report.passed, str(report)


def test_conv_dilation4_gradcheck():
    rng = np.random.default_rng(2)
    w = rng.uniform(-0.3, 0.3, (3, 2, 3, 3))
    m = rng.normal(size=(1, 3, 6, 6))

    def f(t):
        return ad.total(ad.mul(ad.conv2d(t, Tensor(w), None, dilation=4, padding=4), Tensor(m)))

    report = grad_check(f, rng.normal(size=(1, 2, 6, 6)), tol=1e-4)
    assert report.passed, str(report)


def test_layer_norm_constant_input_flagged_degenerate():
    # beyond the eps floor the zero-variance site is a genuine singularity:
    # finite differences stop converging and the probes are excluded
    rng = np.random.default_rng(3)
    gain = rng.uniform(0.5, 1.5, 4)
    shift = rng.normal(size=4)
    m = rng.normal(size=(1, 4, 2, 2))

    def f(t):
        return ad.total(ad.mul(ad.layer_norm(t, Tensor(gain), Tensor(shift)), Tensor(m)))

    report = grad_check(f, np.full((1, 4, 2, 2), 0.25), step=1e-2)
    assert report.n_degenerate > 0
    assert report.passed  # excluded, not failed


def test_layer_norm_random_input_gradcheck():
    rng = np.random.default_rng(4)
    gain = rng.uniform(0.5, 1.5, 4)
    shift = rng.normal(size=4)
    m = rng.normal(size=(1, 4, 3, 3))

    def f(t):
        return ad.total(ad.mul(ad.layer_norm(t, Tensor(gain), Tensor(shift)), Tensor(m)))

    report = grad_check(f, rng.normal(size=(1, 4, 3, 3)), tol=1e-4)
    assert report.passed, str(report)


def test_residual_gradient_is_identity_plus_body():
    # d/dx [x + g(x)] = I + dg/dx: the residual add contributes exactly the
    # upstream weights on top of the body gradient
    rng = np.random.default_rng(5)
    w = rng.uniform(-0.5, 0.5, (2, 2, 3, 3))
    m = rng.normal(size=(1, 2, 5, 5))

    def body(t):
        return ad.conv2d(ad.silu(t), Tensor(w), None, dilation=1, padding=1)

    x1 = Tensor(rng.normal(size=(1, 2, 5, 5)))
    backward(ad.total(ad.mul(ad.add(x1, body(x1)), Tensor(m))))
    x2 = Tensor(x1.data.copy())
    backward(ad.total(ad.mul(body(x2), Tensor(m))))
    np.testing.assert_allclose(x1.grad, m + x2.grad, rtol=1e-12, atol=1e-12)


def test_residual_identity_on_actual_blocks():
    from dimosr.model import build_model, dmb_forward, preset_config

    cfg = preset_config("toy", scale=2)
    net = build_model(cfg, seed=0, dtype=np.float64)
    params = {k: v for k, v in net.params.items() if k.startswith("blocks.0.")}
    local = {k[len("blocks.0."):]: v for k, v in params.items()}
    rng = np.random.default_rng(6)
    m = rng.normal(size=(1, cfg.channels, 6, 6))

    def run(t):
        tensors = {k: Tensor(v) for k, v in local.items()}
        return dmb_forward(t, tensors, cfg)

    x1 = Tensor(rng.normal(size=(1, cfg.channels, 6, 6)))
    backward(ad.total(ad.mul(run(x1), Tensor(m))))
    x2 = Tensor(x1.data.copy())
    backward(ad.total(ad.mul(ad.sub(run(x2), x2), Tensor(m))))
    np.testing.assert_allclose(x1.grad, m + x2.grad, rtol=1e-10, atol=1e-10)


def test_unreachable_parameter_gets_zero_gradient():
    tape = GradientTape()
    used = tape.parameter("used", np.ones((1, 1, 2, 2)))
    unused = tape.parameter("unused", np.ones((1, 1, 3, 3)))
    grads = tape.gradients(ad.total(used))
    assert np.array_equal(grads["used"], np.ones((1, 1, 2, 2)))
    assert np.array_equal(grads["unused"], np.zeros((1, 1, 3, 3)))
    assert unused.grad is None


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones((1, 1, 2, 2)))
    with pytest.raises(ContractError, match="scalar"):
        backward(ad.silu(x))


def test_duplicate_parameter_name_rejected():
    tape = GradientTape()
    tape.parameter("p", np.ones(1))
    with pytest.raises(ContractError, match="twice"):
        tape.parameter("p", np.ones(1))


def test_cycle_detection():
    a = Tensor(np.ones(()))
    b = ad.scale(a, 2.0)
    a._parents = (b,)  # corrupt the graph into a loop
    a._vjp = lambda g: (g,)
    with pytest.raises(DimosrError, match="cycle"):
        backward(ad.total(b))


def test_backward_deterministic():
    rng = np.random.default_rng(7)
    x_data = rng.normal(size=(1, 4, 4, 4))
    w = rng.uniform(-0.5, 0.5, (4, 4, 3, 3))

    def run():
        x = Tensor(x_data.copy())
        h = ad.conv2d(ad.silu(x), Tensor(w), None, dilation=1, padding=1)
        backward(ad.mean(ad.absolute(ad.add(h, x))))
        return x.grad

    assert np.array_equal(run(), run())


def test_no_grad_skips_recording():
    with ad.no_grad():
        x = Tensor(np.ones((1, 1, 2, 2)))
        y = ad.silu(x)
    assert y._parents == ()
    assert y._vjp is None


def test_grad_check_sampled_indices():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 2, 4, 4))
    report = grad_check(lambda t: ad.mean(ad.mul(t, t)), x,
                        indices=[(0, 0, 0, 0), (1, 1, 3, 3)])
    assert report.n_checked + report.n_degenerate == 2
    assert report.passed
