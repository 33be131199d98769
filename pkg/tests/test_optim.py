import numpy as np
import pytest

from dany.numerics import NumericError, Tensor
from dany.numerics.optim import SGD, Adam, StepDecay


def _param(value=0.0):
    p = Tensor(np.array([value]), requires_grad=True, name="p")
    return p


def test_sgd_plain_step():
    p = _param()
    opt = SGD({"p": p}, lr=0.1, momentum=0.0)
    p.grad = np.array([1.0], dtype=p.data.dtype)
    opt.step()
    np.testing.assert_allclose(p.data, [-0.1], rtol=1e-6)


def test_sgd_momentum_two_steps():
    # v1 = 1.0 -> p = -0.1; v2 = 0.9*1 + 1 = 1.9 -> p = -0.1 - 0.19 = -0.29
    p = _param()
    opt = SGD({"p": p}, lr=0.1, momentum=0.9)
    for _ in range(2):
        p.grad = np.array([1.0], dtype=p.data.dtype)
        opt.step()
    np.testing.assert_allclose(p.data, [-0.29], rtol=1e-5)


def test_adam_single_step():
    # bias-corrected mhat = 1, vhat = 1 -> delta = -lr / (1 + eps)
    p = _param()
    opt = Adam({"p": p}, lr=0.001)
    p.grad = np.array([1.0], dtype=p.data.dtype)
    opt.step()
    np.testing.assert_allclose(p.data, [-0.001], rtol=1e-4)


def test_step_decay_schedule():
    sched = StepDecay(0.005, factor=0.1, every=50)
    assert sched.at(0) == pytest.approx(0.005)
    assert sched.at(49) == pytest.approx(0.005)
    assert sched.at(50) == pytest.approx(0.0005)
    assert sched.at(100) == pytest.approx(5e-5)


def test_non_finite_gradient_names_parameter():
    p = _param()
    opt = SGD({"p": p}, lr=0.1)
    p.grad = np.array([np.nan], dtype=p.data.dtype)
    with pytest.raises(NumericError) as exc:
        opt.step()
    assert "'p'" in str(exc.value)


def test_optimizer_state_roundtrip():
    p1 = _param(1.0)
    opt1 = Adam({"p": p1}, lr=0.01)
    for _ in range(3):
        p1.grad = np.array([0.5], dtype=p1.data.dtype)
        opt1.step()
    saved_param = p1.data.copy()
    state = opt1.state()

    p2 = Tensor(saved_param.copy(), requires_grad=True, name="p")
    opt2 = Adam({"p": p2}, lr=0.01)
    opt2.load_state(state)
    for opt, p in ((opt1, p1), (opt2, p2)):
        p.grad = np.array([0.5], dtype=p.data.dtype)
        opt.step()
    np.testing.assert_array_equal(p1.data, p2.data)
