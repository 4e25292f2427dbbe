import numpy as np
from numpy.testing import assert_allclose
import pytest

from neurotrain.bptt import GradSet, backward, instantaneous_error, loss_and_grad
from neurotrain.errors import DimensionError, RangeError, TapeError
from neurotrain.models import ConvSpec, ModelSpec, build, forward
from neurotrain.snn_core import LifParams, SurrogateFn
from neurotrain.tensor_core import Rng, rand_bernoulli


SMOOTH = SurrogateFn("sigmoid", 1.0)


def random_spec(seed):
    gen = np.random.default_rng(seed)
    kind = ("fc", "rc", "conv")[seed % 3]
    lif = LifParams(beta=float(gen.uniform(0.5, 0.95)), threshold=float(gen.uniform(0.5, 1.5)),
                    reset_mode=("subtract", "zero")[seed % 2])
    if kind == "conv":
        return ModelSpec("conv", (100, 3), ConvSpec(in_shape=(1, 10, 10), channels=(2, 2), kernel=3), lif=lif)
    hidden = tuple(int(v) for v in gen.integers(3, 7, size=1 + seed % 2))
    return ModelSpec(kind, (5,) + hidden + (3,), lif=lif)


def smooth_loss(model, inputs, targets):
    outputs, _ = forward(model, inputs, record=False, smooth=SMOOTH)
    return loss_and_grad(outputs, targets)[0]


def finite_difference_oracle_test():
    """Surrogate BPTT equals the true gradient of the smooth network."""
    h = 1e-6
    checked = agreed = 0
    for seed in range(21):
        spec = random_spec(seed)
        model = build(spec, Rng(seed), dtype=np.float64)
        for value in model.params.values():
            value *= 3.0
        T, batch = 4 + seed % 3, 2
        inputs = rand_bernoulli(Rng(seed, ("inputs",)), np.full((T, batch, spec.input_size), 0.5), np.float64)
        targets = np.arange(batch) % spec.output_size
        outputs, state = forward(model, inputs, record=True, smooth=SMOOTH)
        _, grad = loss_and_grad(outputs, targets)
        grads = backward(model, state.tape, grad, SMOOTH, detach_reset=False)
        for name, param in model.params.items():
            for idx in np.ndindex(param.shape):
                saved = param[idx]
                param[idx] = saved + h
                plus = smooth_loss(model, inputs, targets)
                param[idx] = saved - h
                minus = smooth_loss(model, inputs, targets)
                param[idx] = saved
                numeric = (plus - minus) / (2 * h)
                checked += 1
                if abs(numeric - grads[name][idx]) <= 1e-3 * max(abs(numeric), 1e-4):
                    agreed += 1
    assert agreed >= 0.99 * checked


def detached_reset_differs_test():
    spec = ModelSpec("fc", (5, 4, 3), lif=LifParams(beta=0.9, threshold=0.5))
    model = build(spec, Rng(0), dtype=np.float64)
    inputs = rand_bernoulli(Rng(1), np.full((6, 2, 5), 0.6), np.float64)
    outputs, state = forward(model, inputs, record=True, smooth=SMOOTH)
    _, grad = loss_and_grad(outputs, [0, 1])
    attached = backward(model, state.tape, grad, SMOOTH, detach_reset=False)
    detached = backward(model, state.tape, grad, SMOOTH, detach_reset=True)
    assert not np.allclose(attached["fc0"], detached["fc0"])


def single_step_output_gradient_test():
    # T = 1, one layer: dL/dW = (2(S - y)/(B*O) * sigma'(U - theta))^T x
    spec = ModelSpec("fc", (3, 2))
    model = build(spec, Rng(0), dtype=np.float64)
    model.params["fc0"][...] = [[0.5, 0.7, 0.0], [0.1, 0.1, 0.1]]
    x = np.array([[[1.0, 1.0, 0.0]]])
    outputs, state = forward(model, x, record=True)
    assert outputs[0, 0].tolist() == [1.0, 0.0]
    _, grad = loss_and_grad(outputs, [1])
    grads = backward(model, state.tape, grad, SurrogateFn("fast_sigmoid", 1.0))
    u = np.array([1.2, 0.2])
    sg = 1.0 / (1.0 + np.abs(u - 1.0)) ** 2
    delta = 2 * (np.array([1.0, 0.0]) - np.array([0.0, 1.0])) / 2 * sg
    assert_allclose(grads["fc0"], np.outer(delta, [1.0, 1.0, 0.0]))


def empty_tape_gives_zero_gradients_test():
    model = build(ModelSpec("fc", (3, 2)), Rng(0))
    _, state = forward(model, np.zeros((0, 1, 3), dtype=np.float32), record=True)
    grads = backward(model, state.tape, np.zeros((0, 1, 2)))
    assert all(not g.any() for g in grads.values())


def tape_from_other_model_test():
    a = build(ModelSpec("fc", (3, 2)), Rng(0))
    b = build(ModelSpec("fc", (3, 4, 2)), Rng(0))
    outputs, state = forward(a, np.ones((2, 1, 3), dtype=np.float32), record=True)
    with pytest.raises(TapeError):
        backward(b, state.tape, np.zeros((2, 1, 2)))
    with pytest.raises(DimensionError):
        backward(a, state.tape, np.zeros((3, 1, 2)))


def loss_and_grad_test():
    outputs = np.zeros((4, 2, 3))
    outputs[:, 0, 1] = 1
    loss, grad = loss_and_grad(outputs, [1, 2])
    assert loss == pytest.approx(1 / 6)
    assert grad.shape == (4, 2, 3)
    assert_allclose(grad[0, 1], 2 * np.array([0, 0, -1]) / (4 * 2 * 3))
    with pytest.raises(RangeError):
        loss_and_grad(outputs, [1, 3])
    with pytest.raises(DimensionError):
        loss_and_grad(outputs, [1])


def count_crossentropy_gradient_test():
    outputs = rand_bernoulli(Rng(0), np.full((5, 3, 4), 0.5), np.float64)
    targets = np.array([0, 3, 1])
    loss, grad = loss_and_grad(outputs, targets, "count_crossentropy")
    assert loss > 0
    # every step carries the same softmax gradient; each row sums to zero
    assert_allclose(grad[0], grad[4])
    assert_allclose(grad[0].sum(axis=1), 0, atol=1e-12)


def instantaneous_error_sums_to_rate_gradient_test():
    outputs = rand_bernoulli(Rng(2), np.full((6, 3, 4), 0.3), np.float64)
    targets = [0, 1, 3]
    _, grad = loss_and_grad(outputs, targets)
    total = sum(instantaneous_error(outputs[t], targets, 6) for t in range(6))
    assert_allclose(total, grad.sum(axis=0))


def grad_set_test():
    model = build(ModelSpec("fc", (3, 2)), Rng(0))
    grads = GradSet.zeros_like(model)
    grads.add(GradSet(fc0=np.ones((2, 3))))
    assert_allclose(grads.scaled(-2.0)["fc0"], -2 * np.ones((2, 3)))
