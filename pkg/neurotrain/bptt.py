# encoding: utf-8
"""
Backpropagation through time for LIF layer stacks.

The backward pass walks a :class:`~neurotrain.models.Tape` from the last
timestep to the first and, within a step, from the output layer down. The
spike nonlinearity is replaced by a surrogate derivative evaluated at the
pre-reset membrane minus the threshold. The membrane-to-membrane path carries
a factor beta; the reset path is detached unless detach_reset=False.
"""

from collections import OrderedDict
import logging

import numpy as np
from scipy.special import log_softmax, softmax

from neurotrain.errors import ArgumentError, DimensionError, RangeError
from neurotrain.models import (Tape, TapeEntry, cross_correlate_backward,
        max_pool_backward)
from neurotrain.snn_core import DEFAULT_SURROGATE, surrogate_grad
from neurotrain.tensor_core import check_finite, matmul, one_hot, reduce, result_dtype

logger = logging.getLogger(__name__)

LOSSES = ("rate_mse", "count_crossentropy")

__all__ = ["Tape", "TapeEntry", "GradSet", "backward", "loss_and_grad", "instantaneous_error",
           "layer_param_grads", "LOSSES"]


class GradSet(OrderedDict):
    """Parameter name -> gradient, shape-matched to Model.params."""

    @classmethod
    def zeros_like(cls, model):
        return cls((name, np.zeros_like(value)) for name, value in model.params.items())

    def scaled(self, factor):
        return GradSet((name, factor * value) for name, value in self.items())

    def add(self, other):
        for name, value in other.items():
            self[name] += value
        return self


def _check_targets(targets, n_classes, batch):
    targets = np.asarray(targets)
    if targets.ndim != 1 or targets.shape[0] != batch:
        raise DimensionError("targets must be [batch={}], got shape {}".format(batch, targets.shape))
    if targets.size and (targets.min() < 0 or targets.max() >= n_classes):
        raise RangeError("class index outside [0, {})".format(n_classes))
    return targets.astype(np.int64)


def loss_and_grad(output_record, targets, loss="rate_mse"):
    """
    Readout loss over an output spike record and its gradient per timestep.

    rate_mse:  mean over batch and outputs of (rate - onehot)**2, rate the time
            averaged spike count; dL/dS[t] = 2(rate - onehot)/(T*batch*out).
    count_crossentropy:  mean cross entropy of softmax(spike counts);
            dL/dS[t] = (softmax - onehot)/batch for every t.

    :param output_record:  [T x batch x out].
    :param targets:  class indices [batch].
    :return:  (loss, grad [T x batch x out]).
    :raises RangeError:  if a class index is out of range.
    """
    output_record = np.asarray(output_record)
    if output_record.ndim != 3:
        raise DimensionError("output record must be [T x batch x out], got {}".format(output_record.shape))
    T, batch, out = output_record.shape
    targets = _check_targets(targets, out, batch)
    if T == 0 or batch == 0:
        raise ArgumentError("loss needs at least one timestep and one sample")
    dtype = result_dtype(output_record)
    y = one_hot(targets, out, dtype=np.float64)
    if loss == "rate_mse":
        rate = reduce(output_record.astype(np.float64), 0, "mean")
        diff = rate - y
        value = float(np.mean(diff ** 2))
        step_grad = 2.0 * diff / (T * batch * out)
    elif loss == "count_crossentropy":
        counts = reduce(output_record.astype(np.float64), 0, "sum")
        value = float(-np.mean(log_softmax(counts, axis=1)[np.arange(batch), targets]))
        step_grad = (softmax(counts, axis=1) - y) / batch
    else:
        raise ArgumentError("unknown loss '{}', expected one of {}".format(loss, LOSSES))
    grad = np.broadcast_to(step_grad, (T, batch, out)).astype(dtype)
    return value, grad


def instantaneous_error(spikes_t, targets, T):
    """
    Time-local rate-MSE error at one step: 2(S[t] - onehot)/(T*batch*out).

    Summed over all T steps this equals the rate_mse gradient summed over t.
    """
    spikes_t = np.asarray(spikes_t)
    batch, out = spikes_t.shape
    targets = _check_targets(targets, out, batch)
    y = one_hot(targets, out, dtype=result_dtype(spikes_t))
    return (2.0 * (spikes_t - y) / (T * batch * out)).astype(result_dtype(spikes_t))


def layer_param_grads(model, layer, d_current, inputs, prev_spikes=None, pool_index=None):
    """
    Parameter gradients and input gradient of one layer at one step.

    :param d_current:  dL/dI for the layer (pooled shape for conv layers).
    :param inputs:  layer input used for the weight gradient (spikes or a trace).
    :param prev_spikes:  S[t-1] (or its trace) for the recurrent weight gradient.
    :return:  (dict of parameter gradients, dL/d input).
    """
    weights = model.params[layer.weight]
    grads = {}
    if layer.kind == "conv":
        d_pre = max_pool_backward(d_current, pool_index, layer.prepool_shape, model.spec.conv_spec.pool)
        d_input, grads[layer.weight] = cross_correlate_backward(d_pre, inputs, weights)
    else:
        grads[layer.weight] = matmul(d_current.T, inputs)
        d_input = matmul(d_current, weights)
        if layer.recurrent and prev_spikes is not None:
            grads[layer.recurrent] = matmul(d_current.T, prev_spikes)
    return grads, d_input


def backward(model, tape, loss_grad_per_t, surrogate=DEFAULT_SURROGATE, detach_reset=True):
    """
    Reverse-mode gradient of the recorded forward pass.

    :param model:  the Model the tape was recorded from, unchanged since.
    :param tape:  Tape of a recording forward.
    :param loss_grad_per_t:  dL/dS_out[t], [T x batch x out].
    :param surrogate:  SurrogateFn replacing dS/dU.
    :param detach_reset:  treat the reset term as a constant.
    :return:  GradSet.
    :raises TapeError:  if the tape does not belong to the model.
    """
    tape.check(model)
    loss_grad_per_t = np.asarray(loss_grad_per_t)
    T = tape.timesteps
    if T == 0:
        return GradSet.zeros_like(model)
    batch = tape.entry(0, 0).spikes.shape[0]
    expected = (T, batch, model.spec.output_size)
    if loss_grad_per_t.shape != expected:
        raise DimensionError("loss gradient has shape {}, expected {}".format(loss_grad_per_t.shape, expected))

    lif = model.lif
    grads = GradSet.zeros_like(model)
    n_layers = len(model.layers)
    d_membrane_next = [None] * n_layers
    d_spikes_carry = [None] * n_layers

    for t in reversed(range(T)):
        d_above = loss_grad_per_t[t]
        for layer in reversed(model.layers):
            entry = tape.entry(t, layer.index)
            d_spikes = d_above.reshape(entry.spikes.shape)
            if d_spikes_carry[layer.index] is not None:
                d_spikes = d_spikes + d_spikes_carry[layer.index]
            d_next = d_membrane_next[layer.index]
            if d_next is None:
                d_direct = 0.0
            else:
                d_direct = lif.beta * d_next
                if not detach_reset:
                    if lif.reset_mode == "subtract":
                        d_spikes = d_spikes - lif.beta * lif.threshold * d_next
                    else:
                        d_spikes = d_spikes - lif.beta * entry.membrane * d_next
                        d_direct = d_direct * (1.0 - entry.spikes)
            sg = surrogate_grad(surrogate, entry.membrane - lif.threshold)
            d_membrane = d_spikes * sg + d_direct
            d_membrane_next[layer.index] = d_membrane

            prev_spikes = None
            if layer.recurrent:
                prev_spikes = tape.entry(t - 1, layer.index).spikes if t > 0 else np.zeros_like(entry.spikes)
            layer_grads, d_input = layer_param_grads(model, layer, d_membrane, entry.inputs,
                                                     prev_spikes, entry.pool_index)
            for name, value in layer_grads.items():
                grads[name] += value
            if layer.recurrent:
                d_spikes_carry[layer.index] = matmul(d_membrane, model.params[layer.recurrent])
            if layer.index > 0:
                d_above = d_input.reshape(d_input.shape[0], -1)
    for name, value in grads.items():
        check_finite(value, "gradient of {}".format(name))
    return grads


