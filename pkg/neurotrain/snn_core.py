# encoding: utf-8
"""
Discrete-time leaky integrate-and-fire dynamics.

Membrane update (the convention every trainer and test relies on)::

    U[t] = beta * (U[t-1] - r[t-1]) + I[t]
    S[t] = 1 if U[t] >= threshold else 0
    r[t] = threshold * S[t]      (subtract mode)
    r[t] = U[t] * S[t]           (zero mode)

so the reset from step t-1 is applied before the leak. Written as
``U[t] = beta*U[t-1] + I[t] - reset_term`` the reset term is ``beta * r[t-1]``.
The stored membrane is the pre-reset value compared against the threshold.
"""

from dataclasses import dataclass, replace
import logging
import math

import numpy as np
from scipy.special import expit

from neurotrain.errors import ArgumentError, ConfigError, DimensionError
from neurotrain.tensor_core import check_finite, matmul, result_dtype

logger = logging.getLogger(__name__)

RESET_MODES = ("subtract", "zero")
SURROGATE_KINDS = ("fast_sigmoid", "rectangular", "arctan", "sigmoid")


@dataclass(frozen=True)
class LifParams():
    """
    LIF neuron constants.

    :param beta:  membrane decay per step, 0 <= beta < 1.
    :param threshold:  firing threshold, > 0.
    :param reset_mode:  "subtract" or "zero".
    :param learnable_beta:  reserved; must stay False.
    """
    beta: float = 0.9
    threshold: float = 1.0
    reset_mode: str = "subtract"
    learnable_beta: bool = False

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1), got {}".format(self.beta), "lif.beta")
        if not self.threshold > 0.0:
            raise ConfigError("threshold must be > 0, got {}".format(self.threshold), "lif.threshold")
        if self.reset_mode not in RESET_MODES:
            raise ConfigError("reset_mode must be one of {}, got '{}'".format(RESET_MODES, self.reset_mode),
                              "lif.reset_mode")
        if self.learnable_beta:
            raise ConfigError("learnable beta is not supported", "lif.learnable_beta")

    def to_dict(self):
        return {"beta": self.beta, "threshold": self.threshold, "reset_mode": self.reset_mode}


@dataclass(frozen=True)
class NeuronState():
    """
    Per-layer state at one timestep.

    membrane and spikes are [batch x units...]; presyn_trace has the shape of
    the layer input; adaptive_offset is per unit and only used by the
    unsupervised STDP layer.
    """
    membrane: np.ndarray
    spikes: np.ndarray
    presyn_trace: np.ndarray = None
    adaptive_offset: np.ndarray = None

    @classmethod
    def zeros(cls, batch, units, input_shape=None, dtype=np.float32):
        units = tuple(np.atleast_1d(units))
        membrane = np.zeros((batch,) + units, dtype=dtype)
        trace = None
        if input_shape is not None:
            trace = np.zeros((batch,) + tuple(np.atleast_1d(input_shape)), dtype=dtype)
        return cls(membrane=membrane, spikes=np.zeros_like(membrane), presyn_trace=trace)


@dataclass(frozen=True)
class SurrogateFn():
    """
    Bounded stand-in for dS/dU used in backward passes.

    Every kind peaks at v = 0 with value ``scale`` and is symmetric in v:

    * fast_sigmoid:  scale / (1 + scale*|v|)**2
    * rectangular:   scale where |v| < 1/(2*scale), else 0
    * arctan:        scale / (1 + (pi*scale*v)**2)
    * sigmoid:       4*scale*s*(1-s) with s = logistic(4*scale*v)
    """
    kind: str = "fast_sigmoid"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ConfigError("surrogate kind must be one of {}, got '{}'".format(SURROGATE_KINDS, self.kind),
                              "surrogate")
        if not self.scale > 0:
            raise ConfigError("surrogate scale must be > 0, got {}".format(self.scale), "surrogate_scale")

    @property
    def width(self):
        """Half-width of the rectangular window."""
        return 0.5 / self.scale


DEFAULT_SURROGATE = SurrogateFn("fast_sigmoid", 1.0)


def surrogate_grad(fn, v):
    """
    Elementwise surrogate derivative sigma'(v).

    :param fn:  SurrogateFn.
    :param v:  membrane minus threshold.
    """
    v = np.asarray(v)
    dtype = result_dtype(v)
    k = fn.scale
    if fn.kind == "fast_sigmoid":
        out = k / (1.0 + k * np.abs(v)) ** 2
    elif fn.kind == "rectangular":
        out = np.where(np.abs(v) < fn.width, k, 0.0)
    elif fn.kind == "arctan":
        out = k / (1.0 + (math.pi * k * v) ** 2)
    else:
        s = expit(4.0 * k * v)
        out = 4.0 * k * s * (1.0 - s)
    return np.asarray(out, dtype=dtype)


def surrogate_primitive(fn, v):
    """
    Antiderivative of surrogate_grad, used as the smooth spike in smooth mode.

    Each primitive is 1/2 at v = 0. All but fast_sigmoid go from 0 to 1;
    fast_sigmoid spans (-1/2, 3/2) because its derivative integrates to 2.
    """
    v = np.asarray(v)
    dtype = result_dtype(v)
    k = fn.scale
    if fn.kind == "fast_sigmoid":
        out = 0.5 + k * v / (1.0 + k * np.abs(v))
    elif fn.kind == "rectangular":
        out = np.clip(k * v + 0.5, 0.0, 1.0)
    elif fn.kind == "arctan":
        out = 0.5 + np.arctan(math.pi * k * v) / math.pi
    else:
        out = expit(4.0 * k * v)
    return np.asarray(out, dtype=dtype)


def reset_amount(params, state, threshold=None):
    """r[t-1] of the module docstring for the previous state."""
    if params.reset_mode == "subtract":
        thr = params.threshold if threshold is None else threshold
        return thr * state.spikes
    return state.membrane * state.spikes


def effective_threshold(params, state):
    if state.adaptive_offset is None:
        return params.threshold
    return params.threshold + state.adaptive_offset


def lif_step(params, state, input_current, smooth=None):
    """
    Advance one LIF layer by one timestep.

    :param params:  LifParams.
    :param state:  NeuronState at t-1.
    :param input_current:  I[t], same shape as state.membrane.
    :param smooth:  optional SurrogateFn; when given, spikes are the surrogate
            primitive of U - threshold instead of a hard step.
    :return:  NeuronState at t (presyn_trace and adaptive_offset carried over).
    :raises DimensionError:  if input and state shapes differ.
    :raises NumericError:  if the input is not finite.
    """
    input_current = np.asarray(input_current)
    if input_current.shape != state.membrane.shape:
        raise DimensionError("input current {} does not match membrane {}".format(
            input_current.shape, state.membrane.shape))
    check_finite(input_current, "input current")
    threshold = effective_threshold(params, state)
    membrane = params.beta * (state.membrane - reset_amount(params, state, threshold)) + input_current
    membrane = membrane.astype(result_dtype(state.membrane, input_current), copy=False)
    if smooth is None:
        spikes = (membrane >= threshold).astype(membrane.dtype)
    else:
        spikes = surrogate_primitive(smooth, membrane - threshold).astype(membrane.dtype)
    return replace(state, membrane=membrane, spikes=spikes)


def update_presyn_trace(state, input_spikes, decay):
    """
    Low-pass filter the layer input: x[t] = decay * x[t-1] + input[t].

    :raises ArgumentError:  if decay is outside [0, 1).
    """
    if not 0.0 <= decay < 1.0:
        raise ArgumentError("trace decay must lie in [0, 1), got {}".format(decay))
    input_spikes = np.asarray(input_spikes)
    if state.presyn_trace is None:
        trace = input_spikes.astype(result_dtype(input_spikes), copy=True)
    else:
        if state.presyn_trace.shape != input_spikes.shape:
            raise DimensionError("trace {} does not match input {}".format(
                state.presyn_trace.shape, input_spikes.shape))
        trace = decay * state.presyn_trace + input_spikes
    return replace(state, presyn_trace=trace.astype(result_dtype(input_spikes), copy=False))


def synaptic_current(weights, inputs, recurrent=None, prev_spikes=None):
    """I[t] = inputs x weights^T (+ prev_spikes x recurrent^T)."""
    inputs = np.asarray(inputs)
    if weights.shape[1] != inputs.shape[-1]:
        raise DimensionError("weights expect {} inputs, got {}".format(weights.shape[1], inputs.shape[-1]))
    current = matmul(inputs, weights.T)
    if recurrent is not None and prev_spikes is not None:
        current = current + matmul(prev_spikes, recurrent.T)
    return current


def layer_forward(weights, params, state, input, recurrent=None, smooth=None):
    """
    One fully connected LIF layer step: input current from weights, then lif_step.

    :param weights:  [units x inputs].
    :param input:  [batch x inputs].
    :param recurrent:  optional [units x units]; fed with the layer's own spikes from t-1.
    """
    current = synaptic_current(weights, input, recurrent, state.spikes)
    return lif_step(params, state, current, smooth=smooth)
