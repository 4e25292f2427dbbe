# encoding: utf-8
"""
Learning rules behind one Trainer interface.

A trainer observes a batch (input spike trains plus labels or a reward
source), returns a TrainerUpdate of weight deltas and applies it with plain
SGD. Each class carries static TrainerMeta: temporal and spatial locality, the
mechanisms it is built from, the model kinds it accepts and its supervision.
Cells of the locality taxonomy that are only partially satisfied are recorded
as False.
"""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
import logging
import threading
import time
import tracemalloc

import numpy as np

from neurotrain.bptt import (GradSet, backward, instantaneous_error,
        layer_param_grads, loss_and_grad)
from neurotrain.data import batch_indices
from neurotrain.encoding import EncoderSpec, encode
from neurotrain.errors import (ArgumentError, ConfigError, IncompatibilityError,
        MissingRewardError)
from neurotrain.models import MODEL_KINDS, ModelSpec, ModelState, forward
from neurotrain.snn_core import (NeuronState, SurrogateFn, lif_step,
        surrogate_grad)
from neurotrain.tensor_core import (Rng, check_finite, matmul, one_hot,
        rand_normal, rand_uniform, reduce)
from neurotrain.utils import write_jsonl

logger = logging.getLogger(__name__)

MECHANISMS = ("traces", "stdp", "spatial_bp_online", "feedback_alignment", "local_readout")
SUPERVISION = ("supervised", "unsupervised", "reinforcement")
NONLINEARITIES = ("identity", "sign", "tanh")


@dataclass(frozen=True)
class TrainerMeta():
    name: str
    local_in_time: bool
    local_in_space: bool
    mechanisms: frozenset
    compatible_kinds: frozenset
    supervision: str = "supervised"

    def to_dict(self):
        return OrderedDict([("name", self.name),
                            ("local_in_time", self.local_in_time),
                            ("local_in_space", self.local_in_space),
                            ("mechanisms", sorted(self.mechanisms)),
                            ("compatible_kinds", [k for k in MODEL_KINDS if k in self.compatible_kinds]),
                            ("supervision", self.supervision)])


@dataclass
class TrainerUpdate():
    """Weight deltas (GradSet-shaped), optional modulator M and named diagnostics."""
    deltas: GradSet
    modulator: float = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Batch():
    """
    One training batch.

    :param inputs:  [T x batch x d] spike trains (or currents).
    :param labels:  class ids, or None.
    :param reward_fn:  callable mapping chosen actions to rewards, for reinforcement trainers.
    """
    inputs: np.ndarray
    labels: np.ndarray = None
    reward_fn: object = None

    @property
    def size(self):
        return self.inputs.shape[1]


@dataclass(frozen=True)
class FeedbackProjection():
    """
    Fixed random matrix B [hidden x out] carrying a teaching signal to one hidden layer.

    mode is "dfa" (projects the output error) or "drtp" (projects the target
    through nonlinearity f). It is never updated.
    """
    B: np.ndarray
    mode: str = "dfa"
    nonlinearity: str = "identity"

    def __post_init__(self):
        if self.mode not in ("dfa", "drtp", "broadcast", "readout"):
            raise ConfigError("unknown projection mode '{}'".format(self.mode))
        if self.nonlinearity not in NONLINEARITIES:
            raise ConfigError("projection nonlinearity must be one of {}, got '{}'".format(
                NONLINEARITIES, self.nonlinearity), "hyperparams.nonlinearity")


class EligibilityTrace():
    """Per-synapse trace e_ji, updated forward in time only: e = decay*e + increment."""

    def __init__(self, shape, decay, dtype=np.float32):
        if not 0.0 <= decay <= 1.0:
            raise ArgumentError("eligibility decay must lie in [0, 1], got {}".format(decay))
        self.decay = decay
        self.value = np.zeros(shape, dtype=dtype)

    def step(self, increment):
        self.value = self.decay * self.value + increment
        return self.value

    @property
    def nbytes(self):
        return self.value.nbytes


def random_projection(rng, rows, cols, dtype=np.float32):
    """Fixed random matrix, uniform in [-1/sqrt(cols), 1/sqrt(cols))."""
    k = 1.0 / np.sqrt(cols)
    return rand_uniform(rng, (rows, cols), -k, k, dtype=dtype)


def apply_nonlinearity(kind, x):
    if kind == "identity":
        return x
    elif kind == "sign":
        return np.sign(x)
    elif kind == "tanh":
        return np.tanh(x)
    raise ConfigError("unknown nonlinearity '{}'".format(kind))


def drtp_signal(projection, targets_onehot):
    """Teaching signal f(B y*) for each sample, [batch x hidden]; depends on targets only."""
    return apply_nonlinearity(projection.nonlinearity, matmul(targets_onehot, projection.B.T))


def three_factor_update(eligibility, modulator, lr):
    """Delta w = lr * M * e."""
    return lr * modulator * eligibility


def perturbation_estimate(loss_plus, loss_minus, xi, sigma, lr):
    """Antithetic weight perturbation step: -lr * (L+ - L-)/(2 sigma) * xi/sigma."""
    return (-lr * (loss_plus - loss_minus) / (2.0 * sigma)) * (xi / sigma)


def stdp_increment(pre_t, post_t, pre_trace, post_trace, a_plus, a_minus):
    """
    Pair-based STDP change at one step, summed over the batch; traces already include step t.

    Post spikes potentiate by a_plus * pre_trace, pre spikes depress by a_minus * post_trace.
    """
    return a_plus * matmul(post_t.T, pre_trace) - a_minus * matmul(post_trace.T, pre_t)


def stdp_delta(pre, post, a_plus, a_minus, decay_pre, decay_post):
    """
    Total pair-based STDP change for recorded spike trains.

    :param pre:  [T x batch x in] presynaptic spikes.
    :param post:  [T x batch x out] postsynaptic spikes.
    :return:  [out x in] weight change.
    """
    pre = np.asarray(pre, dtype=np.float64)
    post = np.asarray(post, dtype=np.float64)
    pre_trace = np.zeros(pre.shape[1:])
    post_trace = np.zeros(post.shape[1:])
    delta = np.zeros((post.shape[2], pre.shape[2]))
    for t in range(pre.shape[0]):
        pre_trace = decay_pre * pre_trace + pre[t]
        post_trace = decay_post * post_trace + post[t]
        delta += stdp_increment(pre[t], post[t], pre_trace, post_trace, a_plus, a_minus)
    return delta


def argmax_counts(counts):
    """Predicted class per sample: most output spikes, lowest index on ties."""
    return reduce(counts, 1, "argmax")


def rate_mse_loss(counts, T, labels):
    rate = counts.astype(np.float64) / T
    y = one_hot(labels, counts.shape[1], dtype=np.float64)
    return float(np.mean((rate - y) ** 2))


def require_labels(batch):
    if batch.labels is None:
        raise ArgumentError("this trainer needs labelled batches")
    return np.asarray(batch.labels, dtype=np.int64)


TRAINERS = OrderedDict()


def register_trainer(cls):
    """Class decorator adding a Trainer subclass to the registry under cls.meta.name."""
    if cls.meta is None or not cls.meta.name:
        raise ConfigError("trainer {} has no meta".format(cls.__name__))
    TRAINERS[cls.meta.name] = cls
    return cls


def get_trainer(name):
    try:
        return TRAINERS[name]
    except KeyError:
        raise ConfigError("unknown trainer '{}', expected one of {}".format(name, ", ".join(TRAINERS)))


def compatibility(trainer_cls, spec, info):
    """
    The violated constraint for running trainer_cls on spec with a dataset, or None.

    :param info:  DatasetInfo of the dataset.
    """
    meta = trainer_cls.meta
    if spec.kind not in meta.compatible_kinds:
        return "trainer '{}' does not support {} models".format(meta.name, spec.kind)
    structural = trainer_cls.check_spec(spec)
    if structural:
        return structural
    if spec.input_size != info.input_size:
        return "model input {} does not match dataset '{}' input {}".format(spec.input_size, info.name, info.input_size)
    if meta.supervision != "unsupervised" and spec.output_size != info.n_classes:
        return "model output {} does not match the {} classes of '{}'".format(
            spec.output_size, info.n_classes, info.name)
    if spec.kind == "conv":
        if info.image_shape is None:
            return "conv models need image data; '{}' has no image shape".format(info.name)
        if tuple(info.image_shape) != tuple(spec.conv_spec.in_shape):
            return "conv input {} does not match image shape {}".format(spec.conv_spec.in_shape, info.image_shape)
    return None


def resolve_cell(trainer_cls, spec, info):
    """
    Kind filter, then the trainer's spec adaptation, then shape filters.

    :return:  (adapted spec or None, violated constraint or None).
    """
    if spec is None:
        return None, "no model of this kind for '{}'".format(info.name)
    if spec.kind not in trainer_cls.meta.compatible_kinds:
        return None, "trainer '{}' does not support {} models".format(trainer_cls.meta.name, spec.kind)
    adapted = trainer_cls.adapt_spec(spec)
    constraint = compatibility(trainer_cls, adapted, info)
    if constraint:
        return None, constraint
    return adapted, None


class Trainer():
    """
    Base class of all learning rules.

    Subclasses set meta, defaults and default_search_space and implement step.
    A trainer holds mutable trace state and belongs to one experiment.
    """

    meta = None
    defaults = {"lr": 0.01, "momentum": 0.0}
    default_search_space = {"lr": (1e-3, 1e0, "log")}
    needs_calibration = False

    def __init__(self, model, rng, **hyperparams):
        unknown = sorted(set(hyperparams) - set(self.defaults))
        if unknown:
            raise ConfigError("unknown hyperparameter(s) {} for trainer '{}'".format(
                ", ".join(unknown), self.meta.name), "hyperparams")
        self.hparams = dict(self.defaults)
        self.hparams.update(hyperparams)
        self.rng = rng
        self.base_lr = float(self.hparams["lr"])
        self.lr = self.base_lr
        self.momentum = float(self.hparams.get("momentum", 0.0))
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)", "hyperparams.momentum")
        self.velocity = {}
        self.frozen = set()
        self.peak_aux_bytes = 0
        self.measured_peak_bytes = 0
        self.check_model(model)
        self.setup(model)

    @classmethod
    def check_spec(cls, spec):
        """Trainer-specific structural constraint on an architecture, or None."""
        return None

    @classmethod
    def adapt_spec(cls, spec):
        """The architecture this trainer runs in place of spec."""
        return spec

    @classmethod
    def check_hyperparams(cls, hyperparams, timesteps=None):
        """Raise ConfigError for hyperparameters that cannot work with T timesteps."""

    def check_model(self, model):
        constraint = None
        if model.spec.kind not in self.meta.compatible_kinds:
            constraint = "trainer '{}' does not support {} models".format(self.meta.name, model.spec.kind)
        else:
            constraint = self.check_spec(model.spec)
        if constraint:
            raise IncompatibilityError(constraint)

    def setup(self, model):
        pass

    def prepare(self, model):
        """Called once by fit before the first evaluation."""

    @property
    def surrogate(self):
        return SurrogateFn(self.hparams.get("surrogate", "fast_sigmoid"),
                           float(self.hparams.get("surrogate_scale", 1.0)))

    def track_aux(self, nbytes):
        """Record the tape or trace bytes this step holds; measure_step checks the figure."""
        self.peak_aux_bytes = max(self.peak_aux_bytes, int(nbytes))

    def finish(self, grads, diagnostics, modulator=None):
        deltas = GradSet()
        for name, grad in grads.items():
            deltas[name] = np.zeros_like(grad) if name in self.frozen else check_finite(-self.lr * grad, name)
        return TrainerUpdate(deltas, modulator, diagnostics)

    def step(self, model, batch):
        raise NotImplementedError

    def apply(self, model, update):
        """SGD with optional momentum, then the model's structural constraints."""
        for name, delta in update.deltas.items():
            if self.momentum:
                velocity = self.momentum * self.velocity.get(name, 0.0) + delta
                self.velocity[name] = velocity
                delta = velocity
            model.params[name] += delta.astype(model.params[name].dtype, copy=False)
        model.constrain()

    def evaluate(self, model, inputs):
        """(predicted classes, final ModelState) without plasticity."""
        outputs, state = forward(model, inputs, record=False)
        return argmax_counts(reduce(outputs, 0, "sum")), state

    def predict(self, model, inputs):
        return self.evaluate(model, inputs)[0]

    def calibrate(self, model, labelled_batches, n_classes):
        """Label assignment for unsupervised trainers; fed (inputs, labels) pairs."""

    @staticmethod
    def diagnostics(loss, counts, labels):
        if labels is None:
            return {"loss": loss, "n_correct": None, "n_samples": int(counts.shape[0])}
        return {"loss": loss,
                "n_correct": int(np.sum(argmax_counts(counts) == labels)),
                "n_samples": int(counts.shape[0])}


@register_trainer
class BpttTrainer(Trainer):
    """Surrogate-gradient backpropagation through time over the recorded tape."""

    meta = TrainerMeta("bptt", False, False, frozenset(), frozenset(MODEL_KINDS))
    defaults = {"lr": 1.0, "momentum": 0.0, "surrogate": "fast_sigmoid", "surrogate_scale": 1.0,
                "loss": "rate_mse", "detach_reset": True}
    default_search_space = {"lr": (1e-2, 1e1, "log")}

    @classmethod
    def adapt_spec(cls, spec):
        return replace(spec, record_history=True)

    def step(self, model, batch):
        labels = require_labels(batch)
        outputs, state = forward(model, batch.inputs, record=True)
        loss, grad = loss_and_grad(outputs, labels, self.hparams["loss"])
        grads = backward(model, state.tape, grad, self.surrogate, bool(self.hparams["detach_reset"]))
        self.track_aux(state.tape.nbytes)
        return self.finish(grads, self.diagnostics(loss, outputs.sum(axis=0), labels))


class OnlineTrainer(Trainer):
    """
    Shared forward-in-time loop of the supervised local rules.

    At every step the model advances once, each layer's presynaptic trace is
    updated, the instantaneous rate-MSE error of the output spikes is formed
    and accumulate() turns it into gradient contributions. Nothing is stored
    across steps except traces.
    """

    defaults = {"lr": 1.0, "momentum": 0.0, "surrogate": "fast_sigmoid", "surrogate_scale": 1.0,
                "trace_decay": None}
    default_search_space = {"lr": (1e-2, 1e1, "log")}

    def trace_decay(self, model):
        value = self.hparams.get("trace_decay")
        return model.lif.beta if value is None else float(value)

    def contributing_steps(self, T):
        return range(T)

    def begin(self, model, batch, labels):
        pass

    def step(self, model, batch):
        labels = require_labels(batch)
        inputs = np.asarray(batch.inputs)
        T, size, _ = inputs.shape
        decay = self.trace_decay(model)
        state = model.initial_state(size)
        grads = GradSet.zeros_like(model)
        rec_traces = {layer.index: np.zeros((size, layer.units), dtype=model.dtype)
                      for layer in model.layers if layer.recurrent}
        counts = np.zeros((size, model.spec.output_size), dtype=np.float64)
        self.begin(model, batch, labels)
        active = self.contributing_steps(T)
        for t in range(T):
            for index in rec_traces:
                rec_traces[index] = decay * rec_traces[index] + state.layers[index].spikes
            model.step(state, inputs[t], trace_decay=decay)
            counts += state.output_spikes
            if t in active:
                error = instantaneous_error(state.output_spikes, labels, T)
                self.accumulate(model, state, error, labels, rec_traces, grads, T)
        aux = sum(n.presyn_trace.nbytes for n in state.layers) + sum(v.nbytes for v in rec_traces.values())
        self.track_aux(aux)
        return self.finish(grads, self.diagnostics(rate_mse_loss(counts, T, labels), counts, labels))

    def output_delta(self, model, state, error, grads):
        """Delta rule on the output layer; returns delta_out = e * sigma'(U_out - theta)."""
        out = model.layers[-1]
        neuron = state.layers[-1]
        delta = error * surrogate_grad(self.surrogate, neuron.membrane - model.lif.threshold)
        layer_grads, _ = layer_param_grads(model, out, delta, neuron.presyn_trace, None, state.pool_index[-1])
        for name, value in layer_grads.items():
            grads[name] += value
        return delta

    def hidden_update(self, model, state, layer, signal, rec_traces, grads):
        """Apply a teaching signal [batch x units] to one hidden fc layer through its traces."""
        neuron = state.layers[layer.index]
        delta = signal * surrogate_grad(self.surrogate, neuron.membrane - model.lif.threshold)
        layer_grads, _ = layer_param_grads(model, layer, delta, neuron.presyn_trace,
                                           rec_traces.get(layer.index), None)
        for name, value in layer_grads.items():
            grads[name] += value

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        raise NotImplementedError


@register_trainer
class EpropTrainer(OnlineTrainer):
    """
    e-prop: eligibility trace sigma'(U_j - theta) * xbar_i times a learning signal.

    The learning signal is the output delta sent back through W_out
    (symmetric) or through a fixed random matrix (broadcast).
    """

    meta = TrainerMeta("eprop", True, False, frozenset({"traces"}), frozenset({"fc", "rc"}))
    defaults = dict(OnlineTrainer.defaults, feedback="symmetric")

    @classmethod
    def check_spec(cls, spec):
        if len(spec.layer_sizes) > 3:
            return "eprop trains at most one hidden layer, got {}".format(len(spec.layer_sizes) - 2)
        return None

    @classmethod
    def adapt_spec(cls, spec):
        if len(spec.layer_sizes) > 3:
            return replace(spec, kind="rc", layer_sizes=(spec.input_size, 512, spec.output_size))
        return spec

    def setup(self, model):
        if self.hparams["feedback"] not in ("symmetric", "broadcast"):
            raise ConfigError("feedback must be 'symmetric' or 'broadcast'", "hyperparams.feedback")
        self.projection = None
        if self.hparams["feedback"] == "broadcast" and len(model.layers) > 1:
            hidden = model.layers[0]
            self.projection = FeedbackProjection(
                random_projection(self.rng.spawn("feedback", 0), hidden.units, model.spec.output_size, model.dtype),
                "broadcast")

    def learning_signal(self, model, delta_out):
        if self.projection is None:
            return matmul(delta_out, model.params[model.layers[-1].weight])
        return matmul(delta_out, self.projection.B.T)

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        delta_out = self.output_delta(model, state, error, grads)
        if len(model.layers) > 1:
            self.hidden_update(model, state, model.layers[0], self.learning_signal(model, delta_out),
                               rec_traces, grads)


@register_trainer
class OtttTrainer(OnlineTrainer):
    """
    Online training through time: spatial backprop of the instantaneous error
    at each step, with every layer input replaced by its presynaptic trace.
    """

    meta = TrainerMeta("ottt", True, False, frozenset({"traces", "spatial_bp_online"}), frozenset(MODEL_KINDS))

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        spatial_backprop(model, state, error, self.surrogate, rec_traces, grads)


def spatial_backprop(model, state, error, surrogate, rec_traces, grads):
    """Backprop through the layer stack at the current step only, using each layer's presyn_trace as input."""
    d_above = error
    for layer in reversed(model.layers):
        neuron = state.layers[layer.index]
        d_spikes = d_above.reshape(neuron.spikes.shape)
        d_current = d_spikes * surrogate_grad(surrogate, neuron.membrane - model.lif.threshold)
        layer_grads, d_input = layer_param_grads(model, layer, d_current, neuron.presyn_trace,
                                                 rec_traces.get(layer.index), state.pool_index[layer.index])
        for name, value in layer_grads.items():
            grads[name] += value
        d_above = d_input.reshape(d_input.shape[0], -1)


@register_trainer
class SlttTrainer(OnlineTrainer):
    """
    Spatial learning through time: spatial backprop with instantaneous inputs
    at K evenly spaced steps, t_k = floor(k*T/K).
    """

    meta = TrainerMeta("sltt", True, False, frozenset({"spatial_bp_online"}), frozenset(MODEL_KINDS))
    defaults = {"lr": 1.0, "momentum": 0.0, "surrogate": "fast_sigmoid", "surrogate_scale": 1.0,
                "k_steps": None}

    @classmethod
    def check_hyperparams(cls, hyperparams, timesteps=None):
        k = hyperparams.get("k_steps")
        if k is None:
            return
        if isinstance(k, bool) or int(k) != k or k < 1:
            raise ConfigError("k_steps must be an integer >= 1, got {}".format(k), "hyperparams.k_steps")
        if timesteps is not None and k > timesteps:
            raise ConfigError("k_steps must lie in [1, T={}], got {}".format(timesteps, k), "hyperparams.k_steps")

    def setup(self, model):
        self.check_hyperparams(self.hparams)

    def trace_decay(self, model):
        return 0.0

    def contributing_steps(self, T):
        k = self.hparams.get("k_steps")
        k = T if k is None else int(k)
        if k < 1 or k > T:
            raise ConfigError("k_steps must lie in [1, T={}], got {}".format(T, k), "hyperparams.k_steps")
        return sorted(set(int(v) for v in np.floor(np.arange(k) * T / k)))

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        spatial_backprop(model, state, error, self.surrogate, rec_traces, grads)


class ProjectionTrainer(OnlineTrainer):
    """Online rule with one fixed FeedbackProjection per hidden layer."""

    projection_mode = "dfa"

    def setup(self, model):
        self.projections = {}
        for layer in model.layers[:-1]:
            B = random_projection(self.rng.spawn("feedback", layer.index), layer.units,
                                  model.spec.output_size, model.dtype)
            self.projections[layer.index] = FeedbackProjection(
                B, self.projection_mode, self.hparams.get("nonlinearity", "identity"))

    def projection(self, layer):
        try:
            return self.projections[layer.index]
        except KeyError:
            raise ConfigError("no feedback projection for hidden layer {}".format(layer.index))


@register_trainer
class DfaTrainer(ProjectionTrainer):
    """
    Direct feedback alignment: at each step hidden layer l is taught by
    g = B^l delta_out, where delta_out = err * sigma'(U_out - theta) is the
    output delta rather than the raw error. This is the signal e-prop sends
    back, so with B^l = W_out^T (or e-prop's broadcast matrix) the two rules
    give identical updates.
    """

    meta = TrainerMeta("dfa", True, False, frozenset({"traces", "feedback_alignment"}), frozenset({"fc"}))

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        delta_out = self.output_delta(model, state, error, grads)
        for layer in model.layers[:-1]:
            signal = matmul(delta_out, self.projection(layer).B.T)
            self.hidden_update(model, state, layer, signal, rec_traces, grads)


@register_trainer
class DrtpTrainer(ProjectionTrainer):
    """
    Direct random target projection: hidden layers are taught by f(B^l y*),
    known before the forward pass, so no layer waits on the output.
    """

    meta = TrainerMeta("drtp", True, True, frozenset({"traces", "feedback_alignment"}), frozenset({"fc", "rc"}))
    defaults = dict(OnlineTrainer.defaults, nonlinearity="identity")
    projection_mode = "drtp"

    def begin(self, model, batch, labels):
        y = one_hot(labels, model.spec.output_size, dtype=model.dtype)
        self.signals = {layer.index: drtp_signal(self.projection(layer), y) for layer in model.layers[:-1]}

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        self.output_delta(model, state, error, grads)
        scale = 1.0 / (T * labels.shape[0] * model.spec.output_size)
        for layer in model.layers[:-1]:
            self.hidden_update(model, state, layer, scale * self.signals[layer.index], rec_traces, grads)


@register_trainer
class LocalReadoutTrainer(OnlineTrainer):
    """
    Local readouts: each hidden layer has a fixed random readout R^l to class
    scores and learns from its own rate-MSE error only.
    """

    meta = TrainerMeta("local_readout", True, True, frozenset({"traces", "local_readout"}), frozenset({"fc"}))

    def setup(self, model):
        self.readouts = {}
        for layer in model.layers[:-1]:
            R = random_projection(self.rng.spawn("readout", layer.index), model.spec.output_size,
                                  layer.units, model.dtype)
            self.readouts[layer.index] = R

    def local_error(self, state, layer, labels, T):
        scores = matmul(state.layers[layer.index].spikes, self.readouts[layer.index].T)
        return instantaneous_error(scores, labels, T)

    def accumulate(self, model, state, error, labels, rec_traces, grads, T):
        self.output_delta(model, state, error, grads)
        for layer in model.layers[:-1]:
            local = self.local_error(state, layer, labels, T)
            self.hidden_update(model, state, layer, matmul(local, self.readouts[layer.index]), rec_traces, grads)


class SingleLayerTrainer(Trainer):
    """Base of the plasticity rules that train one input -> output layer."""

    @classmethod
    def check_spec(cls, spec):
        if len(spec.layer_sizes) != 2:
            return "{} trains a single layer, got {} layers".format(cls.meta.name, len(spec.layer_sizes) - 1)
        return None

    def clip(self, model):
        W = model.params["fc0"]
        np.clip(W, 0.0, float(self.hparams["w_max"]), out=W)

    def apply(self, model, update):
        super().apply(model, update)
        self.clip(model)


@register_trainer
class StdpTrainer(SingleLayerTrainer):
    """
    Unsupervised pair-based STDP with winner-take-all and adaptive thresholds.

    Each unit's threshold grows by theta_step per spike and decays by
    theta_decay per step. Only the unit with the highest membrane above its
    threshold spikes at each step; the others are inhibited. Weights stay in
    [0, w_max] and every unit's incoming weights are normalized to a fixed sum.
    """

    meta = TrainerMeta("stdp", True, True, frozenset({"stdp", "traces"}), frozenset({"fc"}), "unsupervised")
    defaults = {"lr": 1.0, "momentum": 0.0, "a_plus": 0.01, "a_minus": 0.005, "trace_decay_pre": 0.9,
                "trace_decay_post": 0.9, "w_max": 1.0, "w_init": 0.3, "theta_step": 0.05,
                "theta_decay": 0.9999, "inhibition": 1.0, "norm_total": 0.1}
    default_search_space = {"lr": (1e-1, 1e1, "log"), "theta_step": (0.01, 0.2, "linear")}
    needs_calibration = True

    @classmethod
    def adapt_spec(cls, spec):
        return ModelSpec("fc", (spec.input_size, spec.layer_sizes[1]), lif=spec.lif, name=spec.name)

    def setup(self, model):
        units = model.layers[0].units
        self.theta = np.zeros(units, dtype=model.dtype)
        self.assignments = np.full(units, -1, dtype=np.int64)
        self.n_classes = 0

    def prepare(self, model):
        W = model.params["fc0"]
        W[...] = rand_uniform(self.rng.spawn("stdp-init"), W.shape, 0.0, float(self.hparams["w_init"]), W.dtype)
        self.normalize(model)
        self.clip(model)

    def normalize(self, model):
        W = model.params["fc0"]
        total = float(self.hparams["norm_total"]) * W.shape[1]
        sums = W.sum(axis=1, keepdims=True)
        np.divide(W * total, sums, out=W, where=sums > 0)

    def apply(self, model, update):
        Trainer.apply(self, model, update)
        self.normalize(model)
        self.clip(model)

    def run(self, model, inputs, plastic):
        """Simulate the WTA layer; returns (spike counts, summed STDP change, spikes emitted, slots)."""
        inputs = np.asarray(inputs)
        T, size, _ = inputs.shape
        lif = model.lif
        W = model.params["fc0"]
        units = W.shape[0]
        neuron = NeuronState.zeros(size, units, dtype=model.dtype)
        pre_trace = np.zeros((size, W.shape[1]), dtype=model.dtype)
        post_trace = np.zeros((size, units), dtype=model.dtype)
        counts = np.zeros((size, units), dtype=np.float64)
        delta = np.zeros_like(W)
        theta = self.theta
        rows = np.arange(size)
        for t in range(T):
            neuron = replace(neuron, adaptive_offset=np.broadcast_to(theta, (size, units)))
            current = matmul(inputs[t], W.T)
            stepped = lif_step(lif, neuron, current)
            over = stepped.membrane - (lif.threshold + theta)
            fired = stepped.spikes > 0
            winner = np.argmax(np.where(fired, over, -np.inf), axis=1)
            has_winner = fired.any(axis=1)
            spikes = np.zeros_like(stepped.spikes)
            spikes[rows[has_winner], winner[has_winner]] = 1
            membrane = stepped.membrane - float(self.hparams["inhibition"]) * has_winner[:, None] * (1 - spikes)
            neuron = replace(stepped, membrane=membrane.astype(model.dtype), spikes=spikes)
            counts += spikes
            if plastic:
                pre_trace = self.hparams["trace_decay_pre"] * pre_trace + inputs[t]
                post_trace = self.hparams["trace_decay_post"] * post_trace + spikes
                delta += stdp_increment(inputs[t], spikes, pre_trace, post_trace,
                                        float(self.hparams["a_plus"]), float(self.hparams["a_minus"]))
                theta = (theta * float(self.hparams["theta_decay"]) +
                         float(self.hparams["theta_step"]) * spikes.sum(axis=0)).astype(model.dtype)
        if plastic:
            self.theta = theta
            self.track_aux(neuron.membrane.nbytes * 2 + pre_trace.nbytes + post_trace.nbytes + delta.nbytes)
        return counts, delta, int(counts.sum()), T * size * units

    def step(self, model, batch):
        counts, delta, _, _ = self.run(model, batch.inputs, plastic=True)
        grads = GradSet([("fc0", -delta / batch.size)])
        return self.finish(grads, self.diagnostics(None, counts, None))

    def calibrate(self, model, labelled_batches, n_classes):
        """Assign each unit the class it responds to most on average; silent units get -1."""
        response = np.zeros((model.layers[0].units, n_classes))
        per_class = np.zeros(n_classes)
        for inputs, labels in labelled_batches:
            counts = self.run(model, inputs, plastic=False)[0]
            response += matmul(counts.T, one_hot(labels, n_classes, dtype=np.float64))
            per_class += np.bincount(labels, minlength=n_classes)
        response /= np.maximum(per_class, 1)
        self.assignments = np.where(response.max(axis=1) > 0, np.argmax(response, axis=1), -1)
        self.n_classes = n_classes
        logger.debug("STDP label assignment: %s", np.bincount(self.assignments[self.assignments >= 0],
                                                             minlength=n_classes))

    def evaluate(self, model, inputs):
        counts, _, spikes, slots = self.run(model, inputs, plastic=False)
        scores = np.zeros((counts.shape[0], max(self.n_classes, 1)))
        for c in range(self.n_classes):
            members = self.assignments == c
            if members.any():
                scores[:, c] = counts[:, members].mean(axis=1)
        state = ModelState(layers=[], batch=counts.shape[0], spike_count=spikes, slot_count=slots)
        return argmax_counts(scores), state


@register_trainer
class RstdpTrainer(SingleLayerTrainer):
    """
    Reward-modulated STDP.

    STDP correlations of the chosen action's unit accumulate into an
    eligibility trace; at the end of each episode the trace is turned into a
    weight change by the modulator M = r - rbar, where rbar is an exponential
    moving average of past rewards. Classification batches are played as a
    contextual bandit with reward 1 for the correct class.
    """

    meta = TrainerMeta("rstdp", True, True, frozenset({"stdp", "traces"}), frozenset({"fc"}), "reinforcement")
    defaults = {"lr": 0.002, "momentum": 0.0, "a_plus": 1.0, "a_minus": 0.5, "trace_decay_pre": 0.8,
                "trace_decay_post": 0.8, "eligibility_decay": 0.95, "w_max": 1.0, "w_init": 0.2,
                "epsilon": 0.0, "baseline_decay": 0.99}
    default_search_space = {"lr": (1e-4, 1e-1, "log")}

    @classmethod
    def adapt_spec(cls, spec):
        return ModelSpec("fc", (spec.input_size, spec.output_size), lif=spec.lif, name=spec.name)

    def setup(self, model):
        self.baseline = 0.0

    def prepare(self, model):
        W = model.params["fc0"]
        w = float(self.hparams["w_init"])
        W[...] = rand_uniform(self.rng.spawn("rstdp-init"), W.shape, 0.9 * w, 1.1 * w, W.dtype)
        self.clip(model)

    def choose(self, counts):
        """Greedy action with uniform random tie-breaks; epsilon-greedy exploration."""
        actions = np.zeros(counts.shape[0], dtype=np.int64)
        gen = self.rng.generator
        for b, row in enumerate(counts):
            if gen.random() < float(self.hparams["epsilon"]):
                actions[b] = gen.integers(row.shape[0])
            else:
                actions[b] = gen.choice(np.flatnonzero(row == row.max()))
        return actions

    def step(self, model, batch):
        inputs = np.asarray(batch.inputs)
        if batch.reward_fn is None and batch.labels is None:
            raise MissingRewardError("rstdp needs a reward source or labels")
        T, size, n_in = inputs.shape
        units = model.spec.output_size
        state = model.initial_state(size)
        eligibility = EligibilityTrace((size, units, n_in), float(self.hparams["eligibility_decay"]), model.dtype)
        pre_trace = np.zeros((size, n_in), dtype=model.dtype)
        post_trace = np.zeros((size, units), dtype=model.dtype)
        counts = np.zeros((size, units), dtype=np.float64)
        a_plus, a_minus = float(self.hparams["a_plus"]), float(self.hparams["a_minus"])
        for t in range(T):
            model.step(state, inputs[t])
            post = state.output_spikes
            pre_trace = self.hparams["trace_decay_pre"] * pre_trace + inputs[t]
            post_trace = self.hparams["trace_decay_post"] * post_trace + post
            eligibility.step(a_plus * np.einsum("bn,bi->bni", post, pre_trace) -
                             a_minus * np.einsum("bn,bi->bni", post_trace, inputs[t]))
            counts += post
        self.track_aux(eligibility.nbytes + pre_trace.nbytes + post_trace.nbytes)

        actions = self.choose(counts)
        if batch.reward_fn is not None:
            rewards = np.asarray(batch.reward_fn(actions), dtype=np.float64)
        else:
            rewards = (actions == np.asarray(batch.labels)).astype(np.float64)
        delta = np.zeros((units, n_in), dtype=np.float64)
        modulators = []
        decay = float(self.hparams["baseline_decay"])
        for b in range(size):
            gated = np.zeros((units, n_in))
            gated[actions[b]] = eligibility.value[b, actions[b]]
            modulator = rewards[b] - self.baseline
            delta += three_factor_update(gated, modulator, 1.0)
            modulators.append(modulator)
            self.baseline = decay * self.baseline + (1.0 - decay) * rewards[b]
        labels = None if batch.labels is None else np.asarray(batch.labels, dtype=np.int64)
        diagnostics = self.diagnostics(None, counts, labels)
        diagnostics["actions"] = actions.tolist()
        diagnostics["reward"] = float(np.mean(rewards))
        grads = GradSet([("fc0", (-delta).astype(model.dtype))])
        return self.finish(grads, diagnostics, modulator=float(np.mean(modulators)))


def run_bandit(trainer, model, task, episodes, rng, rate=0.5, timesteps=20):
    """
    Play a k-armed bandit: each episode shows a fresh Poisson input pattern,
    the trainer picks the arm with the most output spikes and learns from its reward.

    :return:  (actions, rewards) arrays over episodes.
    """
    if model.spec.output_size != task.n_arms:
        raise IncompatibilityError("model has {} outputs for a {}-armed bandit".format(
            model.spec.output_size, task.n_arms))
    reward_rng = rng.spawn("rewards")
    actions, rewards = [], []
    for episode in range(episodes):
        p = np.full((timesteps, 1, model.spec.input_size), rate)
        inputs = (rng.spawn("episode", episode).generator.random(p.shape) < p).astype(model.dtype)
        update = trainer.step(model, Batch(inputs, reward_fn=lambda a: task.pull(a, reward_rng)))
        trainer.apply(model, update)
        actions.append(update.diagnostics["actions"][0])
        rewards.append(update.diagnostics["reward"])
    return np.asarray(actions), np.asarray(rewards)


@register_trainer
class PerturbationTrainer(Trainer):
    """Antithetic weight perturbation: no gradients, two extra loss evaluations per step."""

    meta = TrainerMeta("perturbation", False, True, frozenset(), frozenset(MODEL_KINDS))
    defaults = {"lr": 0.1, "momentum": 0.0, "sigma": 0.01}
    default_search_space = {"lr": (1e-3, 1e0, "log"), "sigma": (1e-3, 1e-1, "log")}

    def loss(self, model, inputs, labels):
        outputs, _ = forward(model, inputs, record=False)
        return loss_and_grad(outputs, labels, "rate_mse")[0], outputs

    def step(self, model, batch):
        labels = require_labels(batch)
        sigma = float(self.hparams["sigma"])
        if not sigma > 0:
            raise ConfigError("sigma must be > 0", "hyperparams.sigma")
        saved = OrderedDict((name, value.copy()) for name, value in model.params.items())
        xi = OrderedDict((name, rand_normal(self.rng, value.shape, sigma, value.dtype))
                         for name, value in model.params.items())
        loss, outputs = self.loss(model, batch.inputs, labels)
        try:
            for name in model.params:
                model.params[name][...] = saved[name] + xi[name]
            loss_plus = self.loss(model, batch.inputs, labels)[0]
            for name in model.params:
                model.params[name][...] = saved[name] - xi[name]
            loss_minus = self.loss(model, batch.inputs, labels)[0]
        finally:
            for name in model.params:
                model.params[name][...] = saved[name]
        self.track_aux(sum(v.nbytes for v in saved.values()) + sum(v.nbytes for v in xi.values()))
        deltas = GradSet()
        for name, noise in xi.items():
            deltas[name] = (np.zeros_like(noise) if name in self.frozen else
                            perturbation_estimate(loss_plus, loss_minus, noise, sigma, self.lr).astype(noise.dtype))
        diagnostics = self.diagnostics(loss, outputs.sum(axis=0), labels)
        diagnostics["loss_plus"] = loss_plus
        diagnostics["loss_minus"] = loss_minus
        return TrainerUpdate(deltas, None, diagnostics)


_measure_lock = threading.Lock()


def measure_step(trainer, model, batch):
    """
    Run trainer.step under tracemalloc.

    The measured peak is the most memory allocated during the step and alive
    at one time, less the model's parameter bytes (one gradient buffer's
    worth). If tracemalloc was already running, allocations made by other
    threads during the step are counted too.

    :return:  (TrainerUpdate, measured peak bytes).
    """
    with _measure_lock:
        already = tracemalloc.is_tracing()
        if already:
            baseline = tracemalloc.get_traced_memory()[0]
            tracemalloc.reset_peak()
        else:
            baseline = 0
            tracemalloc.start()
        try:
            update = trainer.step(model, batch)
            peak = tracemalloc.get_traced_memory()[1] - baseline
        finally:
            if not already:
                tracemalloc.stop()
    param_bytes = sum(value.nbytes for value in model.params.values())
    measured = max(0, peak - param_bytes)
    trainer.measured_peak_bytes = max(trainer.measured_peak_bytes, measured)
    if measured < trainer.peak_aux_bytes:
        logger.warning("%s accounts %d auxiliary bytes but only %d were measured",
                       trainer.meta.name, trainer.peak_aux_bytes, measured)
    return update, measured


# Training loop

LR_SCHEDULES = ("constant", "step", "exponential")


@dataclass(frozen=True)
class LrSchedule():
    """
    Learning rate per training epoch (0-based): constant, step (gamma every
    step_size epochs) or exponential (gamma each epoch).
    """
    kind: str = "constant"
    step_size: int = 1
    gamma: float = 0.5

    def __post_init__(self):
        if self.kind not in LR_SCHEDULES:
            raise ConfigError("lr_schedule kind must be one of {}, got '{}'".format(LR_SCHEDULES, self.kind),
                              "lr_schedule.kind")
        if self.step_size < 1 or not self.gamma > 0:
            raise ConfigError("lr_schedule needs step_size >= 1 and gamma > 0", "lr_schedule")

    def lr_at(self, base, epoch):
        if self.kind == "step":
            return base * self.gamma ** (epoch // self.step_size)
        elif self.kind == "exponential":
            return base * self.gamma ** epoch
        return base

    def to_dict(self):
        return {"kind": self.kind, "step_size": self.step_size, "gamma": self.gamma}


@dataclass
class TrainingLog():
    """Per-epoch records {epoch, train_acc, test_acc, loss, wall_ms}; epoch 0 is the initial evaluation."""
    records: list = field(default_factory=list)
    peak_aux_bytes: int = 0
    measured_peak_bytes: int = None
    spike_sparsity: float = None

    def append(self, epoch, train_acc, test_acc, loss, wall_ms):
        self.records.append(OrderedDict([("epoch", epoch), ("train_acc", train_acc), ("test_acc", test_acc),
                                         ("loss", loss), ("wall_ms", wall_ms)]))

    @property
    def final(self):
        return self.records[-1]

    def accuracies(self):
        return [(r["train_acc"], r["test_acc"]) for r in self.records]

    def write(self, filename):
        n = write_jsonl(self.records, filename)
        logger.info("Wrote %d epoch records to %s", n, filename)


def default_encoder(dataset):
    return EncoderSpec("raster") if dataset.rasters is not None else EncoderSpec()


def encode_batch(encoder, dataset, idx, rng):
    raster = dataset.rasters[idx] if dataset.rasters is not None else None
    return encode(encoder, dataset.features[idx], rng, raster)


def evaluate_split(trainer, model, dataset, split, encoder, batch_size, rng):
    """(accuracy, spike sparsity) over a split; inputs encoded from rng."""
    correct = total = spikes = slots = 0
    for i, idx in enumerate(batch_indices(dataset, split, batch_size)):
        inputs = encode_batch(encoder, dataset, idx, rng.spawn(i))
        predictions, state = trainer.evaluate(model, inputs)
        correct += int(np.sum(predictions == dataset.labels[idx]))
        total += len(idx)
        spikes += state.spike_count
        slots += state.slot_count
    sparsity = 1.0 - spikes / slots if slots else None
    return correct / total, sparsity


def _calibrate(trainer, model, dataset, encoder, batch_size, rng):
    labelled = ((encode_batch(encoder, dataset, idx, rng.spawn(i)), dataset.labels[idx])
                for i, idx in enumerate(batch_indices(dataset, "train", batch_size)))
    trainer.calibrate(model, labelled, dataset.n_classes)


def fit(trainer, model, dataset, epochs, lr_schedule=None, encoder=None, batch_size=32, rng=None,
        measure_memory=False):
    """
    Train model on the train split for a number of epochs.

    Epoch 0 is the evaluation before training. Each later epoch shuffles with a
    seeded stream, encodes, steps and applies every batch, then evaluates; its
    train_acc is the running accuracy over the epoch's batches (or a full
    evaluation for trainers without supervised diagnostics). With
    measure_memory the first step of every epoch runs under measure_step and
    the log keeps the largest measured peak.

    :raises IncompatibilityError:  before any training work if trainer, model
            and dataset cannot be combined.
    """
    constraint = compatibility(type(trainer), model.spec, dataset.info())
    if constraint:
        raise IncompatibilityError(constraint)
    if epochs < 0:
        raise ArgumentError("epochs must be >= 0")
    lr_schedule = lr_schedule or LrSchedule()
    encoder = encoder or default_encoder(dataset)
    rng = rng or Rng(0)
    log = TrainingLog()
    trainer.prepare(model)

    started = time.perf_counter()
    if trainer.needs_calibration:
        _calibrate(trainer, model, dataset, encoder, batch_size, rng.spawn("calibrate", 0))
    train_acc, _ = evaluate_split(trainer, model, dataset, "train", encoder, batch_size, rng.spawn("eval", "train", 0))
    test_acc, sparsity = evaluate_split(trainer, model, dataset, "test", encoder, batch_size,
                                        rng.spawn("eval", "test", 0))
    log.append(0, train_acc, test_acc, None, (time.perf_counter() - started) * 1000.0)
    log.spike_sparsity = sparsity
    logger.info("%s epoch 0: train %.4f test %.4f", trainer.meta.name, train_acc, test_acc)

    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        trainer.lr = lr_schedule.lr_at(trainer.base_lr, epoch - 1)
        losses, correct, seen = [], 0, 0
        supervised = True
        shuffle = rng.spawn("shuffle", epoch)
        for i, idx in enumerate(batch_indices(dataset, "train", batch_size, shuffle)):
            inputs = encode_batch(encoder, dataset, idx, rng.spawn("encode", epoch, i))
            data = Batch(inputs, dataset.labels[idx])
            if measure_memory and i == 0:
                update, _ = measure_step(trainer, model, data)
            else:
                update = trainer.step(model, data)
            trainer.apply(model, update)
            diagnostics = update.diagnostics
            if diagnostics.get("loss") is not None:
                losses.append(diagnostics["loss"])
            if diagnostics.get("n_correct") is None:
                supervised = False
            else:
                correct += diagnostics["n_correct"]
            seen += diagnostics.get("n_samples", len(idx))
            logger.debug("epoch %d batch %d: %s", epoch, i, diagnostics.get("loss"))
        if trainer.needs_calibration:
            _calibrate(trainer, model, dataset, encoder, batch_size, rng.spawn("calibrate", epoch))
        if supervised and seen:
            train_acc = correct / seen
        else:
            train_acc, _ = evaluate_split(trainer, model, dataset, "train", encoder, batch_size,
                                          rng.spawn("eval", "train", epoch))
        test_acc, sparsity = evaluate_split(trainer, model, dataset, "test", encoder, batch_size,
                                            rng.spawn("eval", "test", epoch))
        loss = float(np.mean(losses)) if losses else None
        log.append(epoch, train_acc, test_acc, loss, (time.perf_counter() - started) * 1000.0)
        log.spike_sparsity = sparsity
        logger.info("%s epoch %d: train %.4f test %.4f loss %s", trainer.meta.name, epoch, train_acc, test_acc,
                    "n/a" if loss is None else "{:.5f}".format(loss))
    log.peak_aux_bytes = trainer.peak_aux_bytes
    log.measured_peak_bytes = trainer.measured_peak_bytes if measure_memory else None
    return log
