# encoding: utf-8
"""
Benchmark LIF network library: feedforward (fc), recurrent (rc) and
convolutional (conv) stacks.

Weights are stored [out x in] (conv kernels [out_ch x in_ch x k x k]) in an
ordered name -> array mapping; there are no biases. Inputs arrive flattened
[batch x d]; conv models reshape them to the image shape first.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import json
import logging
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from neurotrain.errors import (ArgumentError, ConfigError, DimensionError,
        FormatError, LengthError, TapeError)
from neurotrain.snn_core import (LifParams, NeuronState, lif_step,
        synaptic_current, update_presyn_trace)
from neurotrain.tensor_core import DTYPE, check_finite, rand_uniform, result_dtype

logger = logging.getLogger(__name__)

MODEL_KINDS = ("fc", "rc", "conv")
CHECKPOINT_MAGIC = b"NTRN1"


@dataclass(frozen=True)
class ConvSpec():
    """
    The fixed two-stage convolutional front end: conv(k) -> maxpool(pool) twice.

    :param in_shape:  (channels, height, width) of the input image.
    :param channels:  output channels of the two stages.
    """
    in_shape: tuple = (1, 28, 28)
    channels: tuple = (12, 32)
    kernel: int = 5
    pool: int = 2

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(int(v) for v in self.in_shape))
        object.__setattr__(self, "channels", tuple(int(v) for v in self.channels))
        if len(self.in_shape) != 3 or min(self.in_shape) < 1:
            raise ConfigError("conv in_shape must be (C, H, W), got {}".format(self.in_shape), "conv.in_shape")
        if len(self.channels) != 2 or min(self.channels) < 1:
            raise ConfigError("conv models have exactly two stages, got channels {}".format(self.channels),
                              "conv.channels")
        if self.kernel < 1:
            raise ConfigError("kernel must be >= 1", "conv.kernel")
        if self.pool != 2:
            raise ConfigError("only 2x2 max pooling is supported", "conv.pool")

    def stage_shapes(self):
        """[(in_shape, prepool_shape, out_shape)] for both stages; raises DimensionError if a kernel does not fit."""
        shapes = []
        c, h, w = self.in_shape
        for out_c in self.channels:
            if self.kernel > h or self.kernel > w:
                raise DimensionError("kernel {} larger than input {}x{}".format(self.kernel, h, w))
            ph, pw = h - self.kernel + 1, w - self.kernel + 1
            if ph < self.pool or pw < self.pool:
                raise DimensionError("feature map {}x{} too small to pool".format(ph, pw))
            shapes.append(((c, h, w), (out_c, ph, pw), (out_c, ph // self.pool, pw // self.pool)))
            c, h, w = out_c, ph // self.pool, pw // self.pool
        return shapes

    def to_dict(self):
        return {"in_shape": list(self.in_shape), "channels": list(self.channels),
                "kernel": self.kernel, "pool": self.pool}


@dataclass(frozen=True)
class ModelSpec():
    """
    Architecture description.

    layer_sizes always starts with the flattened input size and ends with the
    output size. For conv models the entries after the first are the fully
    connected widths following the two conv stages.
    """
    kind: str
    layer_sizes: tuple
    conv_spec: ConvSpec = None
    lif: LifParams = field(default_factory=LifParams)
    record_history: bool = False
    name: str = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(v) for v in self.layer_sizes))
        if self.kind not in MODEL_KINDS:
            raise ConfigError("model kind must be one of {}, got '{}'".format(MODEL_KINDS, self.kind), "kind")
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least input and output sizes", "layer_sizes")
        if min(self.layer_sizes) < 1:
            raise ConfigError("layer sizes must be >= 1, got {}".format(list(self.layer_sizes)), "layer_sizes")
        if self.kind == "rc" and len(self.layer_sizes) < 3:
            raise ConfigError("rc models need at least one hidden layer", "layer_sizes")
        if self.kind == "conv":
            if self.conv_spec is None:
                raise ConfigError("conv models need a conv_spec", "conv")
            if int(np.prod(self.conv_spec.in_shape)) != self.layer_sizes[0]:
                raise ConfigError("conv in_shape {} does not flatten to input size {}".format(
                    self.conv_spec.in_shape, self.layer_sizes[0]), "conv.in_shape")
            try:
                self.conv_spec.stage_shapes()
            except DimensionError as e:
                raise ConfigError(str(e), "conv")
        elif self.conv_spec is not None:
            raise ConfigError("conv_spec given for a '{}' model".format(self.kind), "conv")
        if self.name is None:
            object.__setattr__(self, "name", "{}-{}".format(self.kind, "-".join(str(s) for s in self.layer_sizes)))

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    def to_dict(self):
        d = OrderedDict()
        d["name"] = self.name
        d["kind"] = self.kind
        d["layer_sizes"] = list(self.layer_sizes)
        if self.conv_spec is not None:
            d["conv"] = self.conv_spec.to_dict()
        d["lif"] = self.lif.to_dict()
        d["record_history"] = self.record_history
        return d

    @classmethod
    def from_dict(cls, d):
        conv = d.get("conv")
        return cls(kind=d["kind"],
                   layer_sizes=tuple(d["layer_sizes"]),
                   conv_spec=ConvSpec(**conv) if conv else None,
                   lif=LifParams(**d.get("lif", {})),
                   record_history=bool(d.get("record_history", False)),
                   name=d.get("name"))


@dataclass(frozen=True)
class LayerInfo():
    """Static description of one spiking layer of a built model."""
    index: int
    kind: str                 # "fc" or "conv"
    weight: str               # parameter name
    recurrent: str            # recurrent parameter name or None
    in_shape: tuple           # per-sample input shape
    out_shape: tuple          # per-sample spike shape
    prepool_shape: tuple = None

    @property
    def units(self):
        return int(np.prod(self.out_shape))


def _layer_layout(spec):
    layers = []
    if spec.kind == "conv":
        for i, (in_shape, prepool, out_shape) in enumerate(spec.conv_spec.stage_shapes()):
            layers.append(LayerInfo(i, "conv", "conv{}".format(i), None, in_shape, out_shape, prepool))
        fc_in = int(np.prod(layers[-1].out_shape))
        sizes = (fc_in,) + spec.layer_sizes[1:]
    else:
        sizes = spec.layer_sizes
    n_fc = len(sizes) - 1
    offset = len(layers)
    for j in range(n_fc):
        hidden = j < n_fc - 1
        recurrent = "rec{}".format(offset + j) if spec.kind == "rc" and hidden else None
        layers.append(LayerInfo(offset + j, "fc", "fc{}".format(offset + j), recurrent,
                                (sizes[j],), (sizes[j + 1],)))
    return layers


def _param_shapes(spec, layers):
    shapes = OrderedDict()
    for layer in layers:
        if layer.kind == "conv":
            k = spec.conv_spec.kernel
            shapes[layer.weight] = (layer.out_shape[0], layer.in_shape[0], k, k)
        else:
            shapes[layer.weight] = (layer.units, layer.in_shape[0])
        if layer.recurrent:
            shapes[layer.recurrent] = (layer.units, layer.units)
    return shapes


def zero_diagonal(matrix):
    np.fill_diagonal(matrix, 0)
    return matrix


class Model():
    """
    A built network: spec, layer layout and parameter tensors.

    A Model is confined to one experiment thread.
    """

    def __init__(self, spec, params, dtype=DTYPE):
        self.spec = spec
        self.layers = _layer_layout(spec)
        self.dtype = dtype
        self.params = OrderedDict()
        for name, shape in self.param_shapes().items():
            if name not in params:
                raise ConfigError("missing parameter '{}'".format(name))
            value = np.ascontiguousarray(params[name], dtype=dtype)
            if value.shape != shape:
                raise DimensionError("parameter '{}' has shape {}, expected {}".format(name, value.shape, shape))
            self.params[name] = value

    def param_shapes(self):
        return _param_shapes(self.spec, self.layers)

    @property
    def param_count(self):
        return int(sum(p.size for p in self.params.values()))

    @property
    def lif(self):
        return self.spec.lif

    def copy(self):
        return Model(self.spec, OrderedDict((k, v.copy()) for k, v in self.params.items()), self.dtype)

    def constrain(self):
        """Restore structural constraints after an update (recurrent diagonals stay zero)."""
        for layer in self.layers:
            if layer.recurrent:
                zero_diagonal(self.params[layer.recurrent])

    def signature(self):
        return (self.spec.name, tuple((k, v.shape) for k, v in self.params.items()))

    def initial_state(self, batch, record=False, smooth=None):
        """Zero membranes and spikes for every layer, fresh counters and optional tape."""
        layer_states = [NeuronState.zeros(batch, layer.out_shape, dtype=self.dtype) for layer in self.layers]
        tape = Tape(self.signature(), len(self.layers), smooth) if record else None
        return ModelState(layers=layer_states, tape=tape, batch=batch)

    def layer_input(self, layer, x):
        """Reshape the previous layer's spikes (or the network input) into the layer's input shape."""
        batch = x.shape[0]
        return x.reshape((batch,) + tuple(layer.in_shape))

    def step(self, state, x_t, smooth=None, trace_decay=None):
        """
        Advance all layers by one timestep.

        :param state:  ModelState, updated in place and returned.
        :param x_t:  network input at this step, [batch x d].
        :param smooth:  optional SurrogateFn for smooth-mode spikes.
        :param trace_decay:  when given, each layer's presyn_trace is updated
                with its input at this step.
        """
        x_t = np.asarray(x_t)
        if x_t.ndim != 2 or x_t.shape[1] != self.spec.input_size:
            raise DimensionError("input step has shape {}, expected [batch x {}]".format(
                x_t.shape, self.spec.input_size))
        if x_t.shape[0] != state.batch:
            raise DimensionError("input batch {} does not match state batch {}".format(x_t.shape[0], state.batch))
        x = x_t.astype(result_dtype(self.params[self.layers[0].weight]), copy=False)
        state.inputs = []
        state.pool_index = []
        for layer, neuron in zip(self.layers, state.layers):
            x = self.layer_input(layer, x)
            prev_spikes = neuron.spikes
            if layer.kind == "conv":
                current, index = conv_current(self.params[layer.weight], x, self.spec.conv_spec.pool)
            else:
                recurrent = self.params[layer.recurrent] if layer.recurrent else None
                current = synaptic_current(self.params[layer.weight], x, recurrent, prev_spikes)
                index = None
            new = lif_step(self.spec.lif, neuron, current, smooth=smooth)
            if trace_decay is not None:
                new = update_presyn_trace(new, x, trace_decay)
            state.layers[layer.index] = new
            state.inputs.append(x)
            state.pool_index.append(index)
            if state.tape is not None:
                state.tape.record(TapeEntry(t=state.t, layer=layer.index, inputs=x,
                                            membrane=new.membrane, spikes=new.spikes,
                                            pool_index=index, prepool_shape=layer.prepool_shape))
            state.spike_count += int(np.count_nonzero(new.spikes))
            state.slot_count += int(new.spikes.size)
            x = new.spikes.reshape(state.batch, -1)
        state.t += 1
        return state


@dataclass
class ModelState():
    """
    Mutable per-sequence state of a Model.

    inputs and pool_index hold the current step's layer inputs and pooling
    argmax indices; tape holds the full history when recording.
    """
    layers: list
    batch: int
    tape: object = None
    inputs: list = field(default_factory=list)
    pool_index: list = field(default_factory=list)
    spike_count: int = 0
    slot_count: int = 0
    t: int = 0

    @property
    def output_spikes(self):
        return self.layers[-1].spikes


@dataclass(frozen=True)
class TapeEntry():
    """Saved forward values of one layer at one timestep; membrane is pre-reset."""
    t: int
    layer: int
    inputs: np.ndarray
    membrane: np.ndarray
    spikes: np.ndarray
    pool_index: np.ndarray = None
    prepool_shape: tuple = None

    @property
    def nbytes(self):
        total = self.inputs.nbytes + self.membrane.nbytes + self.spikes.nbytes
        if self.pool_index is not None:
            total += self.pool_index.nbytes
        return total


class Tape():
    """
    Per-timestep, per-layer forward history used by the BPTT backward pass.

    Entries are stored [t][layer]; the number of entries is T x layers.
    """

    def __init__(self, model_signature, n_layers, smooth=None):
        self.model_signature = model_signature
        self.n_layers = n_layers
        self.smooth = smooth
        self.steps = []
        self.nbytes = 0

    def record(self, entry):
        if entry.layer == 0:
            if entry.t != len(self.steps):
                raise TapeError("tape expected timestep {}, got {}".format(len(self.steps), entry.t))
            self.steps.append([])
        row = self.steps[-1]
        if entry.layer != len(row):
            raise TapeError("tape expected layer {}, got {}".format(len(row), entry.layer))
        row.append(entry)
        self.nbytes += entry.nbytes

    @property
    def timesteps(self):
        return len(self.steps)

    def __len__(self):
        return sum(len(row) for row in self.steps)

    def entry(self, t, layer):
        return self.steps[t][layer]

    def history(self, layer):
        """All entries of one layer in time order."""
        return [row[layer] for row in self.steps]

    def check(self, model):
        """Raise TapeError unless the tape is complete and was produced by model."""
        if self.model_signature != model.signature():
            raise TapeError("tape was recorded from a different model ({})".format(self.model_signature[0]))
        if self.n_layers != len(model.layers) or any(len(row) != self.n_layers for row in self.steps):
            raise TapeError("tape is incomplete: {} entries for {} steps x {} layers".format(
                len(self), self.timesteps, self.n_layers))


def build(spec, rng, dtype=DTYPE):
    """
    Initialize a Model from spec.

    Every weight is uniform in [-k, k) with k = 1/sqrt(fan_in), where fan_in is
    in_channels*kernel**2 for conv kernels. Recurrent matrices are drawn the same
    way and get a zero diagonal. Parameters are drawn in layout order from one
    child stream per parameter name.
    """
    params = OrderedDict()
    for name, shape in _param_shapes(spec, _layer_layout(spec)).items():
        fan_in = int(np.prod(shape[1:]))
        k = 1.0 / np.sqrt(fan_in)
        values = rand_uniform(rng.spawn("init", name), shape, -k, k, dtype=dtype)
        if name.startswith("rec"):
            zero_diagonal(values)
        params[name] = values
    model = Model(spec, params, dtype)
    logger.debug("Built %s with %d parameters", spec.name, model.param_count)
    return model


def forward(model, input_spikes, record=None, smooth=None, trace_decay=None):
    """
    Run a full sequence from a fresh state.

    :param input_spikes:  [T x batch x d].
    :param record:  keep a Tape; defaults to spec.record_history.
    :return:  (output_record [T x batch x out], final ModelState).
    """
    input_spikes = np.asarray(input_spikes)
    if input_spikes.ndim != 3 or input_spikes.shape[2] != model.spec.input_size:
        raise DimensionError("input spikes have shape {}, expected [T x batch x {}]".format(
            input_spikes.shape, model.spec.input_size))
    if record is None:
        record = model.spec.record_history
    T, batch, _ = input_spikes.shape
    state = model.initial_state(batch, record=record, smooth=smooth)
    outputs = np.zeros((T, batch, model.spec.output_size), dtype=model.dtype)
    for t in range(T):
        model.step(state, input_spikes[t], smooth=smooth, trace_decay=trace_decay)
        outputs[t] = state.output_spikes
    return outputs, state


def replay(model, tape):
    """Re-run the recorded network input through model; returns the output record."""
    tape.check(model)
    if tape.timesteps == 0:
        return np.zeros((0, 0, model.spec.output_size), dtype=model.dtype)
    inputs = np.stack([tape.entry(t, 0).inputs.reshape(tape.entry(t, 0).inputs.shape[0], -1)
                       for t in range(tape.timesteps)])
    outputs, _ = forward(model, inputs, record=False, smooth=tape.smooth)
    return outputs


def spike_sparsity(state):
    """
    Fraction of zero entries over every spike tensor produced since the state was created.

    :raises ArgumentError:  if no step was run.
    """
    if state.slot_count == 0:
        raise ArgumentError("spike sparsity needs at least one forward step")
    return 1.0 - state.spike_count / state.slot_count


# Convolution stages

def _windows(x, k):
    return sliding_window_view(x, (k, k), axis=(2, 3))


def cross_correlate(x, weights):
    """
    Valid 2D cross-correlation.

    :param x:  [batch x C x H x W].
    :param weights:  [O x C x k x k].
    :return:  [batch x O x (H-k+1) x (W-k+1)].
    :raises DimensionError:  on channel mismatch or when the kernel is larger than the input.
    """
    x = np.asarray(x)
    if x.ndim != 4 or weights.ndim != 4:
        raise DimensionError("cross_correlate expects rank-4 input and kernel")
    if x.shape[1] != weights.shape[1]:
        raise DimensionError("input has {} channels, kernel expects {}".format(x.shape[1], weights.shape[1]))
    k = weights.shape[2]
    if k > x.shape[2] or weights.shape[3] > x.shape[3]:
        raise DimensionError("kernel {}x{} larger than input {}x{}".format(k, weights.shape[3], x.shape[2], x.shape[3]))
    dtype = result_dtype(x, weights)
    out = np.einsum("bchwij,ocij->bohw", _windows(x.astype(np.float64, copy=False), k),
                    weights.astype(np.float64, copy=False))
    return check_finite(out.astype(dtype), "convolution")


def cross_correlate_backward(grad_out, x, weights):
    """
    Gradients of cross_correlate.

    :return:  (grad_x with the shape of x, grad_weights with the shape of weights).
    """
    k = weights.shape[2]
    dtype = result_dtype(x, weights, grad_out)
    g = grad_out.astype(np.float64, copy=False)
    grad_w = np.einsum("bohw,bchwij->ocij", g, _windows(x.astype(np.float64, copy=False), k))
    padded = np.pad(g, ((0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)))
    flipped = weights[:, :, ::-1, ::-1].astype(np.float64)
    grad_x = np.einsum("bohwij,ocij->bchw", _windows(padded, k), flipped)
    return grad_x.astype(dtype), grad_w.astype(dtype)


def max_pool(x, size=2):
    """
    Non-overlapping size x size max pooling (trailing rows/columns that do not fill a window are dropped).

    :return:  (pooled, index) where index is the argmax position within each
            window in row-major order, lowest index on ties.
    """
    b, c, h, w = x.shape
    hp, wp = h // size, w // size
    if hp == 0 or wp == 0:
        raise DimensionError("cannot pool a {}x{} map with window {}".format(h, w, size))
    blocks = x[:, :, :hp * size, :wp * size].reshape(b, c, hp, size, wp, size)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, hp, wp, size * size)
    index = np.argmax(blocks, axis=-1)
    pooled = np.take_along_axis(blocks, index[..., None], axis=-1)[..., 0]
    return pooled, index


def max_pool_backward(grad, index, prepool_shape, size=2):
    """Route pooled gradients back to the argmax position of each window."""
    b, c, hp, wp = grad.shape
    scattered = np.zeros((b, c, hp, wp, size * size), dtype=grad.dtype)
    np.put_along_axis(scattered, index[..., None], grad[..., None], axis=-1)
    scattered = scattered.reshape(b, c, hp, wp, size, size).transpose(0, 1, 2, 4, 3, 5)
    scattered = scattered.reshape(b, c, hp * size, wp * size)
    out = np.zeros((b,) + tuple(prepool_shape), dtype=grad.dtype)
    out[:, :, :hp * size, :wp * size] = scattered
    return out


def conv_current(weights, x, pool=2):
    """Pooled input current of a conv stage: cross-correlation then max pooling."""
    return max_pool(cross_correlate(x, weights), pool)


def conv_forward_stage(weights, params, state, input, pool=2, smooth=None):
    """
    One conv stage step: cross-correlation, 2x2 max pool on the current, LIF step.

    :param weights:  [O x C x k x k].
    :param params:  LifParams.
    :param state:  NeuronState of the pooled feature map.
    :param input:  [batch x C x H x W].
    """
    current, _ = conv_current(weights, input, pool)
    return lif_step(params, state, current, smooth=smooth)


# Checkpoints

def save_checkpoint(model, filename):
    """
    Write model to filename in the NTRN1 container.

    Layout: magic, uint32 LE length + UTF-8 JSON spec, then per parameter
    (in layout order) uint32 rank, uint32 extents and little-endian float32 data.
    """
    spec_bytes = json.dumps(model.spec.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(filename, "wb") as out:
        out.write(CHECKPOINT_MAGIC)
        out.write(struct.pack("<I", len(spec_bytes)))
        out.write(spec_bytes)
        for value in model.params.values():
            out.write(struct.pack("<I", value.ndim))
            out.write(struct.pack("<{}I".format(value.ndim), *value.shape))
            out.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
    logger.info("Wrote checkpoint %s", filename)


def _take(buf, offset, n, filename):
    if offset + n > len(buf):
        raise LengthError("{} is truncated at byte {}".format(filename, len(buf)))
    return buf[offset:offset + n], offset + n


def load_checkpoint(filename):
    """
    Read a model written by save_checkpoint.

    :raises FormatError:  on a wrong magic or inconsistent tensors.
    :raises LengthError:  on a truncated file.
    """
    with open(filename, "rb") as f:
        buf = f.read()
    magic, offset = _take(buf, 0, len(CHECKPOINT_MAGIC), filename)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError("{} is not a NeuroTrain checkpoint (magic {!r})".format(filename, magic))
    raw, offset = _take(buf, offset, 4, filename)
    (spec_len,) = struct.unpack("<I", raw)
    raw, offset = _take(buf, offset, spec_len, filename)
    try:
        spec = ModelSpec.from_dict(json.loads(raw.decode("utf-8")))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError("{} has an unreadable spec header: {}".format(filename, e))
    params = OrderedDict()
    for name, expected in _param_shapes(spec, _layer_layout(spec)).items():
        raw, offset = _take(buf, offset, 4, filename)
        (rank,) = struct.unpack("<I", raw)
        raw, offset = _take(buf, offset, 4 * rank, filename)
        shape = struct.unpack("<{}I".format(rank), raw)
        if tuple(shape) != tuple(expected):
            raise FormatError("{}: tensor '{}' has shape {}, spec expects {}".format(filename, name, shape, expected))
        raw, offset = _take(buf, offset, 4 * int(np.prod(shape)), filename)
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(DTYPE)
    if offset != len(buf):
        raise FormatError("{} has {} trailing bytes".format(filename, len(buf) - offset))
    return Model(spec, params)


# Benchmark architectures

IMAGE_SHAPES = {
    "mnist": (1, 28, 28),
    "fmnist": (1, 28, 28),
    "cifar10": (3, 32, 32),
    "svhn": (3, 32, 32),
}

PRESETS = {
    "mnist": {"fc": [784, 256, 10], "rc": [784, 256, 10]},
    "fmnist": {"fc": [784, 800, 10], "rc": [784, 256, 10]},
    "cifar10": {"fc": [3072, 1024, 512, 10], "rc": [3072, 512, 256, 10]},
    "svhn": {"fc": [3072, 1024, 512, 10], "rc": [3072, 512, 256, 10]},
    "nmnist": {"fc": [2312, 512, 10], "rc": [2312, 256, 10]},
    "dvs_gesture": {"fc": [32768, 2048, 11], "rc": [32768, 1024, 11]},
    "dvs_cifar10": {"fc": [32768, 1024, 512, 10], "rc": [32768, 512, 10]},
    "shd": {"fc": [700, 512, 20], "rc": [700, 512, 20]},
}

SYNTHETIC_HIDDEN = 64


def preset(kind, dataset, input_size=None, n_classes=None, image_shape=None, lif=None):
    """
    Resolve a preset architecture name ("fc", "rc", "conv") for a dataset.

    Datasets without a published architecture get [input, 64, classes].
    Returns None when the kind does not apply (conv without an image shape).
    """
    lif = lif or LifParams()
    if kind not in MODEL_KINDS:
        raise ConfigError("unknown preset '{}', expected one of {}".format(kind, MODEL_KINDS))
    image_shape = image_shape or IMAGE_SHAPES.get(dataset)
    if kind == "conv":
        if image_shape is None:
            return None
        out = n_classes or PRESETS.get(dataset, {}).get("fc", [0, 10])[-1]
        return ModelSpec("conv", (int(np.prod(image_shape)), out), ConvSpec(in_shape=tuple(image_shape)),
                         lif=lif, name="conv")
    sizes = PRESETS.get(dataset, {}).get(kind)
    if sizes is None:
        sizes = [input_size, SYNTHETIC_HIDDEN, n_classes]
    return ModelSpec(kind, tuple(sizes), lif=lif, name=kind)
