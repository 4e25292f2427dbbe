# encoding: utf-8
"""
Strict JSON configuration files for campaigns and custom experiments.

Unknown keys, duplicate keys and values of the wrong type are rejected with
a ConfigError naming the JSON location (e.g. ``models[1].lif.beta``).
Relative paths are resolved against the directory of the config file.
"""

from collections import OrderedDict
import json
import logging
import os

from neurotrain.bench import CampaignSpec, CustomSpec, ParamRange, PRESET_NAMES
from neurotrain.data import SynthSpec
from neurotrain.encoding import EncoderSpec
from neurotrain.errors import ConfigError
from neurotrain.models import ConvSpec, ModelSpec
from neurotrain.snn_core import LifParams
from neurotrain.trainers import LrSchedule
from neurotrain.utils import resolve_path

logger = logging.getLogger(__name__)

MODES = ("campaign", "custom")
SHARED_KEYS = ("mode", "epochs", "seed", "batch_size", "encoder", "lr_schedule", "lif", "synthetic",
               "data_dir", "train_limit", "test_limit")
CAMPAIGN_KEYS = SHARED_KEYS + ("trainers", "models", "datasets", "trials", "parallelism", "search_space")
CUSTOM_KEYS = SHARED_KEYS + ("trainer", "model", "dataset", "hyperparams")
MODEL_KEYS = ("name", "kind", "layer_sizes", "conv", "lif", "record_history")
CONV_KEYS = ("in_shape", "channels", "kernel", "pool")
LIF_KEYS = ("beta", "threshold", "reset_mode")
ENCODER_KEYS = ("kind", "timesteps", "max_rate")
SCHEDULE_KEYS = ("kind", "step_size", "gamma")
SYNTH_KEYS = ("n_classes", "d", "timesteps", "noise", "n_train", "n_test", "density", "seed")
RANGE_KEYS = ("low", "high", "scale")


def _join(location, key):
    if not location:
        return str(key)
    if isinstance(key, int):
        return "{}[{}]".format(location, key)
    return "{}.{}".format(location, key)


def _object(value, allowed, location, required=()):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", location or "<root>")
    for key in value:
        if key not in allowed:
            raise ConfigError("unknown key '{}'".format(key), _join(location, key))
    for key in required:
        if key not in value:
            raise ConfigError("missing required key '{}'".format(key), _join(location, key))
    return value


def _int(value, location, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer, got {}".format(json.dumps(value)), location)
    if minimum is not None and value < minimum:
        raise ConfigError("must be >= {}, got {}".format(minimum, value), location)
    return value


def _optional_int(value, location, minimum=None):
    return None if value is None else _int(value, location, minimum)


def _number(value, location):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number, got {}".format(json.dumps(value)), location)
    return float(value)


def _string(value, location):
    if not isinstance(value, str):
        raise ConfigError("expected a string, got {}".format(json.dumps(value)), location)
    return value


def _bool(value, location):
    if not isinstance(value, bool):
        raise ConfigError("expected true or false, got {}".format(json.dumps(value)), location)
    return value


def _list(value, location):
    if not isinstance(value, list):
        raise ConfigError("expected a list, got {}".format(json.dumps(value)), location)
    return value


def _strings(value, location):
    return tuple(_string(v, _join(location, i)) for i, v in enumerate(_list(value, location)))


def _ints(value, location, minimum=None):
    return tuple(_int(v, _join(location, i), minimum) for i, v in enumerate(_list(value, location)))


def _build(factory, location, **kwargs):
    """Call a spec constructor, re-rooting the locations of its ConfigErrors under location."""
    try:
        return factory(**kwargs)
    except ConfigError as e:
        if e.location:
            raise ConfigError(e.message, _join(location, e.location))
        raise ConfigError(e.message, location)


def parse_lif(value, location):
    _object(value, LIF_KEYS, location)
    kwargs = {}
    if "beta" in value:
        kwargs["beta"] = _number(value["beta"], _join(location, "beta"))
    if "threshold" in value:
        kwargs["threshold"] = _number(value["threshold"], _join(location, "threshold"))
    if "reset_mode" in value:
        kwargs["reset_mode"] = _string(value["reset_mode"], _join(location, "reset_mode"))
    try:
        return LifParams(**kwargs)
    except ConfigError as e:
        raise ConfigError(e.message, _join(location, e.location.split(".")[-1]) if e.location else location)


def parse_conv(value, location):
    _object(value, CONV_KEYS, location)
    kwargs = {}
    if "in_shape" in value:
        kwargs["in_shape"] = _ints(value["in_shape"], _join(location, "in_shape"), 1)
    if "channels" in value:
        kwargs["channels"] = _ints(value["channels"], _join(location, "channels"), 1)
    for key in ("kernel", "pool"):
        if key in value:
            kwargs[key] = _int(value[key], _join(location, key), 1)
    try:
        return ConvSpec(**kwargs)
    except ConfigError as e:
        raise ConfigError(e.message, _join(location, e.location.split(".")[-1]) if e.location else location)


def parse_model(value, location, default_lif=None):
    """A preset name or a model object."""
    if isinstance(value, str):
        if value not in PRESET_NAMES:
            raise ConfigError("unknown model preset '{}', expected one of {} or an object".format(
                value, ", ".join(PRESET_NAMES)), location)
        return value
    _object(value, MODEL_KEYS, location, required=("kind", "layer_sizes"))
    kwargs = {"kind": _string(value["kind"], _join(location, "kind")),
              "layer_sizes": _ints(value["layer_sizes"], _join(location, "layer_sizes"), 1)}
    if "name" in value:
        kwargs["name"] = _string(value["name"], _join(location, "name"))
    if "conv" in value:
        kwargs["conv_spec"] = parse_conv(value["conv"], _join(location, "conv"))
    if "lif" in value:
        kwargs["lif"] = parse_lif(value["lif"], _join(location, "lif"))
    elif default_lif is not None:
        kwargs["lif"] = default_lif
    if "record_history" in value:
        kwargs["record_history"] = _bool(value["record_history"], _join(location, "record_history"))
    return _build(ModelSpec, location, **kwargs)


def parse_encoder(value, location):
    _object(value, ENCODER_KEYS, location)
    kwargs = {}
    if "kind" in value:
        kwargs["kind"] = _string(value["kind"], _join(location, "kind"))
    if "timesteps" in value:
        kwargs["timesteps"] = _int(value["timesteps"], _join(location, "timesteps"), 1)
    if "max_rate" in value:
        kwargs["max_rate"] = _number(value["max_rate"], _join(location, "max_rate"))
    return _build(EncoderSpec, None, **kwargs)


def parse_schedule(value, location):
    _object(value, SCHEDULE_KEYS, location)
    kwargs = {}
    if "kind" in value:
        kwargs["kind"] = _string(value["kind"], _join(location, "kind"))
    if "step_size" in value:
        kwargs["step_size"] = _int(value["step_size"], _join(location, "step_size"), 1)
    if "gamma" in value:
        kwargs["gamma"] = _number(value["gamma"], _join(location, "gamma"))
    return _build(LrSchedule, None, **kwargs)


def parse_synthetic(value, location):
    if not isinstance(value, dict):
        raise ConfigError("expected an object of synthetic tasks", location)
    tasks = OrderedDict()
    for name, task in value.items():
        task_location = _join(location, name)
        _object(task, SYNTH_KEYS, task_location)
        kwargs = {}
        for key in ("n_classes", "d", "timesteps", "n_train", "n_test", "seed"):
            if key in task:
                kwargs[key] = _int(task[key], _join(task_location, key), 0)
        for key in ("noise", "density"):
            if key in task:
                kwargs[key] = _number(task[key], _join(task_location, key))
        tasks[name] = SynthSpec(**kwargs)
    return tasks


def parse_range(value, location):
    if isinstance(value, dict):
        _object(value, RANGE_KEYS, location, required=("low", "high"))
        low, high = _number(value["low"], _join(location, "low")), _number(value["high"], _join(location, "high"))
        scale = _string(value.get("scale", "log"), _join(location, "scale"))
    else:
        items = _list(value, location)
        if len(items) not in (2, 3):
            raise ConfigError("expected [low, high] or [low, high, scale]", location)
        low, high = _number(items[0], _join(location, 0)), _number(items[1], _join(location, 1))
        scale = _string(items[2], _join(location, 2)) if len(items) == 3 else "log"
    return _build(ParamRange, location, low=low, high=high, scale=scale)


def parse_search_space(value, location):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", location)
    space = OrderedDict()
    for trainer, params in value.items():
        trainer_location = _join(location, trainer)
        if not isinstance(params, dict) or not params:
            raise ConfigError("expected a non-empty object of ranges", trainer_location)
        space[trainer] = OrderedDict((name, parse_range(r, _join(trainer_location, name)))
                                     for name, r in params.items())
    return space


def parse_hyperparams(value, location):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", location)
    for name, v in value.items():
        if not isinstance(v, (int, float, str, bool)) and v is not None:
            raise ConfigError("hyperparameter values must be scalars", _join(location, name))
    return dict(value)


def _shared(doc, base_dir):
    kwargs = {}
    if "epochs" in doc:
        kwargs["epochs"] = _int(doc["epochs"], "epochs", 0)
    if "seed" in doc:
        kwargs["seed"] = _int(doc["seed"], "seed", 0)
    if "batch_size" in doc:
        kwargs["batch_size"] = _int(doc["batch_size"], "batch_size", 1)
    if "encoder" in doc:
        kwargs["encoder"] = parse_encoder(doc["encoder"], "encoder")
    if "lr_schedule" in doc:
        kwargs["lr_schedule"] = parse_schedule(doc["lr_schedule"], "lr_schedule")
    if "lif" in doc:
        kwargs["lif"] = parse_lif(doc["lif"], "lif")
    if "synthetic" in doc:
        kwargs["synthetic"] = parse_synthetic(doc["synthetic"], "synthetic")
    if doc.get("data_dir") is not None:
        kwargs["data_dir"] = resolve_path(_string(doc["data_dir"], "data_dir"), base_dir)
    for key in ("train_limit", "test_limit"):
        if key in doc:
            kwargs[key] = _optional_int(doc[key], key, 1)
    return kwargs


def parse_config(doc, base_dir=None):
    """
    Validate a decoded config document.

    :param doc:  dict from a JSON config file.
    :param base_dir:  directory relative paths are resolved against.
    :return:  CampaignSpec or CustomSpec.
    :raises ConfigError:  naming the offending key and its location.
    """
    _object(doc, CAMPAIGN_KEYS + CUSTOM_KEYS, "", required=("mode",))
    mode = _string(doc["mode"], "mode")
    if mode not in MODES:
        raise ConfigError("mode must be 'campaign' or 'custom', got '{}'".format(mode), "mode")
    _object(doc, CAMPAIGN_KEYS if mode == "campaign" else CUSTOM_KEYS, "")
    kwargs = _shared(doc, base_dir)
    lif = kwargs.get("lif")
    if mode == "campaign":
        for key in ("trainers", "datasets"):
            if key in doc:
                kwargs[key] = _strings(doc[key], key)
        if "models" in doc:
            kwargs["models"] = tuple(parse_model(m, _join("models", i), lif)
                                     for i, m in enumerate(_list(doc["models"], "models")))
        if "trials" in doc:
            kwargs["trials"] = _int(doc["trials"], "trials", 1)
        if "parallelism" in doc:
            kwargs["parallelism"] = _int(doc["parallelism"], "parallelism", 1)
        if "search_space" in doc:
            kwargs["search_space"] = parse_search_space(doc["search_space"], "search_space")
        return _build(CampaignSpec, None, **kwargs)

    _object(doc, CUSTOM_KEYS, "", required=("trainer", "model", "dataset"))
    kwargs["trainer"] = _string(doc["trainer"], "trainer")
    kwargs["dataset"] = _string(doc["dataset"], "dataset")
    kwargs["model"] = parse_model(doc["model"], "model", lif)
    if "hyperparams" in doc:
        kwargs["hyperparams"] = parse_hyperparams(doc["hyperparams"], "hyperparams")
    spec = _build(CustomSpec, None, **kwargs)
    spec.check_hyperparams()
    return spec


def _reject_duplicates(pairs):
    result = OrderedDict()
    for key, value in pairs:
        if key in result:
            raise ConfigError("duplicate key '{}'".format(key), key)
        result[key] = value
    return result


def _reject_constant(name):
    raise ConfigError("non-finite number {} is not allowed".format(name))


def loads(text, base_dir=None):
    try:
        doc = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigError("invalid JSON: {}".format(e), "line {} column {}".format(e.lineno, e.colno))
    return parse_config(doc, base_dir)


def load_config(filename):
    """Read and validate a config file; relative paths resolve against its directory."""
    with open(filename, encoding="utf-8") as f:
        text = f.read()
    spec = loads(text, os.path.dirname(os.path.abspath(filename)))
    logger.debug("Loaded %s config from %s", "campaign" if isinstance(spec, CampaignSpec) else "custom", filename)
    return spec


def model_to_config(model):
    if isinstance(model, str):
        return model
    d = OrderedDict([("name", model.name), ("kind", model.kind), ("layer_sizes", list(model.layer_sizes))])
    if model.conv_spec is not None:
        d["conv"] = model.conv_spec.to_dict()
    d["lif"] = model.lif.to_dict()
    d["record_history"] = model.record_history
    return d


def to_config(spec):
    """Serialize a CampaignSpec or CustomSpec to a config document that parses back to an equal spec."""
    d = OrderedDict()
    if isinstance(spec, CampaignSpec):
        d["mode"] = "campaign"
        d["trainers"] = list(spec.trainers)
        d["models"] = [model_to_config(m) for m in spec.models]
        d["datasets"] = list(spec.datasets)
        d["trials"] = spec.trials
        d["parallelism"] = spec.parallelism
        d["search_space"] = OrderedDict(
            (trainer, OrderedDict((name, ParamRange.parse(r).to_dict()) for name, r in space.items()))
            for trainer, space in spec.search_space.items())
    elif isinstance(spec, CustomSpec):
        d["mode"] = "custom"
        d["trainer"] = spec.trainer
        d["model"] = model_to_config(spec.model)
        d["dataset"] = spec.dataset
        d["hyperparams"] = dict(spec.hyperparams)
    else:
        raise ConfigError("cannot serialize {}".format(type(spec).__name__))
    d["epochs"] = spec.epochs
    d["seed"] = spec.seed
    d["batch_size"] = spec.batch_size
    d["encoder"] = spec.encoder.to_dict()
    d["lr_schedule"] = spec.lr_schedule.to_dict()
    d["lif"] = spec.lif.to_dict()
    d["synthetic"] = OrderedDict((name, s.to_dict()) for name, s in spec.synthetic.items())
    d["data_dir"] = spec.data_dir
    d["train_limit"] = spec.train_limit
    d["test_limit"] = spec.test_limit
    return d


def dump_config(spec, filename):
    with open(filename, "w", encoding="utf-8") as out:
        json.dump(to_config(spec), out, indent=2)
        out.write("\n")
    logger.info("Wrote config to %s", filename)
