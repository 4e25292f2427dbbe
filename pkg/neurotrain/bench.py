# encoding: utf-8
"""
Benchmark campaigns: trainer x model x dataset grids with static
compatibility filtering, random-search trials and experiment records.

Every experiment draws all of its randomness from a seed derived from
(campaign seed, trainer, model, dataset, trial), so results do not depend on
the order or the concurrency with which experiments run.
"""

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
import hashlib
import logging
import math
import threading

import numpy as np

from neurotrain.data import DatasetCatalog
from neurotrain.encoding import EncoderSpec
from neurotrain.errors import ArgumentError, ConfigError, IncompatibilityError
from neurotrain.models import ModelSpec, build, preset
from neurotrain.snn_core import LifParams
from neurotrain.tensor_core import Rng, derive_seed
from neurotrain.trainers import LrSchedule, fit, get_trainer, resolve_cell
from neurotrain.utils import dumps_canonical

logger = logging.getLogger(__name__)

RECORD_VERSION = 1
STATUSES = ("ok", "not_supported", "failed")
PRESET_NAMES = ("fc", "rc", "conv")
TIMING_FIELDS = ("total_wall_ms", "wall_ms_per_epoch")
# metrics that vary between identical runs
VOLATILE_FIELDS = TIMING_FIELDS + ("measured_peak_bytes",)
PARAM_SCALES = ("log", "linear")


@dataclass(frozen=True)
class ParamRange():
    """
    Inclusive sampling range of one hyperparameter.

    scale "log" samples log-uniformly (learning rates), "linear" uniformly
    (decays, probabilities).
    """
    low: float
    high: float
    scale: str = "log"

    def __post_init__(self):
        if self.scale not in PARAM_SCALES:
            raise ConfigError("scale must be 'log' or 'linear', got '{}'".format(self.scale), "scale")
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.low > self.high:
            raise ConfigError("invalid range [{}, {}]".format(self.low, self.high))
        if self.scale == "log" and self.low <= 0:
            raise ConfigError("log-scale range needs low > 0, got {}".format(self.low))

    @classmethod
    def parse(cls, value):
        """From a ParamRange, a (low, high[, scale]) sequence or a {low, high, scale} mapping."""
        if isinstance(value, cls):
            return value
        if isinstance(value, dict):
            return cls(float(value["low"]), float(value["high"]), value.get("scale", "log"))
        return cls(float(value[0]), float(value[1]), *value[2:])

    def sample(self, generator):
        if self.low == self.high:
            return self.low
        if self.scale == "log":
            return float(math.exp(generator.uniform(math.log(self.low), math.log(self.high))))
        return float(generator.uniform(self.low, self.high))

    def to_dict(self):
        return OrderedDict([("low", self.low), ("high", self.high), ("scale", self.scale)])


def sample_hyperparams(space, rng):
    """
    Draw one assignment from a search space.

    Keys are visited in sorted order, one draw each, so the assignment only
    depends on the rng and the space.

    :param space:  name -> ParamRange (or anything ParamRange.parse accepts).
    :return:  name -> float.
    :raises ConfigError:  on an empty space or invalid bounds.
    """
    if not space:
        raise ConfigError("empty hyperparameter search space")
    generator = rng.generator
    return OrderedDict((name, ParamRange.parse(space[name]).sample(generator)) for name in sorted(space))


@dataclass(frozen=True)
class CampaignSpec():
    """
    A full benchmark campaign.

    :param models:  ModelSpec instances or preset names ("fc", "rc", "conv")
            resolved per dataset.
    :param search_space:  trainer name -> {hyperparameter -> ParamRange};
            trainers not listed use their default space.
    :param synthetic:  extra synthetic datasets, name -> SynthSpec.
    """
    trainers: tuple = ()
    models: tuple = ()
    datasets: tuple = ()
    epochs: int = 1
    trials: int = 1
    seed: int = 0
    search_space: dict = field(default_factory=dict)
    parallelism: int = 1
    batch_size: int = 32
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)
    lif: LifParams = field(default_factory=LifParams)
    synthetic: dict = field(default_factory=dict)
    data_dir: str = None
    train_limit: int = None
    test_limit: int = None

    def __post_init__(self):
        for name in ("trainers", "models", "datasets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1, got {}".format(self.trials), "trials")
        if int(self.epochs) < 0:
            raise ConfigError("epochs must be >= 0, got {}".format(self.epochs), "epochs")
        if int(self.parallelism) < 1:
            raise ConfigError("parallelism must be >= 1, got {}".format(self.parallelism), "parallelism")
        if int(self.batch_size) < 1:
            raise ConfigError("batch_size must be >= 1, got {}".format(self.batch_size), "batch_size")
        for model in self.models:
            if not isinstance(model, ModelSpec) and model not in PRESET_NAMES:
                raise ConfigError("unknown model preset '{}', expected one of {} or a model spec".format(
                    model, PRESET_NAMES), "models")
        for trainer, space in self.search_space.items():
            for name, value in space.items():
                try:
                    ParamRange.parse(value)
                except ConfigError as e:
                    raise ConfigError(str(e), "search_space.{}.{}".format(trainer, name))

    def catalog(self):
        return DatasetCatalog(self.data_dir, self.synthetic)


@dataclass(frozen=True)
class CustomSpec():
    """One predefined trainer, model and dataset with explicit hyperparameters."""
    trainer: str
    model: object
    dataset: str
    hyperparams: dict = field(default_factory=dict)
    epochs: int = 1
    seed: int = 0
    batch_size: int = 32
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)
    lif: LifParams = field(default_factory=LifParams)
    synthetic: dict = field(default_factory=dict)
    data_dir: str = None
    train_limit: int = None
    test_limit: int = None

    def __post_init__(self):
        if int(self.epochs) < 0:
            raise ConfigError("epochs must be >= 0, got {}".format(self.epochs), "epochs")
        if int(self.batch_size) < 1:
            raise ConfigError("batch_size must be >= 1, got {}".format(self.batch_size), "batch_size")
        if not isinstance(self.model, ModelSpec) and self.model not in PRESET_NAMES:
            raise ConfigError("unknown model preset '{}'".format(self.model), "model")

    def catalog(self):
        return DatasetCatalog(self.data_dir, self.synthetic)

    def check_hyperparams(self, catalog=None):
        """Raise ConfigError if the hyperparameters cannot work with the dataset's timesteps."""
        info = (catalog or self.catalog()).info(self.dataset)
        get_trainer(self.trainer).check_hyperparams(self.hyperparams, cell_timesteps(info, self.encoder))


def cell_timesteps(info, encoder):
    """Timesteps a cell trains with: the raster length of event data, else the encoder's."""
    return info.timesteps if info.timesteps is not None else encoder.timesteps


def model_name(model):
    return model if isinstance(model, str) else model.name


def resolve_model(model, info, lif=None):
    """The ModelSpec a campaign model entry stands for on a dataset, or None if the preset does not apply."""
    if isinstance(model, ModelSpec):
        return model
    return preset(model, info.name, info.input_size, info.n_classes, info.image_shape, lif)


def adapted_from(requested, trained):
    """Layer sizes of the requested architecture if the trainer runs a different one, else None."""
    if requested is None or trained is None:
        return None
    if (requested.kind, requested.layer_sizes) == (trained.kind, trained.layer_sizes):
        return None
    return list(requested.layer_sizes)


@dataclass
class Cell():
    """One trainer x model x dataset combination of a campaign.

    spec is the architecture the trainer runs; requested is the one the
    campaign asked for before the trainer adapted it.
    """
    index: int
    trainer: str
    model: str
    dataset: str
    spec: ModelSpec = None
    requested: ModelSpec = None
    status: str = "pending"
    constraint: str = None

    @property
    def cell_id(self):
        return (self.trainer, self.model, self.dataset)

    @property
    def supported(self):
        return self.status != "not_supported"


def generate_cells(spec, catalog=None):
    """
    The full cross product trainers x models x datasets, in that nesting order.

    Cells rejected by the static compatibility filter get status
    "not_supported" and the violated constraint.

    :raises ConfigError:  on an unknown trainer or dataset name.
    """
    catalog = catalog or spec.catalog()
    trainer_classes = [get_trainer(name) for name in spec.trainers]
    infos = [catalog.info(name) for name in spec.datasets]
    cells = []
    for trainer_cls in trainer_classes:
        for model in spec.models:
            for info in infos:
                requested = resolve_model(model, info, spec.lif)
                adapted, constraint = resolve_cell(trainer_cls, requested, info)
                cell = Cell(len(cells), trainer_cls.meta.name, model_name(model), info.name, adapted,
                            requested=requested)
                if constraint:
                    cell.status = "not_supported"
                    cell.constraint = constraint
                    logger.debug("Cell %s not supported: %s", cell.cell_id, constraint)
                cells.append(cell)
    return cells


@dataclass
class ExperimentRecord():
    """One experiment (or one unsupported cell) of a campaign."""
    trainer: str
    model: str
    dataset: str
    trial: int = None
    hyperparams: dict = field(default_factory=dict)
    seed: int = None
    metrics: dict = None
    status: str = "ok"
    message: str = None
    best: bool = False
    config_hash: str = None
    architecture: dict = None
    model_layers: list = None
    adapted_from: list = None

    @property
    def cell_id(self):
        return (self.trainer, self.model, self.dataset)

    def to_dict(self):
        d = OrderedDict()
        d["v"] = RECORD_VERSION
        d["trainer"] = self.trainer
        d["model"] = self.model
        d["dataset"] = self.dataset
        d["trial"] = self.trial
        d["status"] = self.status
        d["best"] = self.best
        d["seed"] = self.seed
        d["hyperparams"] = OrderedDict(sorted(self.hyperparams.items()))
        d["metrics"] = self.metrics
        d["message"] = self.message
        d["config_hash"] = self.config_hash
        d["architecture"] = self.architecture
        d["model_layers"] = self.model_layers
        d["adapted_from"] = self.adapted_from
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("v") != RECORD_VERSION:
            raise ConfigError("unsupported record version {!r}".format(d.get("v")), "v")
        if d.get("status") not in STATUSES:
            raise ConfigError("unknown record status {!r}".format(d.get("status")), "status")
        return cls(trainer=d["trainer"], model=d["model"], dataset=d["dataset"], trial=d.get("trial"),
                   hyperparams=dict(d.get("hyperparams") or {}), seed=d.get("seed"),
                   metrics=d.get("metrics"), status=d["status"], message=d.get("message"),
                   best=bool(d.get("best", False)), config_hash=d.get("config_hash"),
                   architecture=d.get("architecture"), model_layers=d.get("model_layers"),
                   adapted_from=d.get("adapted_from"))


def mask_timing(record):
    """A copy of a record dict with wall-clock and measured memory fields set to None."""
    masked = OrderedDict(record)
    if masked.get("metrics"):
        metrics = OrderedDict(masked["metrics"])
        for name in VOLATILE_FIELDS:
            if name in metrics:
                metrics[name] = None
        masked["metrics"] = metrics
    return masked


def config_hash(*parts):
    return hashlib.sha256(dumps_canonical(list(parts)).encode("utf-8")).hexdigest()[:16]


def log_metrics(log, model):
    """Record metrics from a TrainingLog."""
    final = log.final
    epochs = [r["wall_ms"] for r in log.records[1:]]
    metrics = OrderedDict([
        ("train_acc", final["train_acc"]),
        ("test_acc", final["test_acc"]),
        ("loss", final["loss"]),
        ("total_wall_ms", float(sum(r["wall_ms"] for r in log.records))),
        ("wall_ms_per_epoch", float(np.mean(epochs)) if epochs else None),
        ("param_count", model.param_count),
        ("peak_aux_memory_bytes", int(log.peak_aux_bytes)),
        ("spike_sparsity", log.spike_sparsity),
    ])
    if log.measured_peak_bytes is not None:
        metrics["measured_peak_bytes"] = int(log.measured_peak_bytes)
    return metrics


def train(trainer_cls, spec, dataset, hyperparams, rng, epochs, batch_size, encoder, lr_schedule,
          measure_memory=False):
    """Build, train and evaluate one model; returns (TrainingLog, Model, Trainer)."""
    model = build(spec, rng.spawn("model"))
    trainer = trainer_cls(model, rng.spawn("trainer"), **hyperparams)
    if dataset.rasters is not None and encoder.kind != "raster":
        logger.debug("Dataset %s carries spike rasters; using the raster encoder", dataset.name)
        encoder = EncoderSpec("raster")
    log = fit(trainer, model, dataset, epochs, lr_schedule, encoder, batch_size, rng.spawn("fit"), measure_memory)
    return log, model, trainer


def run_experiment(cell, trial, spec, catalog, load_lock=None):
    """
    One random-search trial of a supported cell.

    Any exception other than an interrupt is captured as a failed record.
    """
    seed = derive_seed(spec.seed, cell.trainer, cell.model, cell.dataset, trial)
    rng = Rng(seed)
    record = ExperimentRecord(cell.trainer, cell.model, cell.dataset, trial=trial, seed=seed,
                              architecture=cell.spec.to_dict(), model_layers=list(cell.spec.layer_sizes),
                              adapted_from=adapted_from(cell.requested, cell.spec))
    trainer_cls = get_trainer(cell.trainer)
    space = spec.search_space.get(cell.trainer) or trainer_cls.default_search_space
    try:
        record.hyperparams = dict(sample_hyperparams(space, rng.spawn("hyperparams")))
        timesteps = cell_timesteps(catalog.info(cell.dataset), spec.encoder)
        trainer_cls.check_hyperparams(record.hyperparams, timesteps)
        record.config_hash = config_hash(cell.trainer, cell.spec.to_dict(), cell.dataset, record.hyperparams,
                                         spec.epochs, spec.batch_size, spec.encoder.to_dict(),
                                         spec.lr_schedule.to_dict(), seed)
        logger.info("Starting %s/%s/%s trial %d (seed %d)", cell.trainer, cell.model, cell.dataset, trial, seed)
        if load_lock is None:
            dataset = catalog.load(cell.dataset, spec.train_limit, spec.test_limit)
        else:
            with load_lock:
                dataset = catalog.load(cell.dataset, spec.train_limit, spec.test_limit)
        log, model, _ = train(trainer_cls, cell.spec, dataset, record.hyperparams, rng, spec.epochs,
                              spec.batch_size, spec.encoder, spec.lr_schedule)
        record.metrics = log_metrics(log, model)
        logger.info("Finished %s/%s/%s trial %d: test accuracy %.4f", cell.trainer, cell.model, cell.dataset,
                    trial, record.metrics["test_acc"])
    except Exception as e:
        record.status = "failed"
        record.message = "{}: {}".format(type(e).__name__, e)
        logger.warning("Experiment %s/%s/%s trial %d failed: %s", cell.trainer, cell.model, cell.dataset,
                       trial, record.message)
        logger.debug("Failure details", exc_info=True)
    return record


def not_supported_record(cell):
    return ExperimentRecord(cell.trainer, cell.model, cell.dataset, status="not_supported",
                            message=cell.constraint)


def mark_best(records):
    """Flag the ok trial with the highest test accuracy per cell (lowest trial on ties)."""
    best = {}
    for record in records:
        record.best = False
        if record.status != "ok":
            continue
        key = record.cell_id
        current = best.get(key)
        score = record.metrics["test_acc"]
        if current is None or score > current.metrics["test_acc"] or (
                score == current.metrics["test_acc"] and record.trial < current.trial):
            best[key] = record
    for record in best.values():
        record.best = True
    return records


def run_campaign(spec, catalog=None, on_record=None):
    """
    Run every trial of every supported cell on a bounded thread pool.

    :param on_record:  called with each ExperimentRecord as it completes,
            one call at a time.
    :return:  records ordered by (cell, trial); unsupported cells give one
            record with trial None.
    :raises ConfigError:  on unknown names or a missing data directory.
    :raises OSError:  if a dataset file cannot be read.
    """
    catalog = catalog or spec.catalog()
    cells = generate_cells(spec, catalog)
    n_supported = sum(cell.supported for cell in cells)
    logger.info("Campaign: %d cells (%d supported), %d trial(s) each, parallelism %d",
                len(cells), n_supported, spec.trials, spec.parallelism)
    # missing data is a campaign error, not a per-cell failure
    for name in OrderedDict.fromkeys(cell.dataset for cell in cells if cell.supported):
        catalog.load(name, spec.train_limit, spec.test_limit)
    results = {}
    record_lock = threading.Lock()
    load_lock = threading.Lock()

    def collect(key, record):
        with record_lock:
            results[key] = record
            if on_record is not None:
                on_record(record)

    for cell in cells:
        if not cell.supported:
            collect((cell.index, -1), not_supported_record(cell))

    tasks = [(cell, trial) for cell in cells if cell.supported for trial in range(spec.trials)]
    executor = ThreadPoolExecutor(max_workers=spec.parallelism)
    try:
        futures = {executor.submit(run_experiment, cell, trial, spec, catalog, load_lock): (cell.index, trial)
                   for cell, trial in tasks}
        for future in as_completed(futures):
            collect(futures[future], future.result())
    except BaseException:
        executor.shutdown(wait=False, cancel_futures=True)
        raise
    executor.shutdown(wait=True)

    records = [results[key] for key in sorted(results)]
    mark_best(records)
    n_failed = sum(r.status == "failed" for r in records)
    logger.info("Campaign finished: %d records, %d failed", len(records), n_failed)
    return records


def run_custom(custom, catalog=None, measure_memory=False):
    """
    Custom mode: one experiment with explicit hyperparameters.

    :return:  (ExperimentRecord, TrainingLog, trained Model).
    :raises IncompatibilityError:  if the combination is not supported.
    :raises ConfigError:  if the hyperparameters cannot work with the dataset's timesteps.
    """
    catalog = catalog or custom.catalog()
    trainer_cls = get_trainer(custom.trainer)
    info = catalog.info(custom.dataset)
    requested = resolve_model(custom.model, info, custom.lif)
    adapted, constraint = resolve_cell(trainer_cls, requested, info)
    if constraint:
        raise IncompatibilityError(constraint)
    name = model_name(custom.model)
    trainer_cls.check_hyperparams(custom.hyperparams, cell_timesteps(info, custom.encoder))
    seed = derive_seed(custom.seed, trainer_cls.meta.name, name, custom.dataset, 0)
    dataset = catalog.load(custom.dataset, custom.train_limit, custom.test_limit)
    hyperparams = dict(custom.hyperparams)
    logger.info("Running %s on %s/%s (seed %d)", custom.trainer, name, custom.dataset, seed)
    log, model, _ = train(trainer_cls, adapted, dataset, hyperparams, Rng(seed), custom.epochs,
                          custom.batch_size, custom.encoder, custom.lr_schedule, measure_memory)
    record = ExperimentRecord(trainer_cls.meta.name, name, custom.dataset, trial=0, hyperparams=hyperparams,
                              seed=seed, metrics=log_metrics(log, model), best=True,
                              config_hash=config_hash(custom.trainer, adapted.to_dict(), custom.dataset, hyperparams,
                                                      custom.epochs, custom.batch_size, custom.encoder.to_dict(),
                                                      custom.lr_schedule.to_dict(), seed),
                              architecture=adapted.to_dict(), model_layers=list(adapted.layer_sizes),
                              adapted_from=adapted_from(requested, adapted))
    if record.adapted_from:
        logger.info("%s trains %s in place of the requested %s", custom.trainer, record.model_layers,
                    record.adapted_from)
    return record, log, model


def failed_count(records):
    return sum(1 for r in records if r.status == "failed")


def check_records(records):
    """Raise ArgumentError unless records come from a single campaign (one record per cell and trial)."""
    seen = set()
    for record in records:
        key = record.cell_id + (record.trial,)
        if key in seen:
            raise ArgumentError("duplicate record for {} trial {}".format(record.cell_id, record.trial))
        seen.add(key)
    return records
