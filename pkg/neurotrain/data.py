# encoding: utf-8
"""
Datasets behind one interface: IDX image sets (MNIST, Fashion-MNIST),
CIFAR-10 binary batches and seeded synthetic spatiotemporal pattern tasks.

Every Dataset holds flattened float32 features in [0, 1], int labels and
disjoint train/test index arrays. Synthetic tasks also carry their spike
rasters [n x T x d].
"""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
import gzip
import logging
import os
import struct

import numpy as np

from neurotrain.errors import ArgumentError, ConfigError, FormatError, LengthError, RangeError
from neurotrain.tensor_core import DTYPE, Rng, permutation, rand_bernoulli
from neurotrain.utils import find_files, grouper

logger = logging.getLogger(__name__)

DATA_ENV = "NEUROTRAIN_DATA"

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
IDX_DTYPES = OrderedDict([
    (0x08, np.dtype(">u1")),
    (0x09, np.dtype(">i1")),
    (0x0B, np.dtype(">i2")),
    (0x0C, np.dtype(">i4")),
    (0x0D, np.dtype(">f4")),
    (0x0E, np.dtype(">f8")),
])

CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass(frozen=True)
class Dataset():
    """
    An immutable labelled dataset.

    :param features:  [n x d] float32 in [0, 1].
    :param labels:  [n] int64 in [0, n_classes).
    :param train_idx:  indices of the training split.
    :param test_idx:  indices of the test split, disjoint from train_idx.
    :param image_shape:  (C, H, W) when features are flattened images.
    :param rasters:  [n x T x d] spike rasters for temporal tasks.
    """
    name: str
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    n_classes: int
    image_shape: tuple = None
    rasters: np.ndarray = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ArgumentError("features {} and labels {} disagree".format(self.features.shape, self.labels.shape))
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise RangeError("labels outside [0, {})".format(self.n_classes))
        if self.features.size and (self.features.min() < 0 or self.features.max() > 1):
            raise RangeError("features outside [0, 1]")
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise ArgumentError("train and test splits overlap")
        if self.image_shape is not None and int(np.prod(self.image_shape)) != self.features.shape[1]:
            raise ArgumentError("image shape {} does not flatten to {}".format(self.image_shape, self.features.shape[1]))

    @property
    def input_size(self):
        return int(self.features.shape[1])

    def __len__(self):
        return int(self.labels.shape[0])

    def split(self, name):
        if name == "train":
            return self.train_idx
        elif name == "test":
            return self.test_idx
        raise ArgumentError("unknown split '{}', expected 'train' or 'test'".format(name))

    def info(self):
        return DatasetInfo(self.name, self.input_size, self.n_classes, self.image_shape,
                           None if self.rasters is None else int(self.rasters.shape[1]))

    def limited(self, train_limit=None, test_limit=None):
        """Keep only the first train_limit / test_limit samples of each split."""
        train = self.train_idx if train_limit is None else self.train_idx[:train_limit]
        test = self.test_idx if test_limit is None else self.test_idx[:test_limit]
        return replace(self, train_idx=train, test_idx=test)


@dataclass(frozen=True)
class DatasetInfo():
    """Shape facts about a dataset that are known without loading it."""
    name: str
    input_size: int
    n_classes: int
    image_shape: tuple = None
    timesteps: int = None


# IDX container

def _open(filename, mode):
    if str(filename).endswith(".gz"):
        return gzip.open(filename, mode)
    return open(filename, mode)


def read_idx(filename):
    """
    Read an IDX file into a numpy array with native byte order.

    :raises FormatError:  if the magic number is malformed or bytes trail the data.
    :raises LengthError:  if the file is truncated.
    """
    with _open(filename, "rb") as f:
        buf = f.read()
    if len(buf) < 4:
        raise LengthError("{} is truncated: no IDX header".format(filename))
    zero, code, ndim = struct.unpack(">HBB", buf[:4])
    if zero != 0 or code not in IDX_DTYPES:
        raise FormatError("{} has an invalid IDX magic 0x{:08x}".format(filename, struct.unpack(">I", buf[:4])[0]))
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise LengthError("{} is truncated inside the dimension header".format(filename))
    dims = struct.unpack(">{}I".format(ndim), buf[4:header])
    dtype = IDX_DTYPES[code]
    expected = header + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(buf) < expected:
        raise LengthError("{} is truncated: {} bytes, header promises {}".format(filename, len(buf), expected))
    if len(buf) > expected:
        raise FormatError("{} has {} bytes after the data".format(filename, len(buf) - expected))
    data = np.frombuffer(buf, dtype=dtype, count=int(np.prod(dims, dtype=np.int64)), offset=header)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def idx_magic(filename):
    """The magic number of an IDX file as a big-endian int (2051 for MNIST images)."""
    with _open(filename, "rb") as f:
        raw = f.read(4)
    if len(raw) < 4:
        raise LengthError("{} is truncated: no IDX header".format(filename))
    return struct.unpack(">I", raw)[0]


def write_idx(array, filename):
    """Write array as IDX; the type code follows the array dtype."""
    array = np.asarray(array)
    for code, dtype in IDX_DTYPES.items():
        if array.dtype.kind == dtype.kind and array.dtype.itemsize == dtype.itemsize:
            break
    else:
        raise ArgumentError("dtype {} has no IDX type code".format(array.dtype))
    with _open(filename, "wb") as out:
        out.write(struct.pack(">HBB", 0, code, array.ndim))
        out.write(struct.pack(">{}I".format(array.ndim), *array.shape))
        out.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def load_idx(images_path, labels_path, name="idx", n_classes=None):
    """
    Load an image/label IDX pair as a Dataset with every sample in the train split.

    Image files must have magic 2051 (uint8, 3 dims) or 2052 (uint8, 4 dims,
    channels first); label files magic 2049. Pixels are scaled by 1/255.
    """
    if idx_magic(images_path) not in (IDX_IMAGES, IDX_IMAGES + 1):
        raise FormatError("{} is not an IDX uint8 image file".format(images_path))
    if idx_magic(labels_path) != IDX_LABELS:
        raise FormatError("{} is not an IDX uint8 label file".format(labels_path))
    images = read_idx(images_path)
    labels = read_idx(labels_path).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise FormatError("{} holds {} images but {} holds {} labels".format(
            images_path, images.shape[0], labels_path, labels.shape[0]))
    image_shape = (1,) + images.shape[1:] if images.ndim == 3 else images.shape[1:]
    features = images.reshape(images.shape[0], -1).astype(DTYPE) / DTYPE(255)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    logger.debug("Loaded %d samples from %s", labels.shape[0], images_path)
    return Dataset(name, features, labels, np.arange(labels.shape[0]), np.arange(0),
                   n_classes, tuple(int(v) for v in image_shape))


def concat_splits(name, train, test):
    """Join a train-only and a test-only dataset into one with both splits."""
    n_train = len(train)
    rasters = None
    if train.rasters is not None and test.rasters is not None:
        rasters = np.concatenate([train.rasters, test.rasters])
    return Dataset(name,
                   np.concatenate([train.features, test.features]),
                   np.concatenate([train.labels, test.labels]),
                   np.arange(n_train), np.arange(n_train, n_train + len(test)),
                   max(train.n_classes, test.n_classes), train.image_shape, rasters)


def _find(directory, candidates):
    for candidate in candidates:
        for suffix in ("", ".gz"):
            path = os.path.join(directory, candidate + suffix)
            if os.path.isfile(path):
                return path
    raise FileNotFoundError("dataset file not found: {}".format(os.path.join(directory, candidates[0])))


def load_mnist_dir(directory, name="mnist"):
    """Load the four standard MNIST-layout IDX files (optionally gzipped) from directory."""
    parts = []
    for prefix in ("train", "t10k"):
        images = _find(directory, ["{}-images-idx3-ubyte".format(prefix), "{}-images.idx3-ubyte".format(prefix)])
        labels = _find(directory, ["{}-labels-idx1-ubyte".format(prefix), "{}-labels.idx1-ubyte".format(prefix)])
        parts.append(load_idx(images, labels, name, n_classes=10))
    return concat_splits(name, parts[0], parts[1])


# CIFAR-10 binary batches

def read_cifar10(filename):
    """
    Read a CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes (R, G, B planes).

    :return:  (images uint8 [n x 3 x 32 x 32], labels uint8 [n]).
    :raises LengthError:  if the file is not a whole number of records.
    """
    with _open(filename, "rb") as f:
        buf = f.read()
    if len(buf) % CIFAR_RECORD:
        raise LengthError("{} has {} bytes, not a multiple of the {}-byte record".format(
            filename, len(buf), CIFAR_RECORD))
    records = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return records[:, 1:].reshape(-1, 3, 32, 32).copy(), records[:, 0].copy()


def write_cifar10(images, labels, filename):
    images = np.asarray(images, dtype=np.uint8).reshape(-1, CIFAR_RECORD - 1)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    if images.shape[0] != labels.shape[0]:
        raise ArgumentError("{} images but {} labels".format(images.shape[0], labels.shape[0]))
    with open(filename, "wb") as out:
        out.write(np.concatenate([labels, images], axis=1).tobytes())


def load_cifar10_dir(directory, name="cifar10"):
    """Load every data_batch_*.bin found under directory as the train split and test_batch.bin as the test split."""
    def load(files):
        images, labels = zip(*(read_cifar10(f) for f in files))
        images, labels = np.concatenate(images), np.concatenate(labels).astype(np.int64)
        features = images.reshape(images.shape[0], -1).astype(DTYPE) / DTYPE(255)
        return Dataset(name, features, labels, np.arange(len(labels)), np.arange(0), 10, (3, 32, 32))
    train_files = list(find_files(directory, "data_batch_*.bin"))
    if not train_files:
        raise FileNotFoundError("dataset file not found: {}".format(os.path.join(directory, "data_batch_1.bin")))
    train = load(train_files)
    test = load([_find(directory, ["test_batch.bin"])])
    return concat_splits(name, train, test)


# Synthetic spatiotemporal patterns

@dataclass(frozen=True)
class SynthSpec():
    """Parameters of a synthetic pattern task."""
    n_classes: int = 4
    d: int = 32
    timesteps: int = 16
    noise: float = 0.05
    n_train: int = 160
    n_test: int = 80
    density: float = 0.3
    seed: int = 0

    def to_dict(self):
        return {"n_classes": self.n_classes, "d": self.d, "timesteps": self.timesteps, "noise": self.noise,
                "n_train": self.n_train, "n_test": self.n_test, "density": self.density, "seed": self.seed}


def synth_patterns(rng, n_classes, d, T, noise, n_train=160, n_test=80, density=0.3, name="synthetic"):
    """
    Noisy copies of per-class prototype spike rasters.

    Each class gets a fixed random binary prototype [T x d] with spike
    probability density; every sample is its class prototype with each bit
    flipped with probability noise. Features are the per-input spike rates.

    :raises ArgumentError:  if d < n_classes or sizes are not positive.
    :raises RangeError:  if noise is outside [0, 0.5).
    """
    if n_classes < 1 or T < 1 or n_train < 0 or n_test < 0:
        raise ArgumentError("n_classes and T must be >= 1, split sizes >= 0")
    if d < n_classes:
        raise ArgumentError("need d >= n_classes, got d={} n_classes={}".format(d, n_classes))
    if not 0.0 <= noise < 0.5:
        raise RangeError("noise must lie in [0, 0.5), got {}".format(noise))
    if not 0.0 < density < 1.0:
        raise RangeError("density must lie in (0, 1), got {}".format(density))
    n = n_train + n_test
    prototypes = rand_bernoulli(rng.spawn("prototypes"), np.full((n_classes, T, d), density))
    labels = np.arange(n, dtype=np.int64) % n_classes
    labels = labels[permutation(rng.spawn("labels"), n)]
    flips = rand_bernoulli(rng.spawn("noise"), np.full((n, T, d), noise))
    rasters = np.abs(prototypes[labels] - flips).astype(DTYPE)
    features = rasters.mean(axis=1).astype(DTYPE)
    return Dataset(name, features, labels, np.arange(n_train), np.arange(n_train, n),
                   n_classes, None, rasters)


def nearest_prototype_accuracy(dataset, prototypes):
    """Accuracy of assigning each raster to the prototype at smallest Hamming distance."""
    flat = dataset.rasters.reshape(len(dataset), -1)
    distances = np.abs(flat[:, None, :] - prototypes.reshape(prototypes.shape[0], -1)[None]).sum(axis=2)
    return float(np.mean(np.argmin(distances, axis=1) == dataset.labels))


def class_prototypes(dataset):
    """Majority raster per class; recovers the prototypes when noise < 0.5."""
    return np.stack([np.rint(dataset.rasters[dataset.labels == c].mean(axis=0))
                     for c in range(dataset.n_classes)])


# Batching

def batch_indices(dataset, split, batch_size, rng=None):
    """
    Yield index arrays covering a split, shuffled when rng is given.

    The final batch is shorter when the split does not divide evenly.

    :raises ArgumentError:  if batch_size < 1 or the split is empty.
    """
    if batch_size < 1:
        raise ArgumentError("batch_size must be >= 1, got {}".format(batch_size))
    indices = dataset.split(split)
    if len(indices) == 0:
        raise ArgumentError("split '{}' of {} is empty".format(split, dataset.name))
    if rng is not None:
        indices = indices[permutation(rng, len(indices))]
    for chunk in grouper(batch_size, indices):
        yield np.asarray(chunk, dtype=np.int64)


def batches(dataset, split, batch_size, rng=None):
    """Yield (features, labels) batches of a split; see batch_indices."""
    for idx in batch_indices(dataset, split, batch_size, rng):
        yield dataset.features[idx], dataset.labels[idx]


# Registry

@dataclass(frozen=True)
class DatasetEntry():
    info: DatasetInfo
    loader: object            # callable(data_dir) -> Dataset
    needs_data_dir: bool = True


_REGISTRY = OrderedDict()


def register_dataset(name, info, loader, needs_data_dir=True):
    """Make a dataset available to campaigns under name."""
    _REGISTRY[name] = DatasetEntry(info, loader, needs_data_dir)


def register_synthetic(name, synth, registry=None):
    registry = _REGISTRY if registry is None else registry

    def load(data_dir):
        return synth_patterns(Rng(synth.seed, ("dataset", name)), synth.n_classes, synth.d, synth.timesteps,
                              synth.noise, synth.n_train, synth.n_test, synth.density, name=name)
    registry[name] = DatasetEntry(DatasetInfo(name, synth.d, synth.n_classes, None, synth.timesteps),
                                  load, needs_data_dir=False)


class DatasetCatalog():
    """
    The datasets one campaign can see: the registered ones plus its own synthetic tasks.

    Loaded datasets are cached; a Dataset is immutable and shared between experiments.
    """

    def __init__(self, data_dir=None, synthetic=None):
        self.data_dir = data_dir
        self.entries = OrderedDict(_REGISTRY)
        for name, synth in (synthetic or {}).items():
            register_synthetic(name, synth, self.entries)
        self._cache = {}

    def names(self):
        return list(self.entries)

    def info(self, name):
        try:
            return self.entries[name].info
        except KeyError:
            raise ConfigError("unknown dataset '{}', expected one of {}".format(name, ", ".join(self.entries)))

    def load(self, name, train_limit=None, test_limit=None):
        key = (name, train_limit, test_limit)
        if key not in self._cache:
            entry = self.entries.get(name)
            if entry is None:
                self.info(name)
            if entry.needs_data_dir and not self.data_dir:
                raise ConfigError("dataset '{}' needs a data directory (--data-dir, data_dir or ${})".format(
                    name, DATA_ENV))
            logger.info("Loading dataset %s", name)
            dataset = entry.loader(self.data_dir)
            self._cache[key] = dataset.limited(train_limit, test_limit)
        return self._cache[key]


def dataset_info(name):
    return DatasetCatalog().info(name)


def resolve_data_dir(flag=None, configured=None):
    """--data-dir flag, then the config value, then $NEUROTRAIN_DATA."""
    return flag or configured or os.environ.get(DATA_ENV) or None


register_dataset("mnist", DatasetInfo("mnist", 784, 10, (1, 28, 28)),
                 lambda data_dir: load_mnist_dir(os.path.join(data_dir, "mnist"), "mnist"))
register_dataset("fmnist", DatasetInfo("fmnist", 784, 10, (1, 28, 28)),
                 lambda data_dir: load_mnist_dir(os.path.join(data_dir, "fashion-mnist"), "fmnist"))
register_dataset("cifar10", DatasetInfo("cifar10", 3072, 10, (3, 32, 32)),
                 lambda data_dir: load_cifar10_dir(os.path.join(data_dir, "cifar-10-batches-bin"), "cifar10"))
register_synthetic("synth", SynthSpec())
register_synthetic("synth_small", SynthSpec(n_classes=2, d=8, timesteps=8, noise=0.05, n_train=64, n_test=32))
# Desk-scale stand-ins for the neuromorphic benchmarks, with their input sizes and class counts.
register_synthetic("nmnist", SynthSpec(n_classes=10, d=2312, timesteps=20, noise=0.05, n_train=100, n_test=50,
                                       density=0.05, seed=1))
register_synthetic("shd", SynthSpec(n_classes=20, d=700, timesteps=25, noise=0.05, n_train=100, n_test=50,
                                    density=0.05, seed=2))


@dataclass
class BanditTask():
    """
    k-armed bandit.

    :param rewards:  reward per arm; with stochastic=True, the probability of a reward of 1.
    """
    rewards: list = field(default_factory=lambda: [1.0, 0.0])
    stochastic: bool = False

    def __post_init__(self):
        if len(self.rewards) < 2:
            raise ArgumentError("a bandit needs at least two arms")
        if self.stochastic and any(not 0.0 <= p <= 1.0 for p in self.rewards):
            raise RangeError("reward probabilities must lie in [0, 1]")

    @property
    def n_arms(self):
        return len(self.rewards)

    @property
    def best_arm(self):
        return int(np.argmax(self.rewards))

    def pull(self, actions, rng):
        """Rewards for an array of chosen arms."""
        actions = np.asarray(actions, dtype=np.int64)
        means = np.asarray(self.rewards, dtype=np.float64)[actions]
        if self.stochastic:
            return (rng.generator.random(actions.shape) < means).astype(np.float64)
        return means
