# encoding: utf-8
"""
Spike encoders turning [batch x d] features in [0, 1] into [T x batch x d] trains.
"""

from dataclasses import dataclass
import logging

import numpy as np

from neurotrain.errors import ArgumentError, ConfigError, DimensionError, RangeError
from neurotrain.tensor_core import DTYPE, rand_bernoulli

logger = logging.getLogger(__name__)

ENCODER_KINDS = ("poisson_rate", "latency", "direct_current", "raster")


@dataclass(frozen=True)
class EncoderSpec():
    """
    :param kind:  poisson_rate, latency, direct_current or raster.
    :param timesteps:  T >= 1 (ignored by raster, which keeps the raster's own T).
    :param max_rate:  spike probability per step at feature 1.0, in (0, 1].
    """
    kind: str = "poisson_rate"
    timesteps: int = 25
    max_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError("encoder kind must be one of {}, got '{}'".format(ENCODER_KINDS, self.kind),
                              "encoder.kind")
        if int(self.timesteps) != self.timesteps or self.timesteps < 1:
            raise ConfigError("timesteps must be an integer >= 1, got {}".format(self.timesteps),
                              "encoder.timesteps")
        if not 0.0 < self.max_rate <= 1.0:
            raise ConfigError("max_rate must lie in (0, 1], got {}".format(self.max_rate), "encoder.max_rate")

    def to_dict(self):
        return {"kind": self.kind, "timesteps": self.timesteps, "max_rate": self.max_rate}


def check_features(features):
    features = np.asarray(features)
    if features.ndim != 2:
        raise DimensionError("features must be [batch x d], got shape {}".format(features.shape))
    if features.size and (features.min() < 0.0 or features.max() > 1.0):
        raise RangeError("features must lie in [0, 1], got range [{}, {}]".format(features.min(), features.max()))
    return features


def poisson_rate(features, timesteps, max_rate, rng):
    """Bernoulli(feature*max_rate) per step; one draw per (t, sample, feature) in row-major order."""
    p = np.broadcast_to(features * max_rate, (timesteps,) + features.shape)
    return rand_bernoulli(rng, p)


def latency(features, timesteps):
    """One spike per nonzero feature at t = round((1 - f)*(T - 1)); zero features stay silent."""
    spikes = np.zeros((timesteps,) + features.shape, dtype=DTYPE)
    times = np.rint((1.0 - features) * (timesteps - 1)).astype(np.int64)
    b, i = np.nonzero(features > 0)
    spikes[times[b, i], b, i] = 1
    return spikes


def encode(spec, features, rng=None, raster=None):
    """
    Encode a batch of features.

    :param spec:  EncoderSpec.
    :param features:  [batch x d] in [0, 1].
    :param rng:  Rng, needed for poisson_rate.
    :param raster:  [batch x T x d] binary rasters, needed for kind raster.
    :return:  [T x batch x d] float32.
    :raises RangeError:  if a feature lies outside [0, 1].
    """
    features = check_features(features)
    if spec.kind == "poisson_rate":
        if rng is None:
            raise ArgumentError("poisson_rate encoding needs an rng")
        return poisson_rate(features, spec.timesteps, spec.max_rate, rng)
    elif spec.kind == "latency":
        return latency(features, spec.timesteps)
    elif spec.kind == "direct_current":
        return np.broadcast_to(features.astype(DTYPE), (spec.timesteps,) + features.shape).copy()
    if raster is None:
        raise ArgumentError("raster encoding needs the dataset's rasters")
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[0] != features.shape[0] or raster.shape[2] != features.shape[1]:
        raise DimensionError("raster shape {} does not match features {}".format(raster.shape, features.shape))
    return np.ascontiguousarray(raster.transpose(1, 0, 2), dtype=DTYPE)
