import numpy as np
from numpy.testing import assert_array_equal
import pytest

from neurotrain.encoding import EncoderSpec, encode
from neurotrain.errors import ArgumentError, ConfigError, DimensionError, RangeError
from neurotrain.tensor_core import Rng


def encoder_spec_validation_test():
    with pytest.raises(ConfigError):
        EncoderSpec("delta")
    with pytest.raises(ConfigError):
        EncoderSpec(timesteps=0)
    with pytest.raises(ConfigError):
        EncoderSpec(max_rate=1.5)


def poisson_rate_test():
    features = np.array([[0.0, 0.5, 1.0]])
    spikes = encode(EncoderSpec("poisson_rate", timesteps=4000), features, Rng(0))
    assert spikes.shape == (4000, 1, 3)
    assert spikes.dtype == np.float32
    rates = spikes.mean(axis=0)[0]
    assert rates[0] == 0.0
    assert abs(rates[1] - 0.5) < 0.03
    assert rates[2] == 1.0
    assert_array_equal(spikes, encode(EncoderSpec("poisson_rate", timesteps=4000), features, Rng(0)))
    with pytest.raises(ArgumentError):
        encode(EncoderSpec(), features)


def poisson_max_rate_test():
    spikes = encode(EncoderSpec("poisson_rate", timesteps=4000, max_rate=0.2), np.ones((1, 1)), Rng(1))
    assert abs(spikes.mean() - 0.2) < 0.03


def latency_test():
    features = np.array([[1.0, 0.5, 0.0]])
    spikes = encode(EncoderSpec("latency", timesteps=5), features)
    assert spikes.sum(axis=0).tolist() == [[1, 1, 0]]
    assert spikes[0, 0, 0] == 1
    assert spikes[2, 0, 1] == 1


def direct_current_test():
    features = np.array([[0.25, 0.75]])
    currents = encode(EncoderSpec("direct_current", timesteps=3), features)
    assert currents.shape == (3, 1, 2)
    assert_array_equal(currents[2], features)


def raster_test():
    raster = np.zeros((2, 4, 3))
    raster[1, 2, 0] = 1
    spikes = encode(EncoderSpec("raster"), raster.mean(axis=1), raster=raster)
    assert spikes.shape == (4, 2, 3)
    assert spikes[2, 1, 0] == 1
    with pytest.raises(ArgumentError):
        encode(EncoderSpec("raster"), raster.mean(axis=1))
    with pytest.raises(DimensionError):
        encode(EncoderSpec("raster"), np.zeros((2, 5)), raster=raster)


def feature_range_test():
    with pytest.raises(RangeError):
        encode(EncoderSpec("latency"), np.array([[1.2]]))
    with pytest.raises(DimensionError):
        encode(EncoderSpec("latency"), np.zeros(3))
