import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from aircomp.channel import (ChannelRealization, absorb_channel, evenly_spaced_channel, receive,
                             sample_rayleigh)

from conftest import within_se


def test_rayleigh_unit_power(rng):
    h = sample_rayleigh(100_000, rng)
    assert within_se(h**2, 1.0)


def test_rayleigh_positive(rng):
    assert np.all(sample_rayleigh(1000, rng) > 0)


def test_rayleigh_mean(rng):
    assert within_se(sample_rayleigh(100_000, rng), np.sqrt(np.pi / 4))


def test_rayleigh_rejects_zero(rng):
    with pytest.raises(ValueError):
        sample_rayleigh(0, rng)


def test_evenly_spaced():
    assert_allclose(evenly_spaced_channel(8), np.linspace(0.1, 1.9, 8))
    assert evenly_spaced_channel(5)[[0, -1]].tolist() == [0.1, 1.9]


def test_channel_realization_validates():
    with pytest.raises(ValueError):
        ChannelRealization(np.array([1.0, np.nan]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        ChannelRealization(np.ones(2), np.array([1.0, 0.0]))


def test_receive_noiseless_sum():
    assert receive(np.ones(3), np.array([1.0, 2.0, 3.0]), 0.0) == 6.0


def test_receive_pure_noise_variance(rng):
    ys = receive(np.zeros(2), np.ones((100_000, 2)), 2.5, rng)
    assert ys.shape == (100_000,)
    assert within_se((ys - ys.mean()) ** 2, 2.5)


def test_receive_mean(rng):
    b, x = np.array([0.5, -1.0, 2.0]), np.array([1.0, 2.0, 0.5])
    ys = receive(b, np.tile(x, (100_000, 1)), 1.0, rng)
    assert within_se(ys, b @ x)


def test_receive_linear():
    b = np.array([0.3, -1.2])
    x1, x2 = np.array([1.0, 2.0]), np.array([-0.5, 4.0])
    assert receive(b, x1 + x2, 0.0) == pytest.approx(receive(b, x1, 0.0) + receive(b, x2, 0.0), abs=1e-15)


def test_receive_dimension_mismatch():
    with pytest.raises(ValueError):
        receive(np.ones(3), np.ones(2), 0.0)


def test_absorb():
    assert_array_equal(absorb_channel(np.ones(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    assert_array_equal(absorb_channel([2.0, 0.5], [1.0, 4.0]), [2.0, 2.0])


def test_absorb_round_trip(rng):
    h, raw = rng.uniform(0.1, 2, 6), rng.standard_normal(6)
    assert_allclose(absorb_channel(h, raw) / h, raw, rtol=1e-15)


def test_absorb_mismatch():
    with pytest.raises(ValueError):
        absorb_channel(np.ones(2), np.ones(3))
