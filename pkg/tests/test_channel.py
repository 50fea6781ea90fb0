"""Tests for cluster/ray channel sampling and tap discretization."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from utils.channel import (
    ChannelSampler,
    ContinuousChannel,
    DiscreteChannel,
    SvParams,
    autocorrelation,
    channel_to_frame,
    discretize,
    get_preset,
    normalize_energy,
    rms_delay_spread,
    sample_discrete_channel,
    sample_sv_channel,
    tap_count,
)
from utils.errors import ChannelError


class TestPresets:

    def test_cm1_lookup_is_case_insensitive(self):
        assert get_preset("CM1") is get_preset("cm1")

    def test_unknown_preset(self):
        with pytest.raises(ChannelError, match="unknown channel preset"):
            get_preset("cm9")

    def test_parameters_must_be_positive(self):
        with pytest.raises(ChannelError, match="strictly positive"):
            SvParams(0.0233, -2.5, 7.1, 4.3, 3.4, 3.4)


class TestContinuousChannel:

    def test_first_path_at_zero_and_sorted(self):
        ch = sample_sv_channel(get_preset("cm1"), 7)
        assert ch.delays[0] == 0.0
        assert np.all(np.diff(ch.delays) >= 0)
        assert len(ch) == len(ch.paths)

    def test_same_seed_same_realization(self):
        a = sample_sv_channel(get_preset("cm1"), 42)
        b = sample_sv_channel(get_preset("cm1"), 42)
        assert_array_equal(a.delays, b.delays)
        assert_array_equal(a.amplitudes, b.amplitudes)

    def test_rejects_unsorted_delays(self):
        with pytest.raises(ChannelError):
            ContinuousChannel(np.array([0.0, 2.0, 1.0]), np.ones(3))

    def test_rms_delay_spread_two_paths(self):
        ch = ContinuousChannel(np.array([0.0, 10.0]), np.array([1.0, -1.0]))
        assert rms_delay_spread(ch) == pytest.approx(5.0)

    @pytest.mark.slow
    def test_cm1_rms_delay_spread_is_a_few_ns(self):
        spreads = [rms_delay_spread(sample_sv_channel(get_preset("cm1"), seed)) for seed in range(300)]
        assert 2.5 < np.mean(spreads) < 10.0


class TestDiscretize:

    def test_paths_binned_and_truncated(self):
        ch = ContinuousChannel(np.array([0.0, 0.4, 1.2, 2.5, 60.0]), np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        d = discretize(ch, bandwidth_W=1e9, delay_spread_Td=3e-9, impulsiveness=1)
        assert_allclose(d.taps, [3.0, 3.0, 4.0, 0.0])
        assert d.tap_spacing == pytest.approx(1e-9)

    def test_zero_delay_spread_keeps_one_tap(self):
        ch = ContinuousChannel(np.array([0.0, 3.0]), np.array([-0.7, 1.0]))
        d = discretize(ch, 1e9, 0.0, 1)
        assert_allclose(d.taps, [-0.7])

    def test_empty_after_truncation(self):
        ch = ContinuousChannel(np.array([10.0, 12.0]), np.array([1.0, 1.0]))
        with pytest.raises(ChannelError, match="empty channel after truncation"):
            discretize(ch, 1e9, 5e-9, 1)

    def test_rejects_bad_bandwidth(self):
        ch = ContinuousChannel(np.array([0.0]), np.array([1.0]))
        with pytest.raises(ChannelError, match="bandwidth must be positive"):
            discretize(ch, 0.0, 5e-9, 1)

    def test_tap_count_tolerates_rounding(self):
        assert tap_count(1e9, 50e-9) == 51
        assert tap_count(2e9, 50e-9) == 101


class TestNormalization:

    def test_unit_energy(self):
        d = normalize_energy(DiscreteChannel(np.array([3.0, 4.0]), 1e-9))
        assert d.energy == pytest.approx(1.0)
        assert_allclose(d.taps, [0.6, 0.8])

    def test_zero_energy(self):
        with pytest.raises(ChannelError, match="zero-energy channel"):
            normalize_energy(DiscreteChannel(np.zeros(4), 1e-9))

    def test_autocorrelation_symmetric_with_unit_peak(self, unit_channel):
        gamma = autocorrelation(unit_channel)
        assert gamma.size == 2 * len(unit_channel) - 1
        assert_array_equal(gamma, gamma[::-1])
        assert gamma[len(unit_channel) - 1] == pytest.approx(1.0)
        assert np.max(np.abs(gamma)) == pytest.approx(1.0)


class TestSampler:

    def test_sampled_channels_are_unit_energy(self):
        sampler = ChannelSampler(get_preset("cm1"), 1e9, 50e-9)
        rng = np.random.default_rng(3)
        for _ in range(20):
            ch = sampler(rng)
            assert len(ch) == 51
            assert ch.energy == pytest.approx(1.0)

    def test_sample_discrete_channel_is_reproducible(self):
        a = sample_discrete_channel(get_preset("cm1"), 1e9, 20e-9, 1, 11)
        b = sample_discrete_channel(get_preset("cm1"), 1e9, 20e-9, 1, 11)
        assert_array_equal(a.taps, b.taps)

    def test_frame_export(self, unit_channel, tmp_path):
        frame = channel_to_frame(unit_channel)
        assert list(frame.columns) == ["tap", "value"]
        assert_allclose(frame["value"], unit_channel.taps)
        path = tmp_path / "channel.csv"
        unit_channel.to_csv(path)
        assert path.read_text().splitlines()[0] == "tap,value"
