"""Tests for PN training sequences and the DL/UL channel estimators."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from utils.channel import DiscreteChannel
from utils.errors import EstimationError
from utils.estimation import (
    ESTIMATION_COLUMNS,
    EstimatorKind,
    TrainingCsi,
    dl_estimate,
    frame_budget,
    gen_mseq,
    periodic_acf,
    received_length,
    simulate_dl_training,
    simulate_ul_training,
    training_error_variance,
    training_gram,
    training_sweep,
    ul_estimate,
    ul_trainings,
)
from utils.signal_model import SystemConfig
from utils.transceiver import Scheme


def _convolution_matrix(training, taps):
    u = training.upsampled
    columns = []
    for lag in range(taps):
        shift = np.zeros(taps)
        shift[lag] = 1.0
        columns.append(np.convolve(u, shift))
    return np.column_stack(columns)


def _channel(seed, taps):
    values = np.random.default_rng(seed).normal(size=taps)
    return DiscreteChannel(values / np.linalg.norm(values), 1e-9)


class TestMSequence:

    @pytest.mark.parametrize("m", [3, 5, 8])
    def test_two_valued_periodic_autocorrelation(self, m):
        training = gen_mseq(m)
        n = 2 ** m - 1
        rho = periodic_acf(training)
        assert training.length == n
        assert set(np.unique(training.symbols)) == {-1.0, 1.0}
        assert rho[0] == pytest.approx(n)
        assert_allclose(rho[1:], -1.0, atol=1e-9)

    def test_amplitude_scales_energy(self):
        training = gen_mseq(4, amplitude=0.5)
        assert training.energy == pytest.approx(0.25 * 15)

    def test_upsampling_places_one_symbol_per_chip(self):
        training = gen_mseq(3, iota=3)
        u = training.upsampled
        assert u.size == 21
        assert_allclose(u[::3], training.symbols)
        assert np.count_nonzero(u) == 7

    @pytest.mark.parametrize("m", [1, 21])
    def test_unsupported_register_length(self, m):
        with pytest.raises(EstimationError, match="unsupported register length"):
            gen_mseq(m)

    def test_zero_state_rejected(self):
        with pytest.raises(EstimationError, match="not all zero"):
            gen_mseq(4, seed_state=[0, 0, 0, 0])

    def test_seed_state_shifts_the_sequence(self):
        a = gen_mseq(5, seed_state=1)
        b = gen_mseq(5, seed_state=7)
        matches = [np.array_equal(np.roll(a.symbols, s), b.symbols) for s in range(a.length)]
        assert any(matches)


class TestDownlink:

    def test_error_variance_formula(self):
        assert training_error_variance(0.1, 1.0, 31) == pytest.approx(0.1 / 31)
        assert training_error_variance(1.0, 0.5, 63) == pytest.approx(1.0 / (0.25 * 63))
        with pytest.raises(EstimationError):
            training_error_variance(1.0, 0.0, 63)

    @pytest.mark.parametrize("iota", [1, 2])
    def test_noiseless_estimate_matches_the_correlation_oracle(self, iota):
        config = SystemConfig(N=64, L=3, iota=iota, noise_var=0.0)
        training = gen_mseq(5, amplitude=0.7, iota=iota)
        c = _channel(3, config.taps)
        Y = _convolution_matrix(training, config.taps)
        received = simulate_dl_training(c, training, 0.0, 0)
        assert received.size == received_length(training, config)
        assert_allclose(received, Y @ c.taps, atol=1e-12)

        c_hat, error_var = dl_estimate(received, training, config)
        assert_allclose(c_hat.taps, Y.T @ Y @ c.taps / training.energy, atol=1e-12)
        assert error_var == 0.0

    def test_noise_part_has_the_predicted_variance(self):
        config = SystemConfig(N=64, L=3, noise_var=0.5)
        training = gen_mseq(6)
        rng = np.random.default_rng(17)
        size = received_length(training, config)
        noise_only = [dl_estimate(rng.normal(0.0, np.sqrt(0.5), size), training, config)[0].taps
                      for _ in range(3000)]
        measured = np.var(np.concatenate(noise_only))
        assert measured == pytest.approx(training_error_variance(0.5, 1.0, 63), rel=0.08)

    def test_length_mismatch(self):
        config = SystemConfig(N=64, L=3)
        with pytest.raises(EstimationError, match="expected"):
            dl_estimate(np.zeros(10), gen_mseq(5), config)

    def test_training_csi_needs_matching_iota(self):
        with pytest.raises(EstimationError, match="iota"):
            TrainingCsi(gen_mseq(5, iota=1), SystemConfig(N=64, L=3, iota=2))

    def test_training_csi_estimates_the_channel(self):
        config = SystemConfig(N=64, L=3, noise_var=1e-6)
        training = gen_mseq(7)
        c = _channel(8, config.taps)
        c_hat = TrainingCsi(training, config)(c, Scheme.TR, np.random.default_rng(0))
        assert len(c_hat) == len(c)
        # sidelobe bias of a 127-chip sequence stays within a few percent
        assert np.linalg.norm(c_hat.taps - c.taps) < 0.1


class TestUplink:

    def test_zf_recovers_one_channel(self):
        config = SystemConfig(N=64, L=3, noise_var=0.0)
        training = gen_mseq(5)
        c = _channel(1, config.taps)
        y = simulate_ul_training([c], [training], 0.0, 0)
        estimate = ul_estimate(y, [training], EstimatorKind.zf(), config)
        assert_allclose(estimate.channels[0].taps, c.taps, atol=1e-10)
        assert estimate.metadata["estimator"] == "zf"

    def test_zf_separates_two_users(self):
        config = SystemConfig(N=64, L=3, noise_var=0.0)
        base = gen_mseq(5)
        trainings = [base, base.shifted(11)]
        channels = [_channel(1, config.taps), _channel(2, config.taps)]
        y = simulate_ul_training(channels, trainings, 0.0, 0)
        estimate = ul_estimate(y, trainings, EstimatorKind.zf(), config)
        assert len(estimate) == 2
        for got, want in zip(estimate, channels):
            assert_allclose(got.taps, want.taps, atol=1e-9)

    def test_gram_blocks(self):
        training = gen_mseq(4, iota=2)
        Y = _convolution_matrix(training, 5)
        assert_allclose(training_gram([training], 5), Y.T @ Y, atol=1e-12)

    def test_rank_deficient_zf(self):
        config = SystemConfig(N=64, L=3)
        base = gen_mseq(2)
        trainings = [base, base.shifted(1)]
        y = np.zeros(received_length(base, config))
        with pytest.raises(EstimationError, match="training rank-deficient"):
            ul_estimate(y, trainings, EstimatorKind.zf(), config)
        estimate = ul_estimate(y, trainings, EstimatorKind.rzf(0.1), config)
        assert len(estimate) == 2

    def test_mmse_shrinks_towards_zero(self):
        config = SystemConfig(N=64, L=3, noise_var=0.0)
        training = gen_mseq(4)
        c = _channel(5, config.taps)
        y = simulate_ul_training([c], [training], 0.0, 0)
        zf = ul_estimate(y, [training], EstimatorKind.zf(), config).channels[0]
        mmse = ul_estimate(y, [training], EstimatorKind.mmse(2.0), config).channels[0]
        assert mmse.norm < zf.norm

    def test_matched_filter_equals_approximate_zf(self):
        config = SystemConfig(N=64, L=3)
        training = gen_mseq(6)
        y = np.random.default_rng(2).normal(size=received_length(training, config))
        mf = ul_estimate(y, [training], EstimatorKind.mf(), config).channels[0]
        approx = ul_estimate(y, [training], EstimatorKind.zf(), config, approximate=True).channels[0]
        assert_allclose(mf.taps, approx.taps)

    def test_estimator_lookup(self):
        assert EstimatorKind.by_name("MMSE", noise_var=0.3) == EstimatorKind(1.0, 0.3, "mmse")
        with pytest.raises(EstimationError, match="unknown estimator"):
            EstimatorKind.by_name("lmmse")
        with pytest.raises(EstimationError):
            EstimatorKind.rzf(-1.0)

    def test_user_shifts_are_distinct_and_spaced(self):
        base = gen_mseq(5)
        for seed in range(200):
            trainings = ul_trainings(3, 5, seed, min_spacing=4)
            shifts = [next(s for s in range(base.length) if np.array_equal(np.roll(base.symbols, s), t.symbols))
                      for t in trainings]
            gaps = [min(abs(a - b), base.length - abs(a - b)) for i, a in enumerate(shifts) for b in shifts[i + 1:]]
            assert min(gaps) >= 4

    def test_distinct_shifts_without_room_for_the_spacing(self):
        trainings = ul_trainings(31, 5, 0, min_spacing=4)
        assert len({tuple(t.symbols) for t in trainings}) == 31
        with pytest.raises(EstimationError, match="distinct shifts"):
            ul_trainings(32, 5, 0)

    def test_mismatched_lengths(self):
        config = SystemConfig(N=64, L=3)
        with pytest.raises(EstimationError, match="same length"):
            ul_estimate(np.zeros(34), [gen_mseq(5), gen_mseq(4)], EstimatorKind.zf(), config)


class TestFrameBudget:

    def test_phases_and_data_fraction(self):
        schedule = frame_budget(n_dl=127, n_ul=63, n_data=1000, L=50)
        names = [p[0] for p in schedule.phases]
        assert names == ["dl_training", "dl_guard", "ul_training", "ul_guard", "data", "postamble"]
        assert schedule.phase("data") == (127 + 50 + 63 + 50, 127 + 50 + 63 + 50 + 1000)
        assert schedule.total_samples == 127 + 63 + 1000 + 3 * 50
        assert schedule.data_fraction == pytest.approx(1000 / (63 + 50 + 1000 + 50))

    def test_sampling_scales_with_iota(self):
        assert frame_budget(10, 10, 10, 2, iota=3).total_samples == 3 * (30 + 6)

    def test_degenerate_budget(self):
        assert frame_budget(0, 0, 0, 0).data_fraction == 0.0
        with pytest.raises(EstimationError):
            frame_budget(-1, 0, 0, 0)


class TestTrainingSweep:

    def test_noise_part_follows_the_prediction(self):
        config = SystemConfig.from_delay_spread(N=32, delay_spread=3e-9)
        frame = training_sweep(config, gen_mseq(5), [0.0, 10.0], trials=100, seed=3)
        assert list(frame.columns) == ESTIMATION_COLUMNS
        assert len(frame) == 2
        assert_allclose(frame["predicted_var"], [1.0 / 31, 0.1 / 31])
        assert_allclose(frame["dl_noise_var"], frame["predicted_var"], rtol=0.3)
        assert (frame["ul_mse"] > 0).all()

    def test_multi_user_zf_sweep_completes(self):
        config = SystemConfig.from_delay_spread(N=32, delay_spread=3e-9)
        frame = training_sweep(config, gen_mseq(5), [10.0, 30.0], trials=200, seed=1,
                               estimator="zf", users=4)
        assert len(frame) == 2
        assert (frame["users"] == 4).all()
        assert np.all(np.isfinite(frame["ul_mse"]))
        assert frame["ul_mse"].iloc[1] < frame["ul_mse"].iloc[0]
