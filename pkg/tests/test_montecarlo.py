"""Tests for the error-probability, equivalence and coupling experiments."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from utils.errors import SignalError
from utils.estimation import gen_mseq, training_error_variance
from utils.montecarlo import (
    BER_COLUMNS,
    BerExperiment,
    analytic_awgn_pe,
    coupling_histogram,
    equivalence_test,
    run_ber,
    run_ber_grid,
    tr_atom_probability,
    users_for_load,
)
from utils.signal_model import SystemConfig
from utils.transceiver import Scheme, overlap_probability_exact


@pytest.fixture
def awgn_config():
    """Zero delay spread: a single unit tap, so both receivers see plain AWGN."""
    return SystemConfig.from_delay_spread(N=8, delay_spread=0.0)


@pytest.fixture
def short_config():
    return SystemConfig.from_delay_spread(N=16, delay_spread=3e-9)


class TestHelpers:

    def test_users_for_load(self):
        assert users_for_load(200, 0.0) == 1
        assert users_for_load(200, 0.05) == 10
        assert users_for_load(200, 0.1) == 20

    def test_awgn_reference(self):
        assert analytic_awgn_pe(0.0) == pytest.approx(stats.norm.sf(1.0))
        assert_allclose(analytic_awgn_pe([10.0]), stats.norm.sf(np.sqrt([10.0])))

    def test_experiment_validation(self, short_config):
        with pytest.raises(SignalError):
            BerExperiment(short_config, (0.0,), trials=0, scheme="ar")
        with pytest.raises(SignalError, match="SNR grid"):
            BerExperiment(short_config, (), trials=10, scheme="ar")
        with pytest.raises(SignalError, match="training sequence"):
            BerExperiment(short_config, (0.0,), trials=10, scheme="tr", csi_mode="training")

    def test_training_mode_error_variance_follows_snr(self, short_config):
        training = gen_mseq(5, amplitude=0.5)
        exp = BerExperiment(short_config, (0.0, 10.0), trials=10, scheme="tr",
                            csi_mode="training", training=training)
        assert exp.csi_error_var(0) == pytest.approx(training_error_variance(1.0, 0.5, 31))
        assert exp.csi_error_var(1) == pytest.approx(training_error_variance(0.1, 0.5, 31))
        assert len(exp.csi_groups()) == 2


class TestErrorProbability:

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_single_tap_matches_awgn(self, scheme, awgn_config):
        exp = BerExperiment(awgn_config, (0.0, 4.0), trials=10000, scheme=scheme, seed=1,
                            target_errors=0, batch_size=2500)
        result = run_ber(exp)
        expected = analytic_awgn_pe([0.0, 4.0])
        assert np.all(np.abs(result.pe - expected) <= 4 * result.stderr)
        assert [p.trials for p in result.points] == [10000, 10000]

    def test_independent_of_batch_size(self, short_config):
        config = short_config.replace(K=3, csi_error_var=0.02)
        runs = [run_ber(BerExperiment(config, (0.0, 8.0), trials=1200, scheme="tr", seed=5,
                                      target_errors=0, batch_size=size))
                for size in (300, 1200)]
        assert_array_equal(runs[0].pe, runs[1].pe)

    def test_early_stop_on_error_count(self, short_config):
        exp = BerExperiment(short_config, (0.0, 30.0), trials=2000, scheme="ar", seed=2,
                            target_errors=20, batch_size=250)
        result = run_ber(exp)
        assert result.points[0].trials == 250
        assert result.points[0].errors >= 20
        assert result.points[1].trials == 2000

    def test_errors_never_grow_with_snr_for_a_single_user(self, short_config):
        exp = BerExperiment(short_config, (0.0, 3.0, 6.0, 9.0), trials=3000, scheme="tr", seed=4,
                            target_errors=0, batch_size=1000)
        errors = [p.errors for p in run_ber(exp).points]
        assert errors == sorted(errors, reverse=True)

    def test_grid_frame_layout(self, short_config):
        frame = run_ber_grid(short_config, ["ar", "tr"], [(0.0, 0.0), (0.125, 0.05)], [0.0, 10.0],
                             trials=200, seed=0, target_errors=0, batch_size=200)
        assert list(frame.columns) == BER_COLUMNS
        assert len(frame) == 8
        assert set(frame["beta"]) == {0.0, 0.125}
        assert frame.loc[frame["beta"] == 0.125, "sigma_xi2"].eq(0.05).all()

    def test_training_mode_runs_end_to_end(self, short_config):
        exp = BerExperiment(short_config, (0.0, 20.0), trials=400, scheme="tr", seed=6,
                            csi_mode="training", training=gen_mseq(5, amplitude=0.2),
                            target_errors=0, batch_size=400)
        result = run_ber(exp)
        assert result.pe[0] > result.pe[1]
        assert result.points[0].sigma_xi2 == pytest.approx(1.0 / (0.04 * 31))

    @pytest.mark.slow
    def test_training_csi_matches_gaussian_csi_of_the_same_variance(self):
        config = SystemConfig.from_delay_spread(N=32, delay_spread=10e-9)
        training = gen_mseq(9, amplitude=0.1)
        sigma_xi2 = training_error_variance(config.with_snr_db(6.0).noise_var, 0.1, 511)
        trained = run_ber(BerExperiment(config, (6.0,), trials=20000, scheme="tr", seed=10,
                                        csi_mode="training", training=training,
                                        target_errors=0, batch_size=5000))
        gaussian = run_ber(BerExperiment(config.replace(csi_error_var=sigma_xi2), (6.0,), trials=20000,
                                         scheme="tr", seed=11, target_errors=0, batch_size=5000))
        assert trained.points[0].sigma_xi2 == pytest.approx(sigma_xi2)
        combined = np.hypot(trained.stderr[0], gaussian.stderr[0])
        assert abs(trained.pe[0] - gaussian.pe[0]) <= 3 * combined

    @pytest.mark.slow
    def test_interference_floor(self):
        config = SystemConfig.from_delay_spread(N=20, delay_spread=5e-9, K=4)
        exp = BerExperiment(config, (30.0, 40.0), trials=20000, scheme="tr", seed=8,
                            target_errors=0, batch_size=5000)
        pe_30, pe_40 = run_ber(exp).pe
        assert pe_30 > 0
        assert 0.8 <= pe_40 / pe_30 <= 1.2


class TestEquivalence:

    def test_perfect_csi_decisions_coincide(self, short_config):
        report = equivalence_test(short_config, trials=2000, seed=3, snr_db=6.0, batch_size=700)
        assert_allclose(report.decisions_tr, report.decisions_ar, atol=1e-12)
        assert report.pe_ar == report.pe_tr
        assert report.passed
        assert report.to_frame()["passed"].iloc[0]

    def test_imperfect_csi_same_distribution(self):
        config = SystemConfig.from_delay_spread(N=32, delay_spread=10e-9, csi_error_var=0.05)
        report = equivalence_test(config, trials=4000, seed=12, snr_db=6.0)
        assert report.p_value >= 0.01
        assert report.passed
        assert report.summary().startswith("PASS")

    @pytest.mark.slow
    def test_unnormalized_prefilter_is_detected(self):
        config = SystemConfig.from_delay_spread(N=200, delay_spread=50e-9, csi_error_var=0.1)
        report = equivalence_test(config, trials=20000, seed=0, snr_db=6.0, normalize_prefilter=False)
        assert report.p_value < 1e-3
        assert not report.passed

    def test_single_user_only(self, short_config):
        with pytest.raises(SignalError, match="single user"):
            equivalence_test(short_config.replace(K=2), trials=10)


class TestCouplings:

    def test_tr_perfect_csi_atom_and_zero_mass(self, short_config):
        stats_ = coupling_histogram(short_config, Scheme.TR, 0.0, samples=4000, seed=1, batch_size=3000)
        f_exact = overlap_probability_exact(16, 3, 1)
        atom = tr_atom_probability(16, 3, 1)
        assert stats_.cross.size == 4000
        assert stats_.overlap_fraction == pytest.approx(f_exact, abs=0.025)
        assert stats_.atom_mass == pytest.approx(atom, abs=0.025)
        assert stats_.zero_mass == pytest.approx(1.0 - f_exact, abs=0.025)
        assert_allclose(stats_.self_, 1.0)

    def test_independent_of_batch_size(self, short_config):
        a = coupling_histogram(short_config, "ar", 0.01, samples=1500, seed=2, batch_size=700)
        b = coupling_histogram(short_config, "ar", 0.01, samples=1500, seed=2, batch_size=2500)
        assert a.attempts == b.attempts
        assert_array_equal(a.cross, b.cross)

    def test_moments_and_frame(self, short_config):
        stats_ = coupling_histogram(short_config, Scheme.AR, 0.0, samples=1000, seed=3, bins=50)
        moments = stats_.moments()
        assert moments["samples"] == 1000
        assert moments["variance"] == pytest.approx(np.var(stats_.cross))
        assert stats_.mixture_variance == pytest.approx(np.mean(stats_.cross ** 2) * stats_.overlap_fraction)
        frame = stats_.to_frame()
        assert len(frame) == 50
        assert np.sum(frame["cross_density"]) * (2.0 / 50) == pytest.approx(1.0)

    def test_atom_probability(self):
        assert tr_atom_probability(16, 3, 1) == pytest.approx(1.0 / (16 * 0.390625))

    @pytest.mark.parametrize("delay_spread, iota", [(5e-9, 1), (10e-9, 2)])
    def test_tr_atom_for_impulsive_chips(self, delay_spread, iota):
        config = SystemConfig.from_delay_spread(N=32, delay_spread=delay_spread, iota=iota)
        assert config.L == 5
        stats_ = coupling_histogram(config, Scheme.TR, 0.0, samples=6000, seed=4)
        expected = tr_atom_probability(32, 5, iota)
        stderr = np.sqrt(expected * (1.0 - expected) / stats_.cross.size)
        assert abs(stats_.atom_mass - expected) <= 3.5 * stderr


@pytest.mark.slow
class TestCouplingMoments:
    """CM1, W = 1 GHz, T_d = 50 ns, N = 200."""

    @pytest.fixture(scope="class")
    def cm1_config(self):
        return SystemConfig.from_delay_spread(N=200, delay_spread=50e-9)

    def test_perfect_csi(self, cm1_config):
        ar = coupling_histogram(cm1_config, Scheme.AR, 0.0, samples=20000, seed=0)
        tr = coupling_histogram(cm1_config, Scheme.TR, 0.0, samples=20000, seed=0)
        assert ar.variance == pytest.approx(0.0099, rel=0.25)
        assert tr.variance == pytest.approx(0.0173, rel=0.25)
        assert tr.kurtosis > ar.kurtosis

    def test_imperfect_csi(self, cm1_config):
        ar = coupling_histogram(cm1_config, Scheme.AR, 0.01, samples=20000, seed=1)
        tr = coupling_histogram(cm1_config, Scheme.TR, 0.01, samples=20000, seed=1)
        assert tr.variance == pytest.approx(0.0149, rel=0.30)
        assert tr.kurtosis > ar.kurtosis
