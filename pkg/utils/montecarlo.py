"""Monte-Carlo experiments: error probability over SNR, single-user TR/AR
equivalence, and empirical coupling-coefficient distributions.

Every trial draws its randomness from ``keyed_generator(seed, trial)`` so a
result only depends on the seed and the trial indices that produced it, never
on the batch size used for dispatch or on the number of workers.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .channel import ChannelSampler, get_preset
from .errors import SignalError
from .estimation import TrainingCsi, TrainingSequence, training_error_variance
from .randomness import keyed_generator
from .signal_model import SystemConfig
from .transceiver import (
    CsiModel,
    FixedChannel,
    GaussianCsi,
    Scheme,
    coupling_sample,
    draw_users,
    overlap_probability_exact,
)
from .trial_coordinator import BatchTask, TrialCoordinator

logger = logging.getLogger(__name__)

FIXED_CHANNEL_KEY = 0xFFFFFFFF
DEFAULT_TARGET_ERRORS = 100
BER_COLUMNS = ["snr_db", "scheme", "beta", "sigma_xi2", "iota", "pe", "stderr", "trials"]


def channel_source(config: SystemConfig, preset: str = "cm1", fixed_channel: bool = False,
                   seed: int = 0):
    sampler = ChannelSampler(get_preset(preset), config.bandwidth, config.delay_spread, config.iota)
    if fixed_channel:
        return FixedChannel(sampler(keyed_generator(seed, FIXED_CHANNEL_KEY)))
    return sampler


def users_for_load(N: int, beta: float) -> int:
    """K = max(1, round(beta * N)); beta = 0 means a single user."""
    return max(1, int(round(beta * N)))


def analytic_awgn_pe(snr_db, symbol_energy: float = 1.0):
    """Antipodal matched-filter error probability Q(sqrt(E / sigma_N^2))."""
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    return stats.norm.sf(np.sqrt(snr))


@dataclass(frozen=True)
class BerExperiment:
    """One error-probability curve.

    ``csi_mode`` is "gaussian" (per-tap error of variance config.csi_error_var)
    or "training" (each channel estimated from a simulated DL burst, so the
    error variance follows the SNR).
    """
    config: SystemConfig
    snr_grid_db: Tuple[float, ...]
    trials: int
    scheme: Scheme
    seed: int = 0
    preset: str = "cm1"
    csi_mode: str = "gaussian"
    training: Optional[TrainingSequence] = None
    target_errors: Optional[int] = DEFAULT_TARGET_ERRORS
    batch_size: int = 2000
    fixed_channel: bool = False
    normalize_prefilter: bool = True
    beta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.trials < 1:
            raise SignalError(f"trials must be >= 1, got {self.trials}")
        if self.batch_size < 1:
            raise SignalError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.snr_grid_db or not all(math.isfinite(s) for s in self.snr_grid_db):
            raise SignalError("the SNR grid must be non-empty and finite")
        if self.csi_mode not in ("gaussian", "training"):
            raise SignalError(f"unknown CSI mode '{self.csi_mode}'")
        if self.csi_mode == "training" and self.training is None:
            raise SignalError("training CSI mode needs a training sequence")

    @property
    def load(self) -> float:
        return self.config.load if self.beta is None else self.beta

    def noise_std(self, index: int) -> float:
        return math.sqrt(self.config.with_snr_db(self.snr_grid_db[index]).noise_var)

    def csi_error_var(self, index: int) -> float:
        if self.csi_mode == "training":
            noise_var = self.config.with_snr_db(self.snr_grid_db[index]).noise_var
            return training_error_variance(noise_var, self.training.amplitude, self.training.length)
        return self.config.csi_error_var

    def csi_groups(self) -> List[Tuple[CsiModel, List[int]]]:
        """CSI models and the SNR points sharing each; Gaussian CSI is SNR-independent."""
        indices = list(range(len(self.snr_grid_db)))
        if self.csi_mode == "gaussian":
            return [(GaussianCsi(self.config.csi_error_var), indices)]
        training = self.training.with_iota(self.config.iota)
        return [(TrainingCsi(training, self.config.with_snr_db(self.snr_grid_db[i])), [i])
                for i in indices]


@dataclass
class BerPoint:
    snr_db: float
    pe: float
    stderr: float
    trials: int
    errors: int
    sigma_xi2: float


@dataclass
class BerResult:
    experiment: BerExperiment
    points: List[BerPoint] = field(default_factory=list)

    @property
    def pe(self) -> np.ndarray:
        return np.array([p.pe for p in self.points])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])

    def to_frame(self) -> pd.DataFrame:
        exp = self.experiment
        rows = [{
            "snr_db": p.snr_db,
            "scheme": exp.scheme.value,
            "beta": exp.load,
            "sigma_xi2": p.sigma_xi2,
            "iota": exp.config.iota,
            "pe": p.pe,
            "stderr": p.stderr,
            "trials": p.trials,
        } for p in self.points]
        return pd.DataFrame(rows, columns=BER_COLUMNS)


@dataclass
class TrialDraws:
    """Per-trial quantities that do not depend on the noise level."""
    signal: np.ndarray
    interference: np.ndarray
    symbol: np.ndarray
    noise: np.ndarray

    def decisions(self, noise_std: float) -> np.ndarray:
        return self.signal + self.interference + noise_std * self.noise

    def errors(self, noise_std: float) -> int:
        return int(np.count_nonzero(np.sign(self.decisions(noise_std)) != np.sign(self.symbol)))


def draw_trials(config: SystemConfig, scheme: Scheme, seed: int, trials: range, source,
                csi: CsiModel, normalize_prefilter: bool = True) -> TrialDraws:
    amplitude = math.sqrt(config.symbol_energy)
    signal, interference, symbol, noise = [], [], [], []
    for trial in trials:
        rng = keyed_generator(seed, trial)
        users = draw_users(config, scheme, rng, source, csi)
        coupling = coupling_sample(scheme, users, config, 0, normalize_prefilter)
        b = amplitude * rng.choice(np.array([-1.0, 1.0]), size=config.K)
        signal.append(coupling.a_self * b[0])
        interference.append(float(np.dot(coupling.a_cross, b[1:])) if config.K > 1 else 0.0)
        symbol.append(b[0])
        noise.append(rng.standard_normal())
    return TrialDraws(np.array(signal), np.array(interference), np.array(symbol), np.array(noise))


@dataclass(frozen=True)
class BerBatch:
    experiment: BerExperiment
    start: int
    stop: int
    active: Tuple[bool, ...]


def ber_batch_worker(batch: BerBatch) -> np.ndarray:
    """Error counts per SNR point for one batch; -1 marks points not simulated."""
    exp = batch.experiment
    errors = np.full(len(exp.snr_grid_db), -1, dtype=np.int64)
    source = channel_source(exp.config, exp.preset, exp.fixed_channel, exp.seed)
    for csi, indices in exp.csi_groups():
        active = [i for i in indices if batch.active[i]]
        if not active:
            continue
        draws = draw_trials(exp.config, exp.scheme, exp.seed, range(batch.start, batch.stop),
                            source, csi, exp.normalize_prefilter)
        for i in active:
            errors[i] = draws.errors(exp.noise_std(i))
    return errors


def _standard_error(pe: float, trials: int) -> float:
    return math.sqrt(pe * (1.0 - pe) / trials) if trials else float("nan")


def run_ber(exp: BerExperiment, coordinator: Optional[TrialCoordinator] = None) -> BerResult:
    """Error probability per SNR point with deterministic early stopping.

    A point stops after the first batch (in trial order) that brings its error
    count to ``target_errors``, or at ``trials``.
    """
    coordinator = coordinator or TrialCoordinator({"ber": ber_batch_worker}, workers=1)
    coordinator.handlers.setdefault("ber", ber_batch_worker)
    n_points = len(exp.snr_grid_db)
    bounds = [(s, min(s + exp.batch_size, exp.trials)) for s in range(0, exp.trials, exp.batch_size)]
    errors = np.zeros(n_points, dtype=np.int64)
    counted = np.zeros(n_points, dtype=np.int64)
    done = np.zeros(n_points, dtype=bool)

    logger.info(f"BER {exp.scheme.value}: K={exp.config.K}, N={exp.config.N}, iota={exp.config.iota}, "
                f"{n_points} SNR points, up to {exp.trials} trials")
    cursor = 0
    while cursor < len(bounds) and not done.all():
        window = bounds[cursor:cursor + coordinator.workers]
        active = tuple(bool(not d) for d in done)
        tasks = [BatchTask("ber", BerBatch(exp, start, stop, active)) for start, stop in window]
        for (start, stop), batch_errors in zip(window, coordinator.run(tasks)):
            for i in range(n_points):
                if done[i]:
                    continue
                errors[i] += batch_errors[i]
                counted[i] += stop - start
                if exp.target_errors and errors[i] >= exp.target_errors:
                    done[i] = True
        cursor += len(window)

    result = BerResult(exp)
    for i, snr in enumerate(exp.snr_grid_db):
        pe = errors[i] / counted[i]
        result.points.append(BerPoint(snr_db=snr, pe=float(pe), stderr=_standard_error(pe, counted[i]),
                                      trials=int(counted[i]), errors=int(errors[i]),
                                      sigma_xi2=exp.csi_error_var(i)))
        logger.info(f"  {exp.scheme.value} {snr:g} dB: {errors[i]} errors in {counted[i]} trials")
    return result


def run_ber_grid(base: SystemConfig, schemes: Sequence[Scheme], pairs: Sequence[Tuple[float, float]],
                 snr_grid_db: Sequence[float], trials: int, seed: int = 0,
                 coordinator: Optional[TrialCoordinator] = None, **options) -> pd.DataFrame:
    """One curve per (scheme, (beta, sigma_xi2)) pair, concatenated in CSV layout."""
    frames = []
    for beta, sigma_xi2 in pairs:
        config = base.replace(K=users_for_load(base.N, beta), csi_error_var=sigma_xi2)
        for scheme in schemes:
            exp = BerExperiment(config=config, snr_grid_db=tuple(snr_grid_db), trials=trials,
                                scheme=Scheme.parse(scheme), seed=seed, beta=beta, **options)
            frames.append(run_ber(exp, coordinator).to_frame())
    return pd.concat(frames, ignore_index=True)


@dataclass
class EquivalenceReport:
    snr_db: float
    csi_error_var: float
    trials: int
    ks_statistic: float
    p_value: float
    pe_ar: float
    pe_tr: float
    stderr_ar: float
    stderr_tr: float
    decisions_ar: np.ndarray = field(repr=False)
    decisions_tr: np.ndarray = field(repr=False)

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.stderr_ar, self.stderr_tr)

    @property
    def passed(self) -> bool:
        gap = abs(self.pe_tr - self.pe_ar)
        return self.p_value >= 0.01 and gap <= 3 * self.combined_stderr + 1e-15

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: KS D={self.ks_statistic:.4f} (p={self.p_value:.3g}), "
                f"Pe AR={self.pe_ar:.4g}, Pe TR={self.pe_tr:.4g}, "
                f"3 combined std errors={3 * self.combined_stderr:.3g}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "snr_db": self.snr_db, "sigma_xi2": self.csi_error_var, "trials": self.trials,
            "ks_statistic": self.ks_statistic, "p_value": self.p_value,
            "pe_ar": self.pe_ar, "pe_tr": self.pe_tr,
            "combined_stderr": self.combined_stderr, "passed": self.passed,
        }])


@dataclass(frozen=True)
class EquivalenceBatch:
    config: SystemConfig
    preset: str
    seed: int
    start: int
    stop: int
    normalize_prefilter: bool = True
    fixed_channel: bool = False


def equivalence_batch_worker(batch: EquivalenceBatch) -> Tuple[np.ndarray, np.ndarray]:
    """Paired AR/TR decision variables: identical channel, code, CSI error and noise draws."""
    config = batch.config
    source = channel_source(config, batch.preset, batch.fixed_channel, batch.seed)
    csi = GaussianCsi(config.csi_error_var)
    noise_std = math.sqrt(config.noise_var)
    trials = range(batch.start, batch.stop)
    ar = draw_trials(config, Scheme.AR, batch.seed, trials, source, csi)
    tr = draw_trials(config, Scheme.TR, batch.seed, trials, source, csi, batch.normalize_prefilter)
    return ar.decisions(noise_std) * np.sign(ar.symbol), tr.decisions(noise_std) * np.sign(tr.symbol)


def equivalence_test(config: SystemConfig, trials: int, seed: int = 0, snr_db: float = 6.0,
                     preset: str = "cm1", normalize_prefilter: bool = True, batch_size: int = 5000,
                     fixed_channel: bool = False,
                     coordinator: Optional[TrialCoordinator] = None) -> EquivalenceReport:
    """Single-user TR vs AR on paired draws.

    Decision variables are reported as sign(b_0) * z so both symbol
    hypotheses pool into one sample; an error is a non-positive value.
    """
    if config.K != 1:
        raise SignalError(f"the equivalence test is defined for a single user, got K={config.K}")
    if trials < 1:
        raise SignalError("trials must be >= 1")
    config = config.with_snr_db(snr_db)
    coordinator = coordinator or TrialCoordinator({}, workers=1)
    coordinator.handlers.setdefault("equivalence", equivalence_batch_worker)
    tasks = [BatchTask("equivalence", EquivalenceBatch(config, preset, seed, start,
                                                       min(start + batch_size, trials),
                                                       normalize_prefilter, fixed_channel))
             for start in range(0, trials, batch_size)]
    results = coordinator.run(tasks)
    z_ar = np.concatenate([r[0] for r in results])
    z_tr = np.concatenate([r[1] for r in results])

    ks = stats.ks_2samp(z_tr, z_ar)
    pe_ar = float(np.mean(z_ar <= 0))
    pe_tr = float(np.mean(z_tr <= 0))
    report = EquivalenceReport(snr_db=snr_db, csi_error_var=config.csi_error_var, trials=trials,
                               ks_statistic=float(ks.statistic), p_value=float(ks.pvalue),
                               pe_ar=pe_ar, pe_tr=pe_tr,
                               stderr_ar=_standard_error(pe_ar, trials),
                               stderr_tr=_standard_error(pe_tr, trials),
                               decisions_ar=z_ar, decisions_tr=z_tr)
    logger.info(f"Equivalence at {snr_db:g} dB, sigma_xi2={config.csi_error_var:g}: {report.summary()}")
    return report


def tr_atom_probability(N: int, L: int, iota: int) -> float:
    """Probability that an overlapping TR interferer peaks exactly at q_k (perfect CSI)."""
    M = N * iota
    return 1.0 / (M * overlap_probability_exact(N, L, iota))


@dataclass
class CouplingStats:
    scheme: Scheme
    csi_error_var: float
    cross: np.ndarray = field(repr=False)
    self_: np.ndarray = field(repr=False)
    attempts: int
    zero_count: int
    bin_edges: np.ndarray = field(repr=False)

    @property
    def overlap_fraction(self) -> float:
        return self.cross.size / self.attempts

    @property
    def zero_mass(self) -> float:
        """Fraction of all sampled pairs whose cross coupling is exactly zero."""
        return self.zero_count / self.attempts

    @property
    def variance(self) -> float:
        return float(np.var(self.cross))

    @property
    def kurtosis(self) -> float:
        return float(stats.kurtosis(self.cross, fisher=False))

    @property
    def atom_mass(self) -> float:
        return float(np.mean(np.abs(self.cross - 1.0) < 1e-9))

    @property
    def mixture_variance(self) -> float:
        """Var of the (1 - f) delta_0 + f P_hat mixture."""
        return float(np.mean(self.cross ** 2) * self.overlap_fraction)

    def cross_density(self) -> np.ndarray:
        density, _ = np.histogram(self.cross, bins=self.bin_edges, density=True)
        return density

    def self_density(self) -> np.ndarray:
        density, _ = np.histogram(self.self_, bins=self.bin_edges, density=True)
        return density

    def to_frame(self) -> pd.DataFrame:
        centers = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        return pd.DataFrame({
            "coupling": centers,
            "scheme": self.scheme.value,
            "sigma_xi2": self.csi_error_var,
            "cross_density": self.cross_density(),
            "self_density": self.self_density(),
        })

    def moments(self) -> Dict[str, float]:
        return {
            "variance": self.variance, "kurtosis": self.kurtosis, "zero_mass": self.zero_mass,
            "overlap_fraction": self.overlap_fraction, "atom_mass": self.atom_mass,
            "self_mean": float(np.mean(self.self_)), "samples": int(self.cross.size),
        }


@dataclass(frozen=True)
class CouplingBatch:
    config: SystemConfig
    scheme: Scheme
    preset: str
    seed: int
    start: int
    stop: int


def coupling_batch_worker(batch: CouplingBatch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per attempt: overlap flag, cross coupling of user 1 into user 0, self coupling of user 0."""
    config = batch.config
    source = channel_source(config, batch.preset)
    csi = GaussianCsi(config.csi_error_var)
    overlap, cross, self_ = [], [], []
    for attempt in range(batch.start, batch.stop):
        users = draw_users(config, batch.scheme, keyed_generator(batch.seed, attempt), source, csi)
        coupling = coupling_sample(batch.scheme, users, config)
        overlap.append(users[1].has_channel)
        cross.append(coupling.a_cross[0])
        self_.append(coupling.a_self)
    return np.array(overlap, dtype=bool), np.array(cross), np.array(self_)


def coupling_histogram(config: SystemConfig, scheme: Scheme, csi_error_var: float, samples: int,
                       seed: int = 0, preset: str = "cm1", bins: int = 200, batch_size: int = 5000,
                       coordinator: Optional[TrialCoordinator] = None) -> CouplingStats:
    """Empirical law of cross couplings between overlapping users and of self couplings.

    Pairs of users with independent uniform codes are drawn until ``samples``
    overlapping pairs were seen; the zero mass is taken over every pair drawn.
    """
    if samples < 1:
        raise SignalError("samples must be >= 1")
    if samples < 10_000:
        logger.warning(f"Only {samples} coupling samples requested; histograms will be noisy")
    scheme = Scheme.parse(scheme)
    pair_config = config.replace(K=2, csi_error_var=csi_error_var)
    coordinator = coordinator or TrialCoordinator({}, workers=1)
    coordinator.handlers.setdefault("coupling", coupling_batch_worker)

    overlap_parts, cross_parts, self_parts = [], [], []
    seen, cursor = 0, 0
    while seen < samples:
        tasks = []
        for _ in range(coordinator.workers):
            tasks.append(BatchTask("coupling", CouplingBatch(pair_config, scheme, preset, seed,
                                                             cursor, cursor + batch_size)))
            cursor += batch_size
        for overlap, cross, self_ in coordinator.run(tasks):
            overlap_parts.append(overlap)
            cross_parts.append(cross)
            self_parts.append(self_)
            seen += int(overlap.sum())

    overlap = np.concatenate(overlap_parts)
    cross = np.concatenate(cross_parts)
    self_ = np.concatenate(self_parts)
    # stop at the attempt that produced the last requested overlapping pair
    attempts = int(np.flatnonzero(overlap)[samples - 1]) + 1
    overlap, cross, self_ = overlap[:attempts], cross[:attempts], self_[:attempts]

    result = CouplingStats(scheme=scheme, csi_error_var=csi_error_var, cross=cross[overlap],
                           self_=self_, attempts=attempts, zero_count=int(np.count_nonzero(cross == 0)),
                           bin_edges=np.linspace(-1.0, 1.0, bins + 1))
    logger.info(f"Couplings {scheme.value}, sigma_xi2={csi_error_var:g}: var={result.variance:.4g}, "
                f"kurtosis={result.kurtosis:.3g}, overlap={result.overlap_fraction:.3g} "
                f"over {attempts} pairs")
    return result
