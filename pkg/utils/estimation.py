"""PN training sequences and linear channel estimators.

Downlink: every terminal correlates its received burst against the known
sequence (matched filter). Uplink: the base station estimates all K channels
jointly from the superposition of K training bursts with the (xi, zeta)
family of linear estimators, zhat = (xi * G + zeta * I)^-1 Y^T y with
G = Y^T Y.

Training matrices are never formed: Y^T y is a correlation and every block of
G is a banded Toeplitz matrix built from cross-correlations of two sequences.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg, signal

from .channel import ChannelSampler, DiscreteChannel, get_preset
from .errors import EstimationError
from .randomness import SeedLike, as_generator, keyed_generator
from .signal_model import SystemConfig
from .transceiver import Scheme

logger = logging.getLogger(__name__)

MIN_REGISTER = 2
MAX_REGISTER = 20


@dataclass(frozen=True, eq=False)
class TrainingSequence:
    """Antipodal training symbols phi in {-A_t, +A_t}^N_t, one per chip."""
    symbols: np.ndarray
    amplitude: float = 1.0
    iota: int = 1

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=float)
        if symbols.ndim != 1 or symbols.size == 0:
            raise EstimationError("a training sequence needs at least one symbol")
        if self.iota < 1:
            raise EstimationError(f"impulsiveness index must be >= 1, got {self.iota}")
        object.__setattr__(self, "symbols", symbols)

    @property
    def length(self) -> int:
        return self.symbols.size

    @property
    def energy(self) -> float:
        """||upsilon||^2 = A_t^2 * N_t."""
        return float(np.dot(self.symbols, self.symbols))

    @property
    def upsampled(self) -> np.ndarray:
        """upsilon = phi (x) e_1^iota: symbol i sits at sample i * iota."""
        out = np.zeros(self.length * self.iota)
        out[::self.iota] = self.symbols
        return out

    def with_iota(self, iota: int) -> "TrainingSequence":
        return TrainingSequence(self.symbols, self.amplitude, iota)

    def shifted(self, shift: int) -> "TrainingSequence":
        return TrainingSequence(np.roll(self.symbols, shift), self.amplitude, self.iota)


@dataclass(frozen=True)
class EstimatorKind:
    """Member (xi, zeta) of the linear estimator family."""
    xi: float
    zeta: float
    name: str = "custom"

    @classmethod
    def zf(cls) -> "EstimatorKind":
        return cls(1.0, 0.0, "zf")

    @classmethod
    def mf(cls) -> "EstimatorKind":
        return cls(0.0, 1.0, "mf")

    @classmethod
    def mmse(cls, noise_var: float) -> "EstimatorKind":
        return cls(1.0, float(noise_var), "mmse")

    @classmethod
    def rzf(cls, z: float) -> "EstimatorKind":
        if z < 0:
            raise EstimationError("RZF regularization must be >= 0")
        return cls(1.0, float(z), "rzf")

    @classmethod
    def by_name(cls, name: str, noise_var: float = 0.0, rzf_reg: float = 1e-3) -> "EstimatorKind":
        key = name.strip().lower()
        if key == "zf":
            return cls.zf()
        if key == "mf":
            return cls.mf()
        if key == "mmse":
            return cls.mmse(noise_var)
        if key == "rzf":
            return cls.rzf(rzf_reg)
        raise EstimationError(f"unknown estimator '{name}'; expected zf, rzf, mmse or mf")


@dataclass(frozen=True)
class UlEstimate:
    channels: List[DiscreteChannel]
    kind: EstimatorKind
    approximate: bool = False
    metadata: Dict[str, Union[str, float, bool]] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.channels)

    def __len__(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class FrameSchedule:
    """Four-phase frame: DL training, UL training, UL data, postamble.

    Each phase is (name, start, stop) in samples.
    """
    phases: List[Tuple[str, int, int]]
    data_fraction: float

    @property
    def total_samples(self) -> int:
        return self.phases[-1][2] if self.phases else 0

    def phase(self, name: str) -> Tuple[int, int]:
        for phase_name, start, stop in self.phases:
            if phase_name == name:
                return start, stop
        raise KeyError(name)


def _initial_state(m: int, seed_state) -> Optional[np.ndarray]:
    if seed_state is None:
        return None
    if isinstance(seed_state, (int, np.integer)):
        bits = [(int(seed_state) >> i) & 1 for i in range(m)]
    else:
        bits = [int(b) & 1 for b in seed_state]
    if len(bits) != m or not any(bits):
        raise EstimationError(f"LFSR state must be {m} bits, not all zero")
    return np.array(bits, dtype=np.int8)


def gen_mseq(register_length: int, seed_state=None, amplitude: float = 1.0,
             iota: int = 1) -> TrainingSequence:
    """Antipodal maximal-length sequence of length 2^m - 1."""
    m = int(register_length)
    if not MIN_REGISTER <= m <= MAX_REGISTER:
        raise EstimationError(
            f"unsupported register length {m}; supported range is {MIN_REGISTER}..{MAX_REGISTER}"
        )
    bits, _ = signal.max_len_seq(m, state=_initial_state(m, seed_state))
    symbols = amplitude * (1.0 - 2.0 * bits.astype(float))
    return TrainingSequence(symbols, amplitude, iota)


def periodic_acf(training: TrainingSequence) -> np.ndarray:
    """rho[i] = sum_n phi[n] phi[(n + i) mod N_t] on the chip-rate symbols."""
    phi = training.symbols
    spectrum = np.fft.rfft(phi)
    return np.fft.irfft(spectrum * np.conj(spectrum), n=phi.size)


def training_error_variance(noise_var: float, amplitude: float, length: int) -> float:
    """sigma_xi^2 = sigma_N^2 / (A_t^2 N_t)."""
    if amplitude <= 0 or length <= 0:
        raise EstimationError("training amplitude and length must be positive")
    return float(noise_var) / (amplitude ** 2 * length)


def received_length(training: TrainingSequence, config: SystemConfig) -> int:
    return (training.length + config.L) * config.iota


def simulate_dl_training(c: DiscreteChannel, training: TrainingSequence, noise_var: float,
                         rng_seed: SeedLike) -> np.ndarray:
    """y = upsilon * c + n, (N_t + L) * iota samples."""
    rng = as_generator(rng_seed)
    y = np.convolve(training.upsampled, c.taps)
    if noise_var > 0:
        y = y + rng.normal(0.0, np.sqrt(noise_var), size=y.size)
    return y


def dl_estimate(received: np.ndarray, training: TrainingSequence,
                config: SystemConfig) -> Tuple[DiscreteChannel, float]:
    """Matched-filter estimate c_hat = Y^T y / ||upsilon||^2 and its error variance."""
    received = np.asarray(received, dtype=float)
    expected = received_length(training, config)
    if received.size != expected:
        raise EstimationError(
            f"received training burst has {received.size} samples, expected {expected}"
        )
    upsilon = training.upsampled
    c_hat = np.correlate(received, upsilon, mode="valid") / training.energy
    error_var = config.noise_var / training.energy
    return DiscreteChannel(c_hat, 1.0 / config.bandwidth), error_var


def _lagged_dot(a: np.ndarray, b: np.ndarray, lag: int) -> float:
    """sum_p a[p] b[p + lag]."""
    n = a.size
    if lag >= 0:
        return float(np.dot(a[:n - lag], b[lag:]))
    return float(np.dot(a[-lag:], b[:n + lag]))


def _gram_block(u_k: np.ndarray, u_j: np.ndarray, taps: int) -> np.ndarray:
    column = [_lagged_dot(u_k, u_j, lag) for lag in range(taps)]
    row = [_lagged_dot(u_k, u_j, -lag) for lag in range(taps)]
    return linalg.toeplitz(column, row)


def training_gram(trainings: Sequence[TrainingSequence], taps: int) -> np.ndarray:
    """G = Y^T Y for Y = [Y_1 ... Y_K], each Y_k a (taps)-column convolution matrix."""
    upsampled = [t.upsampled for t in trainings]
    blocks = [[_gram_block(u_k, u_j, taps) for u_j in upsampled] for u_k in upsampled]
    return np.block(blocks)


def ul_estimate(received: np.ndarray, trainings: Sequence[TrainingSequence], kind: EstimatorKind,
                config: SystemConfig, approximate: bool = False) -> UlEstimate:
    received = np.asarray(received, dtype=float)
    if not trainings:
        raise EstimationError("uplink estimation needs at least one training sequence")
    lengths = {t.length for t in trainings}
    if len(lengths) != 1:
        raise EstimationError("all uplink training sequences must have the same length")
    expected = received_length(trainings[0], config)
    if received.size != expected:
        raise EstimationError(
            f"received training burst has {received.size} samples, expected {expected}"
        )

    taps = config.taps
    n_users = len(trainings)
    if received.size < n_users * taps and kind.zeta == 0:
        raise EstimationError(
            f"training rank-deficient: {received.size} observations for {n_users * taps} "
            "unknown taps; use RZF (zeta > 0) or longer training"
        )

    projections = [np.correlate(received, t.upsampled, mode="valid") for t in trainings]
    energies = np.array([t.energy for t in trainings])
    metadata: Dict[str, Union[str, float, bool]] = {
        "estimator": kind.name, "xi": kind.xi, "zeta": kind.zeta, "approximate_gram": approximate,
    }

    if kind.xi == 0:
        # matched filter, scaled to channel units by each user's training energy
        estimates = [p / (kind.zeta * e) for p, e in zip(projections, energies)]
    elif approximate:
        # G ~ ||upsilon||^2 I for long PN sequences
        estimates = [p / (kind.xi * e + kind.zeta) for p, e in zip(projections, energies)]
    else:
        normal = kind.xi * training_gram(trainings, taps) + kind.zeta * np.eye(n_users * taps)
        try:
            factor = linalg.cho_factor(normal, lower=True)
        except linalg.LinAlgError:
            logger.warning(f"Normal matrix for {kind.name} is not positive definite")
            raise EstimationError(
                "training rank-deficient; use RZF (zeta > 0) instead of ZF"
            ) from None
        z_hat = linalg.cho_solve(factor, np.concatenate(projections))
        estimates = np.split(z_hat, n_users)

    channels = [DiscreteChannel(est, 1.0 / config.bandwidth) for est in estimates]
    logger.debug(f"Estimated {n_users} uplink channels with {kind.name}")
    return UlEstimate(channels=channels, kind=kind, approximate=approximate, metadata=metadata)


def ul_trainings(n_users: int, register_length: int, rng_seed: SeedLike,
                 amplitude: float = 1.0, iota: int = 1, min_spacing: int = 1) -> List[TrainingSequence]:
    """One m-sequence per user, all with distinct cyclic shifts.

    Shifts are drawn from a randomly offset lattice of pitch ``min_spacing``
    when it has room for every user, otherwise from all distinct shifts.
    """
    rng = as_generator(rng_seed)
    base = gen_mseq(register_length, amplitude=amplitude, iota=iota)
    if n_users > base.length:
        raise EstimationError(f"{n_users} users need distinct shifts of a length-{base.length} sequence")
    pitch = max(1, int(min_spacing))
    slots = base.length // pitch
    if slots >= n_users:
        offset = int(rng.integers(0, pitch))
        shifts = offset + pitch * rng.choice(slots, size=n_users, replace=False)
    else:
        shifts = rng.choice(base.length, size=n_users, replace=False)
    return [base.shifted(int(s)) for s in shifts]


def simulate_ul_training(channels: Sequence[DiscreteChannel], trainings: Sequence[TrainingSequence],
                         noise_var: float, rng_seed: SeedLike) -> np.ndarray:
    if len(channels) != len(trainings):
        raise EstimationError("one training sequence per uplink channel is required")
    rng = as_generator(rng_seed)
    y = sum(np.convolve(t.upsampled, c.taps) for c, t in zip(channels, trainings))
    if noise_var > 0:
        y = y + rng.normal(0.0, np.sqrt(noise_var), size=y.size)
    return y


def frame_budget(n_dl: int, n_ul: int, n_data: int, L: int, iota: int = 1) -> FrameSchedule:
    """Phase boundaries in samples; every phase boundary carries an L*iota guard."""
    if min(n_dl, n_ul, n_data, L, iota) < 0:
        raise EstimationError("frame budget entries must be non-negative")
    guard = L * iota
    lengths = [
        ("dl_training", n_dl * iota), ("dl_guard", guard),
        ("ul_training", n_ul * iota), ("ul_guard", guard),
        ("data", n_data * iota), ("postamble", guard),
    ]
    phases, cursor = [], 0
    for name, length in lengths:
        phases.append((name, cursor, cursor + length))
        cursor += length
    occupied = n_ul + L + n_data + L
    fraction = n_data / occupied if occupied else 0.0
    return FrameSchedule(phases=phases, data_fraction=float(fraction))


@dataclass(frozen=True)
class TrainingCsi:
    """CSI model that estimates every channel from a simulated DL training burst."""
    training: TrainingSequence
    config: SystemConfig

    def __post_init__(self):
        if self.training.iota != self.config.iota:
            raise EstimationError(
                f"training sampled at iota={self.training.iota}, system uses iota={self.config.iota}"
            )

    @property
    def error_var(self) -> float:
        return self.config.noise_var / self.training.energy

    def __call__(self, c: DiscreteChannel, scheme: Scheme, rng: np.random.Generator) -> DiscreteChannel:
        y = simulate_dl_training(c, self.training, self.config.noise_var, rng)
        c_hat, _ = dl_estimate(y, self.training, self.config)
        return c_hat


ESTIMATION_COLUMNS = ["snr_db", "estimator", "users", "training_length", "amplitude",
                      "predicted_var", "dl_noise_var", "dl_mse", "ul_mse"]


def training_sweep(config: SystemConfig, training: TrainingSequence, snr_grid_db: Sequence[float],
                   trials: int, seed: int = 0, estimator: str = "zf", users: int = 1,
                   preset: str = "cm1") -> pd.DataFrame:
    """Empirical DL and UL estimation errors against sigma_N^2 / (A_t^2 N_t).

    ``dl_noise_var`` is the per-tap variance of the noise-driven part of the DL
    estimate; ``dl_mse`` and ``ul_mse`` also include the sequence sidelobe bias.
    """
    if trials < 1:
        raise EstimationError("trials must be >= 1")
    training = training.with_iota(config.iota)
    sampler = ChannelSampler(get_preset(preset), config.bandwidth, config.delay_spread, config.iota)
    register = int(round(np.log2(training.length + 1)))
    rows = []
    for index, snr in enumerate(snr_grid_db):
        point = config.with_snr_db(snr)
        kind = EstimatorKind.by_name(estimator, noise_var=point.noise_var)
        noise_part, dl_err, ul_err = [], [], []
        for trial in range(trials):
            rng = keyed_generator(seed, index, trial)
            channels = [sampler(rng) for _ in range(users)]
            y = simulate_dl_training(channels[0], training, point.noise_var, rng)
            c_hat, _ = dl_estimate(y, training, point)
            clean = np.convolve(training.upsampled, channels[0].taps)
            c_clean, _ = dl_estimate(clean, training, point)
            noise_part.append(c_hat.taps - c_clean.taps)
            dl_err.append(c_hat.taps - channels[0].taps)

            trainings = ul_trainings(users, register, rng, training.amplitude, config.iota,
                                     min_spacing=config.L + 1)
            y_ul = simulate_ul_training(channels, trainings, point.noise_var, rng)
            estimate = ul_estimate(y_ul, trainings, kind, point)
            ul_err.extend(e.taps - c.taps for e, c in zip(estimate, channels))
        rows.append({
            "snr_db": float(snr),
            "estimator": kind.name,
            "users": users,
            "training_length": training.length,
            "amplitude": training.amplitude,
            "predicted_var": training_error_variance(point.noise_var, training.amplitude, training.length),
            "dl_noise_var": float(np.var(np.concatenate(noise_part))),
            "dl_mse": float(np.mean(np.concatenate(dl_err) ** 2)),
            "ul_mse": float(np.mean(np.concatenate(ul_err) ** 2)),
        })
        logger.info(f"Estimation {snr:g} dB: predicted {rows[-1]['predicted_var']:.3g}, "
                    f"DL noise variance {rows[-1]['dl_noise_var']:.3g}")
    return pd.DataFrame(rows, columns=ESTIMATION_COLUMNS)
