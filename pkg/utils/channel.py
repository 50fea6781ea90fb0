"""Cluster/ray multipath channels and their sampled tap representation.

Continuous-time realizations follow the Saleh-Valenzuela construction used by
the IEEE 802.15.3a channel models: Poisson cluster arrivals, Poisson ray
arrivals inside each cluster, doubly exponential mean power decay, lognormal
fading per ray and an equiprobable sign. Realizations are binned at the system
bandwidth, truncated at the delay spread and normalized to unit energy.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from .errors import ChannelError
from .randomness import SeedLike, as_generator

logger = logging.getLogger(__name__)

# Rays and clusters are generated up to this many decay constants.
HORIZON_DECAYS = 10.0
MAX_REDRAWS = 100


@dataclass(frozen=True)
class SvParams:
    """Cluster/ray model parameters (rates in 1/ns, decays in ns, fading in dB)."""
    cluster_rate: float
    ray_rate: float
    cluster_decay: float
    ray_decay: float
    cluster_fading_db: float
    ray_fading_db: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not np.isfinite(value) or value <= 0:
                raise ChannelError(f"SvParams.{name} must be strictly positive, got {value}")


PRESETS: Dict[str, SvParams] = {
    # Line-of-sight, 0-4 m
    "cm1": SvParams(
        cluster_rate=0.0233,
        ray_rate=2.5,
        cluster_decay=7.1,
        ray_decay=4.3,
        cluster_fading_db=3.3941,
        ray_fading_db=3.3941,
    ),
}


def get_preset(name: str) -> SvParams:
    try:
        return PRESETS[name.strip().lower()]
    except KeyError:
        raise ChannelError(
            f"unknown channel preset '{name}'; available: {', '.join(sorted(PRESETS))}"
        ) from None


@dataclass(frozen=True, eq=False)
class ContinuousChannel:
    """Multipath realization: path delays in ns and real amplitudes."""
    delays: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        amplitudes = np.asarray(self.amplitudes, dtype=float)
        if delays.ndim != 1 or delays.shape != amplitudes.shape:
            raise ChannelError("delays and amplitudes must be 1-D arrays of equal length")
        if delays.size == 0:
            raise ChannelError("a continuous channel needs at least one path")
        if np.any(delays < 0) or np.any(np.diff(delays) < 0):
            raise ChannelError("path delays must be non-negative and non-decreasing")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def paths(self) -> List[Tuple[float, float]]:
        return list(zip(self.delays.tolist(), self.amplitudes.tolist()))

    def __len__(self) -> int:
        return self.delays.size


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    """Resolved taps c[0..L*iota] spaced 1/W seconds apart."""
    taps: np.ndarray
    tap_spacing: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 1 or taps.size == 0:
            raise ChannelError("a discrete channel needs a non-empty 1-D tap vector")
        object.__setattr__(self, "taps", taps)

    @property
    def energy(self) -> float:
        return float(np.dot(self.taps, self.taps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.taps))

    def __len__(self) -> int:
        return self.taps.size

    def with_taps(self, taps: np.ndarray) -> "DiscreteChannel":
        return DiscreteChannel(taps=taps, tap_spacing=self.tap_spacing)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tap": np.arange(self.taps.size), "value": self.taps})

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def _poisson_arrivals(rng: np.random.Generator, rate: float, limit: float) -> np.ndarray:
    """Arrival times on [0, limit) of a Poisson process with a first arrival at 0."""
    chunk = int(rate * limit * 1.5) + 16
    times = np.cumsum(rng.exponential(1.0 / rate, size=chunk))
    while times[-1] < limit:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        times = np.concatenate((times, more))
    return np.concatenate(([0.0], times[times < limit]))


def sample_sv_channel(params: SvParams, rng_seed: SeedLike) -> ContinuousChannel:
    rng = as_generator(rng_seed)
    db_per_neper = 10.0 / np.log(10.0)
    cluster_limit = HORIZON_DECAYS * params.cluster_decay
    ray_limit = HORIZON_DECAYS * params.ray_decay

    delays, amplitudes = [], []
    cluster_start = 0.0
    while cluster_start < cluster_limit:
        ray_delays = _poisson_arrivals(rng, params.ray_rate, ray_limit)
        cluster_fade = rng.normal(0.0, params.cluster_fading_db)
        ray_fade = rng.normal(0.0, params.ray_fading_db, size=ray_delays.size)
        mean_power_db = -db_per_neper * (cluster_start / params.cluster_decay
                                         + ray_delays / params.ray_decay)
        magnitude = 10.0 ** ((mean_power_db + cluster_fade + ray_fade) / 20.0)
        sign = rng.choice(np.array([-1.0, 1.0]), size=ray_delays.size)
        delays.append(cluster_start + ray_delays)
        amplitudes.append(sign * magnitude)
        cluster_start += rng.exponential(1.0 / params.cluster_rate)

    delays = np.concatenate(delays)
    amplitudes = np.concatenate(amplitudes)
    order = np.argsort(delays, kind="stable")
    return ContinuousChannel(delays=delays[order], amplitudes=amplitudes[order])


def rms_delay_spread(ch: ContinuousChannel) -> float:
    """Power-weighted RMS delay spread in ns."""
    power = ch.amplitudes ** 2
    total = power.sum()
    mean = np.dot(power, ch.delays) / total
    second = np.dot(power, ch.delays ** 2) / total
    return float(np.sqrt(max(second - mean ** 2, 0.0)))


def tap_count(bandwidth_hz: float, delay_spread_s: float) -> int:
    """floor(T_d * W) + 1, tolerant to the rounding of products like 50e-9 * 1e9."""
    return int(np.floor(delay_spread_s * bandwidth_hz + 1e-9)) + 1


def discretize(ch: ContinuousChannel, bandwidth_W: float, delay_spread_Td: float,
               impulsiveness: int) -> DiscreteChannel:
    if bandwidth_W <= 0 or delay_spread_Td < 0:
        raise ChannelError("bandwidth must be positive and delay spread non-negative")
    if int(impulsiveness) < 1:
        raise ChannelError(f"impulsiveness index must be >= 1, got {impulsiveness}")

    n_taps = tap_count(bandwidth_W, delay_spread_Td)
    samples_per_ns = bandwidth_W / 1e9
    position = ch.delays * samples_per_ns
    keep = position <= delay_spread_Td * bandwidth_W + 1e-9
    if not np.any(keep):
        raise ChannelError("empty channel after truncation")

    bins = np.floor(position[keep] + 1e-12).astype(int)
    bins = np.minimum(bins, n_taps - 1)
    taps = np.bincount(bins, weights=ch.amplitudes[keep], minlength=n_taps)
    return DiscreteChannel(taps=taps, tap_spacing=1.0 / bandwidth_W)


def normalize_energy(ch: DiscreteChannel) -> DiscreteChannel:
    norm = np.linalg.norm(ch.taps)
    if norm == 0:
        raise ChannelError("zero-energy channel")
    return ch.with_taps(ch.taps / norm)


def autocorrelation(ch: DiscreteChannel) -> np.ndarray:
    """gamma[m] = sum_l c[l] c[l+m] for m = -(len-1)..(len-1)."""
    gamma = np.correlate(ch.taps, ch.taps, mode="full")
    # exact symmetry; np.correlate may differ in the last ulp between the two halves
    return 0.5 * (gamma + gamma[::-1])


@dataclass(frozen=True)
class ChannelSampler:
    """Draws unit-energy discrete channels for one system configuration."""
    params: SvParams
    bandwidth_hz: float
    delay_spread_s: float
    impulsiveness: int = 1

    def __call__(self, rng_seed: SeedLike) -> DiscreteChannel:
        rng = as_generator(rng_seed)
        for attempt in range(MAX_REDRAWS):
            try:
                continuous = sample_sv_channel(self.params, rng)
                discrete = discretize(continuous, self.bandwidth_hz,
                                      self.delay_spread_s, self.impulsiveness)
                return normalize_energy(discrete)
            except ChannelError as e:
                logger.warning(f"Channel redraw {attempt + 1}: {e}")
        raise ChannelError(f"no usable channel after {MAX_REDRAWS} realizations")


def sample_discrete_channel(params: SvParams, bandwidth_hz: float, delay_spread_s: float,
                            impulsiveness: int, rng_seed: SeedLike) -> DiscreteChannel:
    return ChannelSampler(params, bandwidth_hz, delay_spread_s, impulsiveness)(rng_seed)


def channel_to_frame(ch: DiscreteChannel) -> pd.DataFrame:
    """One row per tap: index and value."""
    return ch.to_frame()
