"""Time-hopping codes, convolution operators and time-reversal prefilters.

Banded Toeplitz products such as C x or C T x are never materialized; each one
is a short convolution placed at the active sample of the hopping code.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import DiscreteChannel, tap_count
from .errors import ConfigError, Diagnostic, SignalError
from .randomness import SeedLike, as_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of one link-level setup.

    Attributes:
        N: chips per symbol
        K: number of users (user 0 is the one being decoded)
        iota: impulsiveness index, samples per chip
        bandwidth: W in Hz; the chip duration is iota / W
        L: channel length in chips, the channel has L*iota + 1 taps
        symbol_energy: E
        noise_var: sigma_N^2
        csi_error_var: per-tap estimation error variance sigma_xi^2
    """
    N: int
    K: int = 1
    iota: int = 1
    bandwidth: float = 1e9
    L: int = 50
    symbol_energy: float = 1.0
    noise_var: float = 1.0
    csi_error_var: float = 0.0
    warnings: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        problems = []
        if self.iota < 1:
            problems.append(Diagnostic("fatal", "iota", f"impulsiveness index must be >= 1, got {self.iota}"))
        if self.N < 1:
            problems.append(Diagnostic("fatal", "N", f"need at least one chip per symbol, got {self.N}"))
        if self.K < 1:
            problems.append(Diagnostic("fatal", "K", f"need at least one user, got {self.K}"))
        if self.L < 0:
            problems.append(Diagnostic("fatal", "L", f"channel length must be >= 0, got {self.L}"))
        if self.bandwidth <= 0:
            problems.append(Diagnostic("fatal", "bandwidth", "bandwidth must be positive"))
        for name in ("symbol_energy", "noise_var", "csi_error_var"):
            if getattr(self, name) < 0:
                problems.append(Diagnostic("fatal", name, "variances and energies must be >= 0"))
        if problems:
            raise ConfigError("invalid system configuration", problems)

        notes = []
        if self.N < 2 * self.L:
            notes.append(f"N={self.N} < 2L={2 * self.L}; border effects will be significant")
        for note in notes:
            logger.warning(note)
        object.__setattr__(self, "warnings", tuple(notes))

    @classmethod
    def from_delay_spread(cls, N: int, delay_spread: float, iota: int = 1,
                          bandwidth: float = 1e9, **kwargs) -> "SystemConfig":
        """L = floor(T_d * W / iota), so that L*iota/W = T_d on the chip grid."""
        L = (tap_count(bandwidth, delay_spread) - 1) // max(int(iota), 1)
        return cls(N=N, iota=iota, bandwidth=bandwidth, L=L, **kwargs)

    @property
    def chip_duration(self) -> float:
        return self.iota / self.bandwidth

    @property
    def delay_spread(self) -> float:
        return self.L * self.iota / self.bandwidth

    @property
    def taps(self) -> int:
        return self.L * self.iota + 1

    @property
    def samples_per_symbol(self) -> int:
        return self.N * self.iota

    @property
    def frame_length(self) -> int:
        """Received samples per symbol, (N + 2L) * iota; no window ever spills past it."""
        return (self.N + 2 * self.L) * self.iota

    @property
    def load(self) -> float:
        return self.K / self.N

    @property
    def snr_db(self) -> float:
        if self.noise_var == 0:
            return float("inf")
        return float(10 * np.log10(self.symbol_energy / self.noise_var))

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        noise_var = self.symbol_energy / 10 ** (snr_db / 10)
        return self.replace(noise_var=noise_var)

    def replace(self, **changes) -> "SystemConfig":
        values = {name: getattr(self, name) for name in
                  ("N", "K", "iota", "bandwidth", "L", "symbol_energy", "noise_var", "csi_error_var")}
        values.update(changes)
        return SystemConfig(**values)


@dataclass(frozen=True)
class SpreadingVector:
    """x = s (x) e_l^iota: one active sample at j_x = (nu - 1) * iota + l (1-based)."""
    hop_index: int
    sub_chip_offset: int
    iota: int = 1

    @property
    def position(self) -> int:
        return (self.hop_index - 1) * self.iota + self.sub_chip_offset

    @property
    def start(self) -> int:
        """0-based index of the active sample."""
        return self.position - 1

    def as_vector(self, N: int) -> np.ndarray:
        x = np.zeros(N * self.iota)
        x[self.start] = 1.0
        return x


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    """Nonzero window of h = C x (AR) or h = C T x (TR), starting at window_start."""
    samples: np.ndarray
    window_start: int

    @property
    def window_stop(self) -> int:
        return self.window_start + self.samples.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))

    def sample_at(self, index: int) -> float:
        offset = index - self.window_start
        if 0 <= offset < self.samples.size:
            return float(self.samples[offset])
        return 0.0

    def overlaps(self, other: "EffectiveChannel") -> bool:
        return self.window_start < other.window_stop and other.window_start < self.window_stop

    def inner(self, other: "EffectiveChannel") -> float:
        lo = max(self.window_start, other.window_start)
        hi = min(self.window_stop, other.window_stop)
        if lo >= hi:
            return 0.0
        a = self.samples[lo - self.window_start:hi - self.window_start]
        b = other.samples[lo - other.window_start:hi - other.window_start]
        return float(np.dot(a, b))

    def to_frame_vector(self, frame_length: int) -> np.ndarray:
        out = np.zeros(frame_length)
        stop = min(self.window_stop, frame_length)
        out[self.window_start:stop] = self.samples[:stop - self.window_start]
        return out


def make_th_code(N: int, iota: int, rng_seed: SeedLike) -> SpreadingVector:
    if N < 1 or iota < 1:
        raise SignalError(f"need N >= 1 and iota >= 1, got N={N}, iota={iota}")
    rng = as_generator(rng_seed)
    hop = int(rng.integers(1, N + 1))
    offset = int(rng.integers(1, iota + 1))
    return SpreadingVector(hop_index=hop, sub_chip_offset=offset, iota=iota)


def convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise SignalError("convolution operands must be non-empty")
    return np.convolve(a, b)


def perturb_channel(c: DiscreteChannel, csi_error_var: float, rng_seed: SeedLike) -> DiscreteChannel:
    """c_hat = c + xi with xi ~ N(0, sigma_xi^2 I); not renormalized."""
    if csi_error_var < 0:
        raise SignalError("estimation error variance must be >= 0")
    if csi_error_var == 0:
        return c.with_taps(c.taps.copy())
    rng = as_generator(rng_seed)
    xi = rng.normal(0.0, np.sqrt(csi_error_var), size=c.taps.size)
    return c.with_taps(c.taps + xi)


def tr_prefilter(c_hat: DiscreteChannel, normalize: bool = True) -> np.ndarray:
    """t = reverse(c_hat) / ||c_hat||.

    ``normalize=False`` keeps the raw reversed estimate; it breaks the
    transmit-energy constraint and exists only as a negative control.
    """
    norm = np.linalg.norm(c_hat.taps)
    if norm == 0:
        raise SignalError("cannot build a time-reversal prefilter from a zero channel")
    reversed_taps = c_hat.taps[::-1]
    return reversed_taps / norm if normalize else reversed_taps.copy()


def effective_channel(c: DiscreteChannel, prefilter: Optional[np.ndarray], x: SpreadingVector,
                      frame_length: Optional[int] = None) -> EffectiveChannel:
    samples = c.taps if prefilter is None else convolve(c.taps, prefilter)
    start = x.start
    if frame_length is not None:
        if start >= frame_length:
            raise SignalError(f"active sample {start} outside a frame of {frame_length} samples")
        # spillover past the symbol frame is discarded
        samples = samples[:frame_length - start]
    return EffectiveChannel(samples=np.array(samples, dtype=float), window_start=start)


def peak_index(config: SystemConfig, x: SpreadingVector) -> int:
    """q = L*iota + j_x in 1-based terms, returned 0-based."""
    return config.L * config.iota + x.start
