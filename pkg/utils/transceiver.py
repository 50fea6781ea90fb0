"""Decision statistics of the All-Rake receiver and of time-reversal prefiltering
with a 1Rake receiver, and the coupling coefficients that parameterize them.

Every decision variable has the form

    z_k = a_kk b_k + sum_{j != k} a_kj b_j + nu_k,    nu_k ~ N(0, sigma_N^2)

For AR the receiver projects onto its estimated effective channel, for TR the
receiver samples one delay, q_k = L*iota + j_x.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from .channel import DiscreteChannel
from .errors import SignalError
from .randomness import SeedLike, as_generator
from .signal_model import (
    EffectiveChannel,
    SpreadingVector,
    SystemConfig,
    effective_channel,
    make_th_code,
    peak_index,
    tr_prefilter,
)

logger = logging.getLogger(__name__)


class Scheme(str, Enum):
    AR = "ar"
    TR = "tr"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise SignalError(f"unknown scheme '{value}'; expected 'ar' or 'tr'") from None


@dataclass(frozen=True)
class CouplingSample:
    a_self: float
    a_cross: List[float]
    scheme: Scheme


@dataclass(frozen=True)
class DecisionVariable:
    z: float
    signal: float
    interference: float
    noise: float


@dataclass(frozen=True, eq=False)
class UserLink:
    """One user's hopping code, true channel and the estimate its link relies on.

    ``channel`` is None for users drawn without a channel because their window
    cannot reach the decoded user's.
    """
    code: SpreadingVector
    channel: Optional[DiscreteChannel] = None
    estimate: Optional[DiscreteChannel] = None

    @property
    def has_channel(self) -> bool:
        return self.channel is not None


ChannelSource = Callable[[np.random.Generator], DiscreteChannel]
CsiModel = Callable[[DiscreteChannel, Scheme, np.random.Generator], DiscreteChannel]


@dataclass(frozen=True)
class GaussianCsi:
    """Additive white Gaussian estimation error of variance error_var per tap.

    For TR the error is added to the prefilter, i.e. to the reversed channel,
    which in channel order is the reversed error vector.
    """
    error_var: float

    def __call__(self, c: DiscreteChannel, scheme: Scheme, rng: np.random.Generator) -> DiscreteChannel:
        if self.error_var == 0:
            return c
        xi = rng.normal(0.0, np.sqrt(self.error_var), size=c.taps.size)
        if scheme is Scheme.TR:
            xi = xi[::-1]
        return c.with_taps(c.taps + xi)


@dataclass(frozen=True)
class FixedChannel:
    """Channel source returning one channel every time (debugging mode)."""
    channel: DiscreteChannel

    def __call__(self, rng: np.random.Generator) -> DiscreteChannel:
        return self.channel


def ar_self_coupling(c: DiscreteChannel, xi: np.ndarray) -> float:
    """a_kk = h_hat^T h / ||h_hat|| with h_hat = c + xi."""
    h_hat = c.taps + np.asarray(xi, dtype=float)
    norm = np.linalg.norm(h_hat)
    if norm == 0:
        raise SignalError("estimated channel is zero; the AR projection is undefined")
    return float(np.dot(h_hat, c.taps) / norm)


def tr_self_coupling(c: DiscreteChannel, xi: np.ndarray) -> float:
    """a_kk = c^T (c + reverse(xi)) / ||c + reverse(xi)||; xi lives on the prefilter."""
    perturbed = c.taps + np.asarray(xi, dtype=float)[::-1]
    norm = np.linalg.norm(perturbed)
    if norm == 0:
        raise SignalError("perturbed prefilter is zero; the TR normalization is undefined")
    return float(np.dot(c.taps, perturbed) / norm)


def transmit_window(scheme: Scheme, user: UserLink, normalize_prefilter: bool = True) -> EffectiveChannel:
    """Effective channel the user's signal reaches the receiver with."""
    if scheme is Scheme.TR:
        prefilter = tr_prefilter(user.estimate, normalize=normalize_prefilter)
        return effective_channel(user.channel, prefilter, user.code)
    return effective_channel(user.channel, None, user.code)


def self_coupling(scheme: Scheme, user: UserLink, config: SystemConfig,
                  normalize_prefilter: bool = True) -> float:
    if scheme is Scheme.TR:
        window = transmit_window(scheme, user, normalize_prefilter)
        return window.sample_at(peak_index(config, user.code))
    h_hat = effective_channel(user.estimate, None, user.code)
    h = effective_channel(user.channel, None, user.code)
    norm = h_hat.norm
    if norm == 0:
        raise SignalError("estimated channel is zero; the AR projection is undefined")
    return h_hat.inner(h) / norm


def cross_coupling(scheme: Scheme, user_k: UserLink, user_j: UserLink, config: SystemConfig,
                   normalize_prefilter: bool = True) -> float:
    """Coupling of user j into the decision variable of user k.

    TR: sample q_k of user j's perturbed effective channel.
    AR: user k's perturbed direction projected on user j's true effective channel.
    """
    if not user_j.has_channel:
        return 0.0
    if scheme is Scheme.TR:
        window = transmit_window(scheme, user_j, normalize_prefilter)
        return window.sample_at(peak_index(config, user_k.code))
    h_hat_k = effective_channel(user_k.estimate, None, user_k.code)
    h_j = effective_channel(user_j.channel, None, user_j.code)
    if not h_hat_k.overlaps(h_j):
        return 0.0
    return h_hat_k.inner(h_j) / h_hat_k.norm


def windows_can_overlap(config: SystemConfig, code_k: SpreadingVector, code_j: SpreadingVector) -> bool:
    return abs(code_k.start - code_j.start) <= config.L * config.iota


def draw_users(config: SystemConfig, scheme: Scheme, rng_seed: SeedLike,
               channel_source: ChannelSource, csi_model: CsiModel, k: int = 0) -> List[UserLink]:
    """Codes for all K users; channels only for user k and the users that can reach it."""
    rng = as_generator(rng_seed)
    codes = [make_th_code(config.N, config.iota, rng) for _ in range(config.K)]
    users = []
    for j, code in enumerate(codes):
        if j == k or windows_can_overlap(config, codes[k], code):
            channel = channel_source(rng)
            estimate = csi_model(channel, scheme, rng)
            users.append(UserLink(code=code, channel=channel, estimate=estimate))
        else:
            users.append(UserLink(code=code))
    return users


def coupling_sample(scheme: Scheme, users: Sequence[UserLink], config: SystemConfig, k: int = 0,
                    normalize_prefilter: bool = True) -> CouplingSample:
    a_self = self_coupling(scheme, users[k], config, normalize_prefilter)
    a_cross = [cross_coupling(scheme, users[k], user, config, normalize_prefilter)
               for j, user in enumerate(users) if j != k]
    return CouplingSample(a_self=a_self, a_cross=a_cross, scheme=scheme)


def decision_variable(scheme: Scheme, config: SystemConfig, b: Sequence[float],
                      users: Sequence[UserLink], noise_seed: SeedLike, k: int = 0,
                      normalize_prefilter: bool = True) -> DecisionVariable:
    b = np.asarray(b, dtype=float)
    if b.size != config.K or len(users) != config.K:
        raise SignalError(f"expected {config.K} symbols and users, got {b.size} and {len(users)}")
    coupling = coupling_sample(scheme, users, config, k, normalize_prefilter)
    others = np.delete(b, k)
    signal = coupling.a_self * b[k]
    interference = float(np.dot(coupling.a_cross, others)) if others.size else 0.0
    noise = 0.0
    if config.noise_var > 0:
        noise = float(as_generator(noise_seed).normal(0.0, np.sqrt(config.noise_var)))
    return DecisionVariable(z=signal + interference + noise, signal=signal,
                            interference=interference, noise=noise)


def overlap_probability(N: int, L: int, iota: int) -> float:
    """f ~ (2(L+1)iota - 1) / (N iota), border effects neglected."""
    if N <= 0:
        raise SignalError("N must be positive")
    return min(1.0, (2 * (L + 1) * iota - 1) / (N * iota))


def overlap_probability_exact(N: int, L: int, iota: int) -> float:
    """Fraction of (hop, offset) pairs of two users whose windows meet.

    Enumerates every pair of active samples on 0..N*iota-1; windows meet when
    the starts differ by at most L*iota.
    """
    starts = np.arange(N * iota)
    gap = np.abs(np.subtract.outer(starts, starts))
    return float(np.mean(gap <= L * iota))


def support_length(config: SystemConfig, scheme: Scheme) -> int:
    """Samples occupied by an effective channel: 2L*iota+1 for TR, L*iota+1 for AR."""
    taps = config.taps
    return 2 * taps - 1 if scheme is Scheme.TR else taps
