"""Sparse block-coherent channels: sampling, the correlation admission test,
and prior entropy.

A channel realization has L taps at delays drawn uniformly over the
``C(K_c, L)`` subsets of ``[0, K_c)``; tap gains are IID, zero mean, with
variance ``1/L`` so the impulse response has unit average energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .signals import FFT_CUTOFF, SpreadSignal, empirical_autocorr

GAIN_MODELS = ("rademacher", "bounded_uniform")

#: Default constant for the admission test on the channel/signal correlation
#: (same rationale as the spreading constant: the typical value of the
#: correlation sum is sqrt(K_c)).
DEFAULT_B3 = 6.0

# bounded_uniform magnitude law: |gain| * sqrt(L) is uniform on [B1, B2] with
# a random sign.  B1 is the magnitude floor; B2 fixed by the unit-energy
# normalization E[(|gain| sqrt(L))^2] = (B1^2 + B1*B2 + B2^2)/3 = 1.
BOUNDED_B1 = 0.5
BOUNDED_B2 = (np.sqrt(45.0) - 1.0) / 4.0

#: Magnitude grid size used when the posterior enumerates bounded_uniform
#: gains (per sign).  Rademacher gains are already a finite alphabet.
GAIN_GRID_POINTS = 9


@dataclass(frozen=True)
class ChannelRealization:
    """Sparse impulse response: L distinct tap delays and aligned gains."""

    kc: int
    support: np.ndarray
    gains: np.ndarray
    gain_model: str

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        gains = np.asarray(self.gains, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "gains", gains)
        if self.gain_model not in GAIN_MODELS:
            raise ValueError(f"unknown gain model {self.gain_model!r}")
        n = support.size
        if not 1 <= n < self.kc:
            raise ValueError(f"need 1 <= L < K_c, got L={n}, K_c={self.kc}")
        if gains.shape != (n,):
            raise ValueError("gains must align with support")
        if np.unique(support).size != n or support.min() < 0 or support.max() >= self.kc:
            raise ValueError("support must be distinct delays in [0, K_c)")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be sorted")

    @property
    def n_taps(self) -> int:
        return int(self.support.size)

    def to_vector(self) -> np.ndarray:
        """Dense length-K_c tap vector."""
        v = np.zeros(self.kc)
        v[self.support] = self.gains
        return v


def draw_gains(rng: np.random.Generator, n_taps: int, gain_model: str) -> np.ndarray:
    """IID zero-mean gains with variance 1/L for the given model."""
    scale = 1.0 / np.sqrt(n_taps)
    if gain_model == "rademacher":
        return rng.choice([-1.0, 1.0], n_taps) * scale
    if gain_model == "bounded_uniform":
        mags = rng.uniform(BOUNDED_B1, BOUNDED_B2, n_taps) * scale
        return mags * rng.choice([-1.0, 1.0], n_taps)
    raise ValueError(f"unknown gain model {gain_model!r}")


def sample_channel(kc, n_taps, gain_model="rademacher", seed=0) -> ChannelRealization:
    """Draw a channel: support uniform over size-L subsets, gains IID.

    Deterministic for a fixed (kc, n_taps, gain_model, seed).
    """
    if not 1 <= n_taps < kc:
        raise ValueError(f"need 1 <= L < K_c, got L={n_taps}, K_c={kc}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(kc, size=n_taps, replace=False))
    gains = draw_gains(rng, n_taps, gain_model)
    return ChannelRealization(kc=kc, support=support, gains=gains, gain_model=gain_model)


def condition7_values(signal: SpreadSignal, channel: ChannelRealization) -> np.ndarray:
    """The correlation sums ``sum_{j != i} H_j <Xbar^i, Xbar^j>`` for every i.

    Uses ``<Xbar^i, Xbar^j> = r[(j - i) mod K_c]``; the full cyclic
    correlation is computed at once and the self term removed.
    """
    if signal.kc != channel.kc:
        raise ValueError("signal and channel disagree on K_c")
    kc = signal.kc
    r = empirical_autocorr(signal)
    v = channel.to_vector()
    if kc > FFT_CUTOFF:
        sums = np.fft.irfft(np.fft.rfft(v) * np.conj(np.fft.rfft(r)), kc)
    else:
        lags = (channel.support[None, :] - np.arange(kc)[:, None]) % kc
        sums = r[lags] @ channel.gains
    return sums - v * r[0]


def check_condition7(signal, channel, b3: float = DEFAULT_B3) -> np.ndarray:
    """Indices i with ``|sum_{j != i} H_j <Xbar^i, Xbar^j>| <= b3 sqrt(K_c)``.

    The returned index set is the side information consumed by the
    proof-term diagnostics.
    """
    if b3 <= 0:
        raise ValueError("b3 must be positive")
    values = condition7_values(signal, channel)
    return np.flatnonzero(np.abs(values) <= b3 * np.sqrt(signal.kc))


def log_binomial(n: int, k: int) -> float:
    """``ln C(n, k)`` via log-gamma (overflow-safe)."""
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def channel_entropy_nats(kc, n_taps, gain_model="rademacher") -> float:
    """Prior entropy of the channel in nats.

    rademacher: ``ln C(K_c, L) + L ln 2`` (delay entropy plus sign entropy).
    bounded_uniform: ``ln C(K_c, L) + L ln(2 * GAIN_GRID_POINTS)`` -- the
    entropy of the sign/magnitude grid the posterior actually enumerates
    (grid-dependent by construction).
    """
    if not 1 <= n_taps < kc:
        raise ValueError(f"need 1 <= L < K_c, got L={n_taps}, K_c={kc}")
    delays = log_binomial(kc, n_taps)
    if gain_model == "rademacher":
        return delays + n_taps * math.log(2.0)
    if gain_model == "bounded_uniform":
        return delays + n_taps * math.log(2.0 * GAIN_GRID_POINTS)
    raise ValueError(f"unknown gain model {gain_model!r}")


@dataclass(frozen=True)
class ScalingSchedule:
    """A grid of coherence lengths with a sub-linear tap-count rule.

    The default rule is ``L(K_c) = ceil(K_c ** alpha)`` with alpha = 0.5.
    Validity is checked on the concrete grid: L must not decrease and
    ``L(K_c) / K_c`` must strictly decrease.
    """

    kc_grid: tuple
    alpha: float = 0.5

    def __post_init__(self):
        grid = tuple(int(k) for k in self.kc_grid)
        object.__setattr__(self, "kc_grid", grid)
        if len(grid) == 0 or any(k < 2 for k in grid):
            raise ValueError("kc_grid must be nonempty with entries >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("kc_grid must be strictly increasing")
        taps = [self.n_taps(k) for k in grid]
        if any(t2 < t1 for t1, t2 in zip(taps, taps[1:])):
            raise ValueError("L(K_c) must not decrease along the grid")
        ratios = [t / k for t, k in zip(taps, grid)]
        if any(r2 >= r1 for r1, r2 in zip(ratios, ratios[1:])):
            raise ValueError("L(K_c)/K_c must strictly decrease along the grid")
        if any(not 1 <= t < k for t, k in zip(taps, grid)):
            raise ValueError("tap rule must give 1 <= L < K_c on the grid")

    def n_taps(self, kc: int) -> int:
        return int(np.ceil(kc ** self.alpha))
