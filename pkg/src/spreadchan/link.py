"""Circulant link synthesis: ``Y = sqrt(snr) * x @ H + Z``.

``x`` is the circulant matrix whose k-th column is the signal cyclically
shifted by k positions, so ``x @ v`` is the cyclic convolution of the signal
with v.  Edge effects at the start of the coherence period are neglected by
construction (cyclic, never linear, convolution).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import ChannelRealization
from .signals import FFT_CUTOFF, SpreadSignal


def circulant_apply(signal: SpreadSignal, v: np.ndarray, method: str = "auto") -> np.ndarray:
    """Apply the signal's circulant matrix to ``v`` (cyclic convolution).

    ``out[n] = sum_k v[k] * X[(n - k) mod K_c]``; column k of the matrix is
    the k-shifted signal, so ``v = e_k`` extracts that column.
    """
    v = np.asarray(v, dtype=float)
    kc = signal.kc
    if v.shape != (kc,):
        raise ValueError(f"expected vector of length {kc}, got shape {v.shape}")
    if method == "auto":
        method = "fft" if kc > FFT_CUTOFF else "direct"
    if method == "fft":
        return np.fft.irfft(np.fft.rfft(signal.samples) * np.fft.rfft(v), kc)
    if method == "direct":
        return scipy.linalg.circulant(signal.samples) @ v
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class LinkObservation:
    """One coherence period: (X, H, Z, Y, snr) with Y = sqrt(snr) x H + Z."""

    signal: SpreadSignal
    channel: ChannelRealization
    snr: float
    noise: np.ndarray
    received: np.ndarray

    def __post_init__(self):
        if self.signal.kc != self.channel.kc:
            raise ValueError("signal and channel disagree on K_c")
        if self.snr < 0:
            raise ValueError("snr must be nonnegative")
        clean = np.sqrt(self.snr) * circulant_apply(self.signal, self.channel.to_vector())
        if not np.allclose(self.received, clean + self.noise, atol=1e-9, rtol=0):
            raise ValueError("received vector violates Y = sqrt(snr) x H + Z")


def transmit(signal, channel, snr, noise_seed=0, noise=None) -> LinkObservation:
    """Synthesize one observation; ``noise`` overrides the seeded draw (test hook).

    Deterministic for fixed inputs and noise_seed.
    """
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if noise is None:
        noise = np.random.default_rng(noise_seed).standard_normal(signal.kc)
    else:
        noise = np.asarray(noise, dtype=float)
    received = np.sqrt(snr) * circulant_apply(signal, channel.to_vector()) + noise
    return LinkObservation(
        signal=signal, channel=channel, snr=float(snr), noise=noise, received=received
    )
