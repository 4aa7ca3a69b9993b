"""Spreading-signal generation, cyclic shifts, and cyclic autocorrelation.

A spreading signal is a length-``K_c`` real vector whose cyclic
autocorrelation at every nonzero lag stays within a bandwidth-independent
multiple of ``sqrt(K_c)``, i.e. its power is spread across the whole band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGNAL_KINDS = ("iid_binary", "iid_gaussian", "ppm")

#: Default constant for the spreading admission test: nonzero-lag
#: autocorrelations must stay below B4 * sqrt(K_c).  IID +-1 sequences pass
#: with high probability at desk-scale K_c (their worst lag scales like
#: sqrt(2 K_c ln K_c)).
DEFAULT_B4 = 6.0

#: Declared energy tolerance for the Gaussian generator.  The bound
#: ||X||^2 <= (1 + eps) K_c is probabilistic for this kind: the fraction of
#: violating seeds vanishes as K_c grows (chi-square concentration).
GAUSSIAN_ENERGY_TOL = 0.05

#: Above this length, autocorrelations and circulant products go through
#: FFTs; below it, direct sums are used.  Both paths must agree (tested).
FFT_CUTOFF = 512


@dataclass(frozen=True)
class SpreadSignal:
    """One coherence period of a transmitted signal.

    ``energy_tol`` is the generator's declared epsilon in the energy
    constraint ``||X||^2 <= (1 + eps) * K_c``.  The constraint is exact for
    iid_binary and ppm (eps = 0) and probabilistic for iid_gaussian.
    """

    samples: np.ndarray
    kind: str
    kc: int
    energy_tol: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        # kc = 1 is allowed at the type level for the scalar-channel oracle;
        # the generator itself requires kc >= 2.
        if self.kc < 1:
            raise ValueError(f"K_c must be positive, got {self.kc}")
        if samples.shape != (self.kc,):
            raise ValueError(
                f"expected {self.kc} samples, got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if self.kind != "iid_gaussian":
            # hard energy guarantee for the exact kinds
            cap = (1.0 + self.energy_tol) * self.kc * (1.0 + 1e-12)
            if self.energy > cap:
                raise ValueError(
                    f"energy {self.energy:.6g} exceeds (1+eps)*K_c = {cap:.6g}"
                )

    @property
    def energy(self) -> float:
        """``||X||^2``."""
        return float(self.samples @ self.samples)


def gen_signal(kind, kc, seed, frame_len=None):
    """Generate a spreading signal deterministically from a seed.

    kind
        "iid_binary": IID +-1 entries (energy exactly K_c).
        "iid_gaussian": IID standard normal entries.
        "ppm": one pulse of amplitude sqrt(frame_len) per frame, position
        uniform within the frame; average energy per sample is 1.
    frame_len
        Pulse frame length, required for ppm; must divide ``kc``.
    """
    if kind not in SIGNAL_KINDS:
        raise ValueError(f"unknown signal kind {kind!r}")
    if kc < 2:
        raise ValueError(f"K_c must be >= 2, got {kc}")
    rng = np.random.default_rng(seed)
    tol = 0.0
    if kind == "iid_binary":
        samples = rng.integers(0, 2, kc) * 2.0 - 1.0
    elif kind == "iid_gaussian":
        samples = rng.standard_normal(kc)
        tol = GAUSSIAN_ENERGY_TOL
    else:
        if frame_len is None:
            raise ValueError("ppm requires frame_len")
        if frame_len < 1 or kc % frame_len != 0:
            raise ValueError(f"frame_len {frame_len} does not divide K_c {kc}")
        n_frames = kc // frame_len
        samples = np.zeros(kc)
        offsets = rng.integers(0, frame_len, n_frames)
        samples[np.arange(n_frames) * frame_len + offsets] = np.sqrt(frame_len)
    return SpreadSignal(samples=samples, kind=kind, kc=kc, energy_tol=tol)


def cyclic_shift(signal: SpreadSignal, shift: int) -> np.ndarray:
    """Cyclic shift by ``shift`` positions: ``out[n] = X[(n - shift) mod K_c]``."""
    return np.roll(signal.samples, shift)


def _autocorr_direct(x):
    kc = len(x)
    return np.array([x @ np.roll(x, lag) for lag in range(kc)])


def _autocorr_fft(x):
    return np.fft.irfft(np.abs(np.fft.rfft(x)) ** 2, len(x))


def empirical_autocorr(signal: SpreadSignal, method: str = "auto") -> np.ndarray:
    """Cyclic autocorrelation ``r[l] = <Xbar^0, Xbar^l>`` for l = 0..K_c-1.

    ``r[0]`` is the signal energy.  By circulant symmetry
    ``<Xbar^i, Xbar^j> = r[(j - i) mod K_c]`` for any shifts i, j.
    """
    if method == "auto":
        method = "fft" if signal.kc > FFT_CUTOFF else "direct"
    if method == "fft":
        return _autocorr_fft(signal.samples)
    if method == "direct":
        return _autocorr_direct(signal.samples)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class SpreadingCheck:
    """Outcome of the nonzero-lag autocorrelation bound test."""

    passed: bool
    bound: float
    offending_lags: np.ndarray


def check_spreading(signal: SpreadSignal, b4: float = DEFAULT_B4) -> SpreadingCheck:
    """Test ``max_{l != 0} |r[l]| <= b4 * sqrt(K_c)``; report violating lags."""
    if b4 <= 0:
        raise ValueError("b4 must be positive")
    r = empirical_autocorr(signal)
    bound = float(b4 * np.sqrt(signal.kc))
    offending = np.flatnonzero(np.abs(r) > bound)
    offending = offending[offending != 0]
    return SpreadingCheck(
        passed=offending.size == 0, bound=bound, offending_lags=offending
    )
