"""Mutual information from mmse curves and the normalized rate quantities.

All information quantities are in nats (the mmse-integral identity is
base-e); any conversion to bits happens at the reporting layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MmseCurve:
    """mmse estimates on an snr grid that starts at 0 and strictly increases."""

    snr_grid: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.snr_grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        stderrs = np.asarray(self.stderrs, dtype=float)
        object.__setattr__(self, "snr_grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "stderrs", stderrs)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("snr grid needs at least two points")
        if grid[0] != 0.0:
            raise ValueError("snr grid must start at 0")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("snr grid must be strictly increasing")
        if values.shape != grid.shape or stderrs.shape != grid.shape:
            raise ValueError("values and stderrs must match the grid")
        if np.any(values < 0) or np.any(stderrs < 0):
            raise ValueError("mmse values and stderrs must be nonnegative")


def mutual_info_immse(curve: MmseCurve, snr_target: float):
    """Half the trapezoidal integral of the mmse curve over [0, snr_target].

    Returns (nats, stderr) where the standard error propagates the
    per-point Monte Carlo errors through the trapezoid weights assuming
    independent points.
    """
    grid = curve.snr_grid
    if not 0.0 <= snr_target <= grid[-1]:
        raise ValueError(
            f"snr_target {snr_target} outside the curve grid [0, {grid[-1]}]"
        )
    if snr_target == 0.0:
        return 0.0, 0.0
    cut = int(np.searchsorted(grid, snr_target))
    if grid[min(cut, len(grid) - 1)] == snr_target:
        x = grid[: cut + 1]
        v = curve.values[: cut + 1]
        se = curve.stderrs[: cut + 1]
    else:
        # linear interpolation at the cut (stderr interpolated likewise)
        frac = (snr_target - grid[cut - 1]) / (grid[cut] - grid[cut - 1])
        x = np.concatenate([grid[:cut], [snr_target]])
        v = np.concatenate(
            [curve.values[:cut],
             [(1 - frac) * curve.values[cut - 1] + frac * curve.values[cut]]]
        )
        se = np.concatenate(
            [curve.stderrs[:cut],
             [(1 - frac) * curve.stderrs[cut - 1] + frac * curve.stderrs[cut]]]
        )
    value = 0.5 * float(np.trapezoid(v, x))
    weights = np.empty_like(x)
    weights[0] = (x[1] - x[0]) / 2
    weights[-1] = (x[-1] - x[-2]) / 2
    weights[1:-1] = (x[2:] - x[:-2]) / 2
    stderr = 0.5 * float(np.sqrt(np.sum((weights * se) ** 2)))
    return value, stderr


@dataclass(frozen=True)
class RateSummary:
    """Channel-uncertainty penalty and the induced rate upper bound (nats).

    i_cond_raw_nats is the mmse integral as computed; i_cond_nats caps it
    at the channel entropy (there is only so much to learn).  The penalty
    ratio divides the raw value by the coherent bound K_c * snr / 2, and
    rate_upper_nats is that bound minus the raw penalty, floored at zero.
    """

    kc: int
    snr_target: float
    i_cond_raw_nats: float
    i_cond_nats: float
    i_cond_stderr: float
    penalty_ratio: float
    penalty_stderr: float
    rate_upper_nats: float
    entropy_cap_nats: float

    def __post_init__(self):
        if self.rate_upper_nats < 0:
            raise ValueError("rate upper bound must be nonnegative")
        lo, hi = 0.0, 1.0 + 3.0 * self.penalty_stderr + 1e-12
        if not lo <= self.penalty_ratio <= hi:
            raise ValueError(
                f"penalty ratio {self.penalty_ratio:.6g} outside [0, 1 + 3 se]"
            )


def penalty_and_rate(curve: MmseCurve, snr_target, kc, entropy_cap_nats,
                     i_cond_stderr=None) -> RateSummary:
    """Integrate the curve and normalize into the penalty/rate summary.

    i_cond_stderr overrides the independent-point error propagation when
    the caller knows the true standard error of the integral (e.g. from
    per-trial integrals under common random numbers, where the per-point
    errors are positively correlated and independence underestimates).
    """
    if snr_target <= 0:
        raise ValueError("snr_target must be positive")
    raw, se = mutual_info_immse(curve, snr_target)
    if i_cond_stderr is not None:
        se = float(i_cond_stderr)
    coherent = 0.5 * kc * snr_target
    return RateSummary(
        kc=int(kc),
        snr_target=float(snr_target),
        i_cond_raw_nats=raw,
        i_cond_nats=min(raw, float(entropy_cap_nats)),
        i_cond_stderr=se,
        penalty_ratio=raw / coherent,
        penalty_stderr=se / coherent,
        rate_upper_nats=max(0.0, coherent - raw),
        entropy_cap_nats=float(entropy_cap_nats),
    )


def threshold_snr(kc, n_taps) -> float:
    """``ln(K_c / L) / (K_c / L)``: the snr level separating the regime where
    channel uncertainty consumes the whole rate budget of a spreading
    signal from the one where positive rate survives.
    """
    if n_taps < 1 or kc <= n_taps:
        raise ValueError(f"need K_c > L >= 1, got K_c={kc}, L={n_taps}")
    x = kc / n_taps
    return math.log(x) / x
