"""Render sweep-output figures from the harness CSV schema.

Two modes: "isnr" draws, for one coherence length, the coherent linear
bound, the channel-uncertainty penalty (capped at the channel entropy and
at the coherent bound), and the net rate; "scaling" draws the penalty ratio
against the coherence length, one line per snr multiplier.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

#: The column contract shared with the sweep harness.
CSV_COLUMNS = [
    "kc", "l", "rho", "snr",
    "i_cond_nats", "i_cond_stderr",
    "penalty_ratio", "penalty_stderr",
    "rate_upper_nats", "entropy_cap_nats",
    "threshold_snr", "wall_time_s", "seed",
]

MODES = ("isnr", "scaling")

NATS_PER_BIT = math.log(2.0)


class SchemaError(ValueError):
    """The input CSV does not match the sweep column schema."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input CSV, output image, and mode."""

    input_csv: str
    output_image: str
    mode: str
    kc: int | None = None      # isnr mode: coherence length (default: largest)
    bits: bool = False         # report information axes in bits

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected {MODES}")


def read_sweep_csv(path):
    """Parse rows under the harness schema; name the offending column on
    mismatch."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV: no header row") from None
        for want, got in zip(CSV_COLUMNS, header):
            if want != got:
                raise SchemaError(f"schema mismatch at column {want!r} (found {got!r})")
        if len(header) != len(CSV_COLUMNS):
            extra = header[len(CSV_COLUMNS):] or CSV_COLUMNS[len(header):]
            raise SchemaError(f"schema mismatch at column {extra[0]!r}")
        rows = []
        for row in reader:
            if len(row) != len(CSV_COLUMNS):
                raise SchemaError(f"row with {len(row)} fields, expected "
                                  f"{len(CSV_COLUMNS)}")
            rows.append({name: float(v) for name, v in zip(CSV_COLUMNS, row)})
    if not rows:
        raise SchemaError("CSV holds no data rows")
    return rows


def _isnr_arrays(rows, kc):
    cells = sorted((r for r in rows if int(r["kc"]) == kc),
                   key=lambda r: r["snr"])
    if not cells:
        raise ValueError(f"no rows with kc={kc}")
    snr = np.array([r["snr"] for r in cells])
    coherent = 0.5 * kc * snr
    raw = np.array([r["i_cond_nats"] for r in cells])
    cap = np.array([r["entropy_cap_nats"] for r in cells])
    # the drawn penalty saturates at the channel entropy and never exceeds
    # the coherent bound (raw values can, by Monte Carlo noise)
    penalty = np.minimum(np.minimum(raw, cap), coherent)
    net = np.maximum(0.0, coherent - penalty)
    return snr, coherent, penalty, net


def render(spec: FigureSpec):
    """Draw the figure and return the plotted arrays (for verification)."""
    rows = read_sweep_csv(spec.input_csv)
    scale = 1.0 / NATS_PER_BIT if spec.bits else 1.0
    unit = "bits" if spec.bits else "nats"

    fig, ax = plt.subplots(figsize=(7, 4.5))
    if spec.mode == "isnr":
        kc = spec.kc if spec.kc is not None else max(int(r["kc"]) for r in rows)
        snr, coherent, penalty, net = _isnr_arrays(rows, kc)
        ax.plot(snr, coherent * scale, "o-", label="coherent bound")
        ax.plot(snr, penalty * scale, "s-", label="channel-uncertainty penalty")
        ax.plot(snr, net * scale, "d-", label="net rate upper bound")
        ax.set_xlabel("snr per degree of freedom")
        ax.set_ylabel(f"information ({unit})")
        ax.set_title(f"information vs snr at K_c = {kc}")
        data = {"snr": snr, "coherent": coherent * scale,
                "penalty": penalty * scale, "net": net * scale, "kc": kc}
    else:
        rhos = sorted({r["rho"] for r in rows})
        data = {"rho": rhos, "series": {}}
        for rho in rhos:
            cells = sorted((r for r in rows if r["rho"] == rho),
                           key=lambda r: r["kc"])
            kcs = np.array([int(r["kc"]) for r in cells])
            ratios = np.array([r["penalty_ratio"] for r in cells])
            errs = np.array([r["penalty_stderr"] for r in cells])
            ax.errorbar(kcs, ratios, yerr=3 * errs, marker="o",
                        label=f"rho = {rho:g}")
            data["series"][rho] = (kcs, ratios)
        ax.set_xscale("log", base=2)
        ax.set_xlabel("samples per coherence period K_c")
        ax.set_ylabel("penalty ratio")
        ax.set_ylim(0.0, 1.1)
        ax.set_title("channel-uncertainty share of the rate budget")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output_image, dpi=120)
    plt.close(fig)
    return data
