"""Experiment configuration, deterministic sweep execution, and persistence.

Seed discipline: cell ``c`` and trial ``t`` of a sweep derive every random
stream as ``default_rng([seed, c, t, stream])`` with stream ids 0 = signal,
1 = channel, 2 = noise, and (3, grid-index) = sampler, so any single cell or
trial reproduces in isolation and identical configs give identical records.

Outputs: a CSV with one row per cell (fixed column order, full float
precision) plus a JSON sidecar carrying the config echo, per-cell status
(including errors), and the mmse curves.  The CSV feeds the plotting
component; the JSON feeds reruns.  Rows are flushed per cell, so an
interrupted sweep loses at most the running cell.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ScalingSchedule, channel_entropy_nats, sample_channel
from .link import transmit, circulant_apply
from .posterior import AUTO_EXACT_LIMIT, posterior_mean
from .rate import MmseCurve, penalty_and_rate, threshold_snr
from .signals import SIGNAL_KINDS, gen_signal

CSV_COLUMNS = [
    "kc", "l", "rho", "snr",
    "i_cond_nats", "i_cond_stderr",
    "penalty_ratio", "penalty_stderr",
    "rate_upper_nats", "entropy_cap_nats",
    "threshold_snr", "wall_time_s", "seed",
]

#: The geometric part of the snr grid spans two decades below the target.
GRID_SPAN = 100.0


def snr_grid(snr_target: float, points: int) -> np.ndarray:
    """0 followed by a geometric ramp up to snr_target."""
    if points < 2:
        raise ValueError("need at least two grid points")
    if snr_target <= 0:
        raise ValueError("snr_target must be positive")
    geo = np.geomspace(snr_target / GRID_SPAN, snr_target, points - 1)
    geo[-1] = snr_target
    return np.concatenate([[0.0], geo])


@dataclass(frozen=True)
class SweepConfig:
    """One scaling experiment: a K_c grid crossed with snr levels.

    Each cell is (K_c, rho) with L from the schedule and the snr target at
    rho times the threshold snr of that (K_c, L).
    """

    kc_grid: tuple = (64, 128, 256, 512)
    l_alpha: float = 0.5
    rho_list: tuple = (0.1, 1.0, 10.0)
    signal_kind: str = "iid_binary"
    gain_model: str = "rademacher"
    trials: int = 100
    snr_grid_points: int = 33
    seed: int = 0
    output: str = "sweep"
    # engineering knobs
    ppm_frame_len: int | None = None
    mcmc_chains: int = 4
    mcmc_samples: int = 4000
    mcmc_burnin: int | None = None
    exact_limit: int = AUTO_EXACT_LIMIT
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kc_grid", tuple(int(k) for k in self.kc_grid))
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.rho_list or any(r <= 0 for r in self.rho_list):
            raise ValueError("rho_list must be nonempty and positive")
        if self.signal_kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.signal_kind!r}")
        if self.signal_kind == "ppm":
            if self.ppm_frame_len is None:
                raise ValueError("ppm signals need ppm_frame_len")
            if any(k % self.ppm_frame_len for k in self.kc_grid):
                raise ValueError("ppm_frame_len must divide every K_c in the grid")
        if self.snr_grid_points < 2:
            raise ValueError("snr_grid_points must be >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.schedule  # validates the grid / tap rule

    @property
    def schedule(self) -> ScalingSchedule:
        return ScalingSchedule(kc_grid=self.kc_grid, alpha=self.l_alpha)

    def cells(self):
        """(K_c, rho) pairs in output order (K_c-major)."""
        return [(kc, rho) for kc in self.kc_grid for rho in self.rho_list]


_LIST_KEYS = {"kc_grid", "rho_list"}
_INT_KEYS = {"trials", "snr_grid_points", "seed", "ppm_frame_len",
             "mcmc_chains", "mcmc_samples", "mcmc_burnin", "exact_limit",
             "workers"}
_FLOAT_KEYS = {"l_alpha"}
_STR_KEYS = {"signal_kind", "gain_model", "output"}


def parse_config(text: str) -> SweepConfig:
    """Parse the flat key-value config format (``key = value``, # comments).

    Keys: kc_grid, l_alpha, rho_list, signal_kind, gain_model, trials,
    snr_grid_points, seed, output, plus the engineering knobs
    ppm_frame_len, mcmc_chains, mcmc_samples, mcmc_burnin, exact_limit,
    workers.  Lists are comma-separated.  Unknown keys are rejected.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _LIST_KEYS:
            parts = [p.strip() for p in val.split(",") if p.strip()]
            values[key] = tuple(int(p) for p in parts) if key == "kc_grid" \
                else tuple(float(p) for p in parts)
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _STR_KEYS:
            values[key] = val
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    return SweepConfig(**values)


def load_config(path) -> SweepConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass(frozen=True)
class SweepRecord:
    """One (K_c, rho) cell of a sweep; mirrors the CSV columns.

    The mmse curve rides along for in-process consumers and the JSON
    sidecar; it is not part of the CSV row or of record equality.
    """

    kc: int
    l: int
    rho: float
    snr: float
    i_cond_nats: float
    i_cond_stderr: float
    penalty_ratio: float
    penalty_stderr: float
    rate_upper_nats: float
    entropy_cap_nats: float
    threshold_snr: float
    wall_time_s: float
    seed: int
    curve: MmseCurve | None = field(default=None, compare=False)

    def to_csv_row(self):
        out = []
        for c in CSV_COLUMNS:
            v = getattr(self, c)
            out.append(str(int(v)) if c in ("kc", "l", "seed") else repr(float(v)))
        return out

    @classmethod
    def from_csv_row(cls, row):
        kwargs = {}
        for name, value in zip(CSV_COLUMNS, row):
            if name in ("kc", "l", "seed"):
                kwargs[name] = int(value)
            else:
                kwargs[name] = float(value)
        return cls(**kwargs)


def run_cell(config: SweepConfig, cell_index: int) -> SweepRecord:
    """Estimate one cell's mmse curve and integrate it into a record.

    Per-trial signals/channels/noises are shared across the snr grid
    (common random numbers), so the penalty stderr comes from the spread of
    per-trial integrals, which is the exact error of the trapezoid
    estimate under that coupling.
    """
    cells = config.cells()
    if not 0 <= cell_index < len(cells):
        raise ValueError(f"cell index {cell_index} outside 0..{len(cells) - 1}")
    kc, rho = cells[cell_index]
    n_taps = config.schedule.n_taps(kc)
    thr = threshold_snr(kc, n_taps)
    target = rho * thr
    grid = snr_grid(target, config.snr_grid_points)

    start = time.perf_counter()
    errors = np.empty((config.trials, len(grid)))
    for t in range(config.trials):
        base = [config.seed, cell_index, t]
        sig = gen_signal(config.signal_kind, kc, seed=base + [0],
                         frame_len=config.ppm_frame_len)
        chan = sample_channel(kc, n_taps, config.gain_model, seed=base + [1])
        noise = np.random.default_rng(base + [2]).standard_normal(kc)
        for j, s in enumerate(grid):
            obs = transmit(sig, chan, s, noise=noise)
            post = posterior_mean(
                obs.received, sig, s, n_taps, config.gain_model,
                method="auto", exact_limit=config.exact_limit,
                seed=base + [3, j], chains=config.mcmc_chains,
                burnin=config.mcmc_burnin, samples=config.mcmc_samples,
            )
            resid = circulant_apply(sig, chan.to_vector() - post.hhat)
            errors[t, j] = resid @ resid
    wall = time.perf_counter() - start

    curve = MmseCurve(
        snr_grid=grid,
        values=errors.mean(axis=0),
        stderrs=errors.std(axis=0, ddof=1) / np.sqrt(config.trials)
        if config.trials > 1 else np.zeros(len(grid)),
    )
    entropy_cap = channel_entropy_nats(kc, n_taps, config.gain_model)
    per_trial_i = 0.5 * np.trapezoid(errors, grid, axis=1)
    i_se = (float(per_trial_i.std(ddof=1) / np.sqrt(config.trials))
            if config.trials > 1 else 0.0)
    summary = penalty_and_rate(curve, target, kc, entropy_cap, i_cond_stderr=i_se)
    return SweepRecord(
        kc=kc, l=n_taps, rho=rho, snr=target,
        i_cond_nats=summary.i_cond_raw_nats,
        i_cond_stderr=i_se,
        penalty_ratio=summary.penalty_ratio,
        penalty_stderr=summary.penalty_stderr,
        rate_upper_nats=summary.rate_upper_nats,
        entropy_cap_nats=entropy_cap,
        threshold_snr=thr,
        wall_time_s=wall,
        seed=config.seed,
        curve=curve,
    )


def _cell_status(record: SweepRecord, cell_index: int) -> dict:
    body = {c: getattr(record, c) for c in CSV_COLUMNS}
    return {
        "cell": cell_index,
        "status": "ok",
        "record": body,
        "curve": {
            "snr_grid": record.curve.snr_grid.tolist(),
            "values": record.curve.values.tolist(),
            "stderrs": record.curve.stderrs.tolist(),
        },
    }


def run_sweep(config: SweepConfig):
    """Run every cell; persist CSV + JSON sidecar; return the records.

    Cells are independent work units (config.workers > 1 runs them in a
    process pool); output order is by cell index regardless of completion
    order.  A failing cell is recorded in the sidecar with an error field
    and the sweep continues.
    """
    csv_path = config.output + ".csv"
    json_path = config.output + ".json"
    sidecar = {
        "config": {k: v for k, v in dataclasses.asdict(config).items()},
        "columns": CSV_COLUMNS,
        "cells": [],
    }
    records = []
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        fh.flush()

        def finish_cell(index, outcome):
            if isinstance(outcome, SweepRecord):
                records.append(outcome)
                writer.writerow(outcome.to_csv_row())
                fh.flush()
                sidecar["cells"].append(_cell_status(outcome, index))
            else:
                sidecar["cells"].append(
                    {"cell": index, "status": "error", "error": str(outcome)}
                )
            with open(json_path, "w", encoding="utf-8") as jh:
                json.dump(sidecar, jh, indent=1)

        indices = range(len(config.cells()))
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                futures = [pool.submit(run_cell, config, i) for i in indices]
                for i, fut in zip(indices, futures):
                    try:
                        finish_cell(i, fut.result())
                    except Exception as exc:  # noqa: BLE001 - recorded per cell
                        finish_cell(i, exc)
        else:
            for i in indices:
                try:
                    finish_cell(i, run_cell(config, i))
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    finish_cell(i, exc)
    return records


def read_records(csv_path):
    """Parse a sweep CSV back into records (curves stay in the sidecar)."""
    with open(csv_path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {header}")
        return [SweepRecord.from_csv_row(row) for row in reader]
