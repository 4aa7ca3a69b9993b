import csv
import json
import math

import numpy as np
import pytest

from spreadchan import harness
from spreadchan.harness import (
    CSV_COLUMNS,
    SweepConfig,
    SweepRecord,
    load_config,
    parse_config,
    read_records,
    run_cell,
    run_sweep,
    snr_grid,
)

FAST = dict(kc_grid=(16,), l_alpha=0.25, rho_list=(0.1,), trials=60,
            snr_grid_points=5, mcmc_chains=2, mcmc_samples=800)


class TestSnrGrid:
    def test_shape(self):
        grid = snr_grid(2.0, 9)
        assert len(grid) == 9
        assert grid[0] == 0.0
        assert grid[-1] == 2.0
        assert np.all(np.diff(grid) > 0)

    def test_geometric_spacing(self):
        grid = snr_grid(1.0, 5)
        ratios = grid[2:] / grid[1:-1]
        assert np.allclose(ratios, ratios[0])

    def test_validation(self):
        with pytest.raises(ValueError):
            snr_grid(0.0, 5)
        with pytest.raises(ValueError):
            snr_grid(1.0, 1)


class TestConfig:
    def test_parse_roundtrip(self):
        text = """
        # scaling experiment
        kc_grid = 64, 128
        l_alpha = 0.5
        rho_list = 0.1, 1.0
        signal_kind = iid_binary
        gain_model = rademacher
        trials = 10
        snr_grid_points = 7
        seed = 42
        output = /tmp/out
        """
        cfg = parse_config(text)
        assert cfg.kc_grid == (64, 128)
        assert cfg.rho_list == (0.1, 1.0)
        assert cfg.trials == 10
        assert cfg.seed == 42
        assert cfg.cells() == [(64, 0.1), (64, 1.0), (128, 0.1), (128, 1.0)]

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config("bogus = 1")

    def test_bad_line_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config("just some words")

    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.kc_grid == (64, 128, 256, 512)
        assert cfg.rho_list == (0.1, 1.0, 10.0)

    def test_ppm_needs_frame(self):
        with pytest.raises(ValueError, match="frame"):
            SweepConfig(signal_kind="ppm")

    def test_load_config(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("trials = 3\n")
        assert load_config(path).trials == 3


class TestRunCell:
    def test_single_cell_contract(self):
        # end-to-end type contract on an exactly solvable cell
        cfg = SweepConfig(seed=5, output="unused",
                          kc_grid=(16,), l_alpha=0.25, rho_list=(0.1,),
                          trials=200, snr_grid_points=5)
        rec = run_cell(cfg, 0)
        assert rec.kc == 16 and rec.l == 2
        assert 0.0 <= rec.penalty_ratio <= 1.0 + 3 * rec.penalty_stderr + 1e-12
        assert np.isfinite(rec.penalty_stderr) and rec.penalty_stderr > 0
        assert rec.rate_upper_nats >= 0.0
        assert np.isclose(rec.snr, 0.1 * math.log(8) / 8)
        assert rec.curve is not None and len(rec.curve.snr_grid) == 5

    def test_cell_index_validated(self):
        cfg = SweepConfig(seed=1, output="unused", **FAST)
        with pytest.raises(ValueError):
            run_cell(cfg, 1)


class TestRunSweep:
    def test_deterministic_modulo_walltime(self, tmp_path):
        a = run_sweep(SweepConfig(seed=1, output=str(tmp_path / "a"), **FAST))
        b = run_sweep(SweepConfig(seed=1, output=str(tmp_path / "b"), **FAST))

        def strip_wall(path):
            rows = list(csv.reader(open(path)))
            wi = rows[0].index("wall_time_s")
            return [[v for i, v in enumerate(r) if i != wi] for r in rows]

        assert strip_wall(tmp_path / "a.csv") == strip_wall(tmp_path / "b.csv")
        assert a[0].penalty_ratio == b[0].penalty_ratio

    def test_seed_consistency(self, tmp_path):
        # two sweeps differing only in the root seed agree statistically
        a = run_sweep(SweepConfig(seed=1, output=str(tmp_path / "a"), **FAST))
        c = run_sweep(SweepConfig(seed=2, output=str(tmp_path / "c"), **FAST))
        pooled = math.hypot(a[0].penalty_stderr, c[0].penalty_stderr)
        assert abs(a[0].penalty_ratio - c[0].penalty_ratio) <= 3 * pooled

    def test_csv_roundtrip(self, tmp_path):
        records = run_sweep(SweepConfig(seed=3, output=str(tmp_path / "rt"), **FAST))
        parsed = read_records(tmp_path / "rt.csv")
        assert parsed == records

    def test_rerun_single_cell_reproduces(self, tmp_path):
        cfg = SweepConfig(seed=4, output=str(tmp_path / "x"), **FAST)
        records = run_sweep(cfg)
        again = run_cell(cfg, 0)
        assert again.penalty_ratio == records[0].penalty_ratio
        assert again.i_cond_nats == records[0].i_cond_nats

    def test_sidecar_contents(self, tmp_path):
        cfg = SweepConfig(seed=5, output=str(tmp_path / "s"), **FAST)
        run_sweep(cfg)
        sidecar = json.loads((tmp_path / "s.json").read_text())
        assert sidecar["columns"] == CSV_COLUMNS
        assert sidecar["config"]["seed"] == 5
        assert sidecar["cells"][0]["status"] == "ok"
        assert len(sidecar["cells"][0]["curve"]["values"]) == 5

    def test_cell_error_recorded_and_sweep_continues(self, tmp_path, monkeypatch):
        cfg = SweepConfig(seed=6, output=str(tmp_path / "e"),
                          kc_grid=(16,), l_alpha=0.25, rho_list=(0.1, 1.0),
                          trials=5, snr_grid_points=3,
                          mcmc_chains=2, mcmc_samples=100)
        real = harness.run_cell

        def flaky(config, index):
            if index == 0:
                raise RuntimeError("synthetic cell failure")
            return real(config, index)

        monkeypatch.setattr(harness, "run_cell", flaky)
        records = run_sweep(cfg)
        assert len(records) == 1
        sidecar = json.loads((tmp_path / "e.json").read_text())
        assert sidecar["cells"][0]["status"] == "error"
        assert "synthetic" in sidecar["cells"][0]["error"]
        assert sidecar["cells"][1]["status"] == "ok"

    def test_parallel_matches_serial(self, tmp_path):
        serial = run_sweep(SweepConfig(seed=7, output=str(tmp_path / "ser"),
                                       workers=1, **FAST))
        parallel = run_sweep(SweepConfig(seed=7, output=str(tmp_path / "par"),
                                         workers=2, **FAST))
        assert serial[0].penalty_ratio == parallel[0].penalty_ratio

        def strip_wall(path):
            rows = list(csv.reader(open(path)))
            wi = rows[0].index("wall_time_s")
            return [[v for i, v in enumerate(r) if i != wi] for r in rows]

        assert strip_wall(tmp_path / "ser.csv") == strip_wall(tmp_path / "par.csv")


class TestSweepRecord:
    def test_csv_row_roundtrip(self):
        rec = SweepRecord(kc=16, l=2, rho=0.1, snr=0.02, i_cond_nats=1.5,
                          i_cond_stderr=0.1, penalty_ratio=0.9,
                          penalty_stderr=0.05, rate_upper_nats=0.0,
                          entropy_cap_nats=6.17, threshold_snr=0.2,
                          wall_time_s=1.234, seed=7)
        assert SweepRecord.from_csv_row(rec.to_csv_row()) == rec
