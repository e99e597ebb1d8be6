import csv
import json

import numpy as np
import pytest

from windec import Shape, read_dataset, sin_field
from windec.cli import main


def write_config(tmp_path, overrides=None, name="config.json"):
    cfg = {
        "dataset": {
            "kind": "advection",
            "batch": 2,
            "extents": [24, 24],
            "channels": 1,
            "dx": 1 / 24,
            "dt": 1.0,
            "c": [1 / 24, 0.0],
            "ic": {"kind": "bumps", "n_bumps": 2,
                   "width_fraction_range": [0.04, 0.08], "center_margin": 0.3},
            "n_steps": 6,
            "seed": 3,
        },
        "window": [3, 3],
        "predictor": {"kind": "upwind"},
        "split_fraction": 0.5,
        "seed": 1,
        "out_dir": str(tmp_path / "out"),
    }
    if overrides:
        deep_update(cfg, overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def deep_update(base, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            deep_update(base[key], value)
        else:
            base[key] = value


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- gen ---------------------------------------------------------------------


def test_gen_writes_dataset_and_is_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, {"dataset": {"ic": {"kind": "sine", "freq": 2.0}}})
    assert main(["gen", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "kind=advection" in out and "frames=7" in out
    first = (tmp_path / "out" / "dataset.ddld").read_bytes()

    ds = read_dataset(tmp_path / "out" / "dataset.ddld")
    expected0 = sin_field(2.0, Shape(2, (24, 24), 1), 1 / 24)
    assert ds.frames[0].equals(expected0)

    assert main(["gen", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "dataset.ddld").read_bytes() == first


# --- eval --------------------------------------------------------------------


def test_gen_burgers_horizon_frame_count(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "dataset": {"kind": "burgers", "extents": [16, 16], "channels": 2,
                    "dx": 1 / 16, "dt": 0.1, "c": None, "nu": 0.01,
                    "n_steps": 100},
    })
    assert main(["gen", "--config", str(cfg)]) == 0
    assert "frames=101" in capsys.readouterr().out


def test_eval_identity_on_static_dataset_r2_one(tmp_path):
    cfg = write_config(tmp_path, {
        "dataset": {"kind": "heat", "alpha": 0.0, "c": None,
                    "boundary": "insulated"},
        "predictor": {"kind": "identity"},
    })
    assert main(["eval", "--config", str(cfg)]) == 0
    for split in ("train", "test"):
        rows = read_csv(tmp_path / "out" / f"metrics_{split}.csv")
        assert rows, split
        assert all(float(r["r2"]) == 1.0 for r in rows)
        assert all(float(r["rel_l2"]) == 0.0 for r in rows)


def test_eval_upwind_integer_courant_near_exact(tmp_path):
    cfg = write_config(tmp_path, {
        "dataset": {"extents": [128, 128], "dx": 1 / 128, "c": [1 / 128, 1 / 128],
                    "ic": {"width_fraction_range": [0.02, 0.04], "center_margin": 0.4}},
    })
    assert main(["eval", "--config", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "metrics_test.csv")
    assert all(float(r["rel_l2"]) <= 1e-10 for r in rows)


def test_eval_learned_stencil_high_r2_and_run_record(tmp_path):
    cfg = write_config(tmp_path, {
        "dataset": {"extents": [64, 64], "dx": 1 / 64, "c": [1 / 64, 0.0],
                    "n_steps": 8,
                    "ic": {"width_fraction_range": [0.03, 0.06], "center_margin": 0.35}},
        "window": [11, 11],
        "predictor": {"kind": "stencil", "sample_budget": 4096},
    })
    assert main(["eval", "--config", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "metrics_test.csv")
    assert all(float(r["r2"]) >= 0.999 for r in rows)
    record = json.loads((tmp_path / "out" / "run.json").read_text())
    assert record["window"] == [11, 11]
    assert record["seed"] == 1
    assert set(record["timings"]) == {"dataset", "fit", "evaluate"}
    assert [r["frame"] for r in record["test"]] == [int(r["frame"]) for r in rows]


def test_eval_rerun_reproduces_metrics_bit_exactly(tmp_path):
    cfg = write_config(tmp_path, {"predictor": {"kind": "stencil"}})
    assert main(["eval", "--config", str(cfg)]) == 0
    first = (tmp_path / "out" / "metrics_test.csv").read_text()
    assert main(["eval", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "metrics_test.csv").read_text() == first


def test_eval_auto_window_and_data_file(tmp_path):
    cfg = write_config(tmp_path, {"window": "auto"})
    assert main(["gen", "--config", str(cfg)]) == 0
    data = tmp_path / "out" / "dataset.ddld"
    assert main(["eval", "--config", str(cfg), "--data", str(data)]) == 0
    record = json.loads((tmp_path / "out" / "run.json").read_text())
    w = record["window"]
    assert len(w) == 2 and all(v >= 3 and v % 2 == 1 for v in w)


def test_eval_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, {"predictor": {"kind": "stencil"}})
    assert main(["eval", "--config", str(cfg), "--threads", "1"]) == 0
    serial = (tmp_path / "out" / "metrics_test.csv").read_text()
    monkeypatch.setenv("DDELD_THREADS", "3")
    assert main(["eval", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "metrics_test.csv").read_text() == serial


def test_eval_global_baseline_runs(tmp_path):
    cfg = write_config(tmp_path, {"predictor": {"kind": "global", "sample_budget": 64}})
    assert main(["eval", "--config", str(cfg)]) == 0
    record = json.loads((tmp_path / "out" / "run.json").read_text())
    assert record["window"] is None


# --- sweep -------------------------------------------------------------------


def test_sweep_emits_unique_grid(tmp_path):
    cfg = write_config(tmp_path, {
        "dataset": {"extents": [128], "dx": 1 / 16, "c": [1 / 16], "batch": 2,
                    "n_steps": 4,
                    "ic": {"kind": "harmonics", "bandwidth": 1.0,
                           "envelope_sigma": 2.0}},
        "window": "auto",
        "predictor": {"kind": "stencil", "sample_budget": 512},
    })
    assert main(["sweep", "--config", str(cfg),
                 "--windows", "3,5,3", "--freqs", "0.5,1"]) == 0
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    cells = [(r["window"], r["frequency"]) for r in rows]
    assert len(cells) == len(set(cells)) == 4
    assert all(set(r) == {"window", "frequency", "r2", "rel_l2"} for r in rows)


def test_sweep_needs_two_by_two(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["sweep", "--config", str(cfg), "--windows", "3", "--freqs", "1,2"]) == 1


# --- bench -------------------------------------------------------------------


def test_bench_writes_csv_and_slope(tmp_path, capsys):
    assert main(["bench", "--blocks", "4,8,16,32", "--reps", "2",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "log-log slope=" in out
    assert "reference identity inference" in out
    rows = read_csv(tmp_path / "bench.csv")
    assert [int(r["b_max"]) for r in rows] == [4, 8, 16, 32]
    assert all(float(r["median_seconds"]) > 0 for r in rows)


def test_bench_rejects_bad_blocks(tmp_path):
    assert main(["bench", "--blocks", "8,4,16,32", "--out", str(tmp_path)]) == 1
    assert main(["bench", "--blocks", "4,8,16", "--out", str(tmp_path)]) == 1


def test_bench_median_stable_across_repetitions(tmp_path):
    from windec.cli import bench_roundtrip

    one = dict(bench_roundtrip([16, 32, 64, 128], 1))
    nine = dict(bench_roundtrip([16, 32, 64, 128], 9))
    for b in (32, 64, 128):
        assert abs(one[b] - nine[b]) <= 0.5 * max(one[b], nine[b])


# --- probe -------------------------------------------------------------------


def test_probe_pass_lines(capsys):
    assert main(["probe", "--radius", "1", "--layers", "1"]) == 0
    assert "measured=[3, 3] predicted=3 PASS" in capsys.readouterr().out
    assert main(["probe", "--radius", "1", "--layers", "4"]) == 0
    assert "predicted=9 PASS" in capsys.readouterr().out
    assert main(["probe", "--radius", "2", "--layers", "3"]) == 0
    assert "predicted=13 PASS" in capsys.readouterr().out


def test_probe_domain_too_small_is_runtime_error(capsys):
    assert main(["probe", "--radius", "2", "--layers", "3", "--extent", "5"]) == 2


# --- sizing ------------------------------------------------------------------


def test_sizing_reports_key_value_block(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["sizing", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("l_c=")
    assert "recommended_cells=" in out
    assert (tmp_path / "out" / "sizing.txt").read_text() == out


# --- config and exit codes -----------------------------------------------------


def test_config_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["gen", "--config", str(bad)]) == 1
    assert "config error" in capsys.readouterr().err

    unknown = write_config(tmp_path, {"dataset": {"wavelength": 2}}, name="unknown.json")
    assert main(["gen", "--config", str(unknown)]) == 1
    err = capsys.readouterr().err
    assert "dataset" in err and "wavelength" in err

    assert main(["gen"]) == 1  # missing --config
    assert main(["nonsense"]) == 1


def test_runtime_errors_exit_two(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "dataset": {"c": [1.0, 0.0]},  # courant 24 cells, window radius 1
        "predictor": {"kind": "upwind"},
    })
    assert main(["eval", "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_oversized_window_exits_two(tmp_path, capsys):
    cfg = write_config(tmp_path, {"window": [51, 51]})  # grid is only 24x24
    assert main(["eval", "--config", str(cfg)]) == 2
    assert "window" in capsys.readouterr().err


def test_flag_overrides_win_over_config(tmp_path):
    cfg = write_config(tmp_path, {"predictor": {"kind": "stencil"}})
    assert main(["eval", "--config", str(cfg), "--seed", "9",
                 "--window", "5,5"]) == 0
    record = json.loads((tmp_path / "out" / "run.json").read_text())
    assert record["seed"] == 9
    assert record["window"] == [5, 5]
