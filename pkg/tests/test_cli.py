import json

import numpy as np
import pytest

from conftest import base_config
from kasync.cli import main
from kasync.errors import UsageError
from kasync.output import METRICS_COLUMNS, read_table
from kasync.plots import emit_plots
from kasync.runner import expand_sweep, run_sweep


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def cfg_file(tmp_path):
    return write(tmp_path / "cfg.json", base_config())


class TestRun:
    def test_single_iteration(self, tmp_path):
        cfg = write(tmp_path / "c.json", base_config(iterations=1))
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
        lines = (tmp_path / "r" / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRICS_COLUMNS)
        assert len(lines) == 2

    def test_rerun_byte_identical(self, tmp_path, cfg_file):
        for name in ("a", "b"):
            assert main(["run", "--config", cfg_file, "--out", str(tmp_path / name)]) == 0
        for f in ("metrics.csv", "aggregation.csv", "summary.json", "config.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_config_echo_reruns(self, tmp_path, cfg_file):
        main(["run", "--config", cfg_file, "--out", str(tmp_path / "a")])
        echo = str(tmp_path / "a" / "config.json")
        main(["run", "--config", echo, "--out", str(tmp_path / "b")])
        assert ((tmp_path / "a" / "metrics.csv").read_bytes()
                == (tmp_path / "b" / "metrics.csv").read_bytes())

    def test_floats_round_trip(self, tmp_path, cfg_file):
        main(["run", "--config", cfg_file, "--out", str(tmp_path / "a")])
        rows = read_table(tmp_path / "a" / "metrics.csv")
        assert all(float(repr(float(r["eta"]))) == float(r["eta"]) for r in rows)
        assert "\r" not in (tmp_path / "a" / "metrics.csv").read_text()

    def test_invalid_config_exit_two(self, tmp_path, capsys):
        bad = base_config()
        bad["partition"]["L_num"] = 0
        rc = main(["run", "--config", write(tmp_path / "c.json", bad), "--out", str(tmp_path)])
        assert rc == 2
        assert "partition.L_num" in capsys.readouterr().err

    def test_missing_seed(self, tmp_path, capsys):
        bad = base_config()
        del bad["seed"]
        rc = main(["run", "--config", write(tmp_path / "c.json", bad), "--out", str(tmp_path)])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_numeric_failure_exit_three(self, tmp_path, capsys):
        bad = base_config(algorithm={"variant": "kavg", "eta0": 1e308})
        rc = main(["run", "--config", write(tmp_path / "c.json", bad), "--out", str(tmp_path / "r")])
        assert rc == 3
        assert "iteration=" in capsys.readouterr().err


class TestSweep:
    def sweep(self, **axes):
        return {"base": base_config(iterations=10), "axes": axes}

    def test_four_variants_four_dirs(self, tmp_path):
        sw = write(tmp_path / "s.json", self.sweep(variants=["wkafl", "twafl", "sasgd", "gsgm"]))
        assert main(["sweep", "--config", sw, "--out", str(tmp_path / "out")]) == 0
        cells = sorted(p.name for p in (tmp_path / "out").iterdir() if p.is_dir())
        assert len(cells) == 4

    def test_two_by_two_rows(self, tmp_path):
        rows = run_sweep(self.sweep(variants=["wkafl", "kavg"], seeds=[1, 2]), tmp_path)
        assert len(rows) == 4
        assert len(read_table(tmp_path / "sweep_summary.csv")) == 4

    def test_parallel_matches_serial(self, tmp_path):
        sw = self.sweep(variants=["wkafl", "sasgd"])
        run_sweep(sw, tmp_path / "a", parallel=1)
        run_sweep(sw, tmp_path / "b", parallel=2)
        assert ((tmp_path / "a" / "sweep_summary.csv").read_bytes()
                == (tmp_path / "b" / "sweep_summary.csv").read_bytes())

    def test_empty_axis(self):
        with pytest.raises(UsageError):
            expand_sweep(self.sweep(seeds=[]))

    def test_empty_axis_exit_code(self, tmp_path):
        sw = write(tmp_path / "s.json", self.sweep(variants=[]))
        assert main(["sweep", "--config", sw, "--out", str(tmp_path / "o")]) == 2

    def test_per_variant_params(self):
        sw = self.sweep(variants=["wkafl", "gsgm"])
        sw["algorithms"] = {"gsgm": {"mu_g": 0.5}}
        cells = dict(expand_sweep(sw))
        gsgm = next(v for k, v in cells.items() if "gsgm" in k)
        assert gsgm["algorithm"] == {"variant": "gsgm", "eta0": 0.1, "mu_g": 0.5}


class TestPlotAndPartition:
    def test_run_plots(self, tmp_path, cfg_file):
        main(["run", "--config", cfg_file, "--out", str(tmp_path / "r")])
        files = emit_plots(tmp_path / "r")
        assert len(files) == 3
        assert all(f.suffix == ".svg" and f.stat().st_size > 0 for f in files)

    def test_sweep_plots_one_per_cell(self, tmp_path):
        sw = {"base": base_config(iterations=10),
              "axes": {"pk": [[6, 2], [6, 3]], "L_num": [1, 2], "variants": ["wkafl", "kavg"]}}
        run_sweep(sw, tmp_path)
        assert main(["plot", str(tmp_path)]) == 0
        assert len(list((tmp_path / "plots").glob("*.svg"))) == 4

    def test_plots_deterministic(self, tmp_path, cfg_file):
        main(["run", "--config", cfg_file, "--out", str(tmp_path / "r")])
        emit_plots(tmp_path / "r")
        a = (tmp_path / "r" / "plots" / "accuracy.svg").read_bytes()
        emit_plots(tmp_path / "r")
        assert a == (tmp_path / "r" / "plots" / "accuracy.svg").read_bytes()

    def test_empty_dir(self, tmp_path):
        with pytest.raises(UsageError):
            emit_plots(tmp_path)
        assert main(["plot", str(tmp_path)]) == 2

    def test_partition_dump(self, tmp_path, cfg_file):
        assert main(["partition", "--config", cfg_file, "--out", str(tmp_path / "p")]) == 0
        rows = read_table(tmp_path / "p" / "partition.csv")
        cfg = base_config()
        assert {int(r["client_id"]) for r in rows} == set(range(cfg["partition"]["P"]))
        per_client = {}
        for r in rows:
            per_client.setdefault(r["client_id"], []).append(int(r["count"]))
        assert all(len(v) == cfg["partition"]["L_num"] for v in per_client.values())
        shards = np.load(tmp_path / "p" / "shards.npz")
        assert len(shards["labels_0"]) == sum(per_client["0"])
