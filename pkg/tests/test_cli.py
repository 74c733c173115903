import json

import pytest

from classdisco.cli import main
from classdisco.config import ConfigError, config_to_dict, parse_config


def base_config(**overrides):
    doc = {
        "data": {
            "kind": "synthetic",
            "n_classes": 6,
            "dim": 8,
            "separation": 8.0,
            "per_class_n": 60,
            "seed": 2,
        },
        "split": {"held_out_classes": [3, 4, 5], "seed": 1},
        "net": {"hidden_dims": [32]},
        "adam": {"seed": 3},
        "kmeans": {"k": 6, "restarts": 3, "seed": 4},
        "policy": {"kind": "learnability", "seed": 5},
        "epochs_initial": 5,
        "epochs_per_round": 2,
        "seed": 6,
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestValidate:
    def test_valid_config(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config())
        assert main(["validate", "--config", path]) == 0
        assert "ok" in capsys.readouterr().out

    def test_unknown_key_rejected(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(extra_knob=3))
        assert main(["validate", "--config", path]) == 1
        assert "extra_knob" in capsys.readouterr().err

    def test_bad_quantile(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(detector_quantile=1.5))
        assert main(["validate", "--config", path]) == 1
        assert "quantile" in capsys.readouterr().err

    def test_k_exceeding_pool(self, tmp_path, capsys):
        doc = base_config()
        doc["kmeans"]["k"] = 500
        path = write_config(tmp_path, doc)
        assert main(["validate", "--config", path]) == 1
        assert "pool" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, capsys):
        doc = base_config()
        doc["data"] = {"kind": "idx", "images": "/nope/im.idx", "labels": "/nope/lb.idx"}
        path = write_config(tmp_path, doc)
        assert main(["validate", "--config", path]) == 1
        assert "missing" in capsys.readouterr().err

    def test_unreadable_config(self, capsys):
        assert main(["validate", "--config", "/nope/exp.json"]) == 1

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["validate", "--config", str(path)]) == 1

    def test_rounds_beyond_held_out(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(rounds=7))
        assert main(["validate", "--config", path]) == 1
        assert "rounds" in capsys.readouterr().err


class TestConfigRoundTrip:
    def test_parse_then_echo_is_stable(self, tmp_path):
        cfg = parse_config(base_config())
        echoed = config_to_dict(cfg)
        assert parse_config(echoed) == cfg

    def test_defaults_materialized(self):
        cfg = parse_config(base_config())
        doc = config_to_dict(cfg)
        assert doc["adam"]["learning_rate"] == 0.001
        assert doc["adam"]["epsilon"] == 1e-7
        assert doc["kmeans"]["restarts"] == 3
        assert doc["ood_mode"] == "oracle"

    def test_nested_unknown_key(self):
        doc = base_config()
        doc["adam"]["momentum"] = 0.9
        with pytest.raises(ConfigError, match="momentum"):
            parse_config(doc)


class TestDiscover:
    def test_static_run_writes_outputs(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config())
        out = tmp_path / "run_static"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        assert (out / "curves.csv").exists()
        assert (out / "clusters.csv").exists()
        curves = (out / "curves.csv").read_text().splitlines()
        assert curves[0] == "round,dra,mean_cluster_accuracy,ood_pool_size,train_loss"
        assert len(curves) == 2

    def test_dynamic_run_and_report_shape(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = tmp_path / "run_dyn"
        assert main(["discover", "--config", path, "--mode", "dynamic", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["schema"] == "classdisco-report/v1"
        assert report["mode"] == "dynamic"
        assert len(report["rounds"]) == 4  # 3 held-out classes + round 0
        assert report["final_dra"] == report["rounds"][-1]["dra"]
        assert len(report["accepted"]) == 3
        assert report["seed_registry"]["master"] == 6
        curves = (out / "curves.csv").read_text().splitlines()
        assert len(curves) == 5

    def test_rerun_from_report_is_byte_identical(self, tmp_path):
        path = write_config(tmp_path, base_config())
        first = tmp_path / "first"
        again = tmp_path / "again"
        assert main(["discover", "--config", path, "--mode", "dynamic", "--out", str(first)]) == 0
        assert (
            main(
                [
                    "discover",
                    "--config",
                    str(first / "report.json"),
                    "--mode",
                    "dynamic",
                    "--out",
                    str(again),
                ]
            )
            == 0
        )
        assert (first / "curves.csv").read_bytes() == (again / "curves.csv").read_bytes()
        assert (first / "clusters.csv").read_bytes() == (again / "clusters.csv").read_bytes()

    def test_parallel_workers_identical(self, tmp_path):
        path = write_config(tmp_path, base_config())
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(serial)]) == 0
        assert (
            main(
                [
                    "discover",
                    "--config",
                    path,
                    "--mode",
                    "static",
                    "--out",
                    str(parallel),
                    "--workers",
                    "4",
                ]
            )
            == 0
        )
        assert (serial / "curves.csv").read_bytes() == (parallel / "curves.csv").read_bytes()

    def test_emitted_report_revalidates(self, tmp_path):
        path = write_config(tmp_path, base_config())
        out = tmp_path / "run"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(out)]) == 0
        assert main(["validate", "--config", str(out / "report.json")]) == 0

    def test_missing_data_file_exits_one(self, tmp_path, capsys):
        doc = base_config()
        doc["data"] = {"kind": "csv", "path": str(tmp_path / "absent.csv")}
        path = write_config(tmp_path, doc)
        out = tmp_path / "run"
        assert main(["discover", "--config", path, "--out", str(out)]) == 1
        assert "absent.csv" in capsys.readouterr().err

    def test_config_error_exits_one(self, tmp_path):
        path = write_config(tmp_path, base_config(mystery=1))
        assert main(["discover", "--config", path, "--out", str(tmp_path / "x")]) == 1

    def test_detector_mode_serialized_in_report(self, tmp_path):
        path = write_config(tmp_path, base_config(ood_mode="detector", detector_quantile=0.9))
        out = tmp_path / "det"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        detector = report["detector"]
        assert detector["quantile"] == 0.9
        assert 0.0 <= detector["threshold"] <= 1.0
        assert detector["calibration_size"] == 180

    def test_numerical_failure_exits_two(self, tmp_path, capsys):
        csv = tmp_path / "poisoned.csv"
        rows = ["f0,f1,label", "nan,0.3,0"]  # poisoned training sample
        rows += [f"0.{i},0.{i},{i % 2}" for i in range(1, 9)]
        rows += ["0.5,9.0,2", "0.6,9.1,2", "0.7,9.2,2"]
        csv.write_text("\n".join(rows) + "\n")
        doc = base_config()
        doc["data"] = {"kind": "csv", "path": str(csv)}
        doc["split"] = {"held_out_classes": [2], "seed": 0}
        doc["kmeans"]["k"] = 2
        path = write_config(tmp_path, doc)
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(tmp_path / "x")]) == 2
        assert "runtime failure" in capsys.readouterr().err

    def test_workers_env_override(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, base_config())
        baseline = tmp_path / "noenv"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(baseline)]) == 0
        monkeypatch.setenv("CLASSDISCO_WORKERS", "3")
        enved = tmp_path / "env"
        assert main(["discover", "--config", path, "--mode", "static", "--out", str(enved)]) == 0
        assert (baseline / "curves.csv").read_bytes() == (enved / "curves.csv").read_bytes()
        report = json.loads((enved / "report.json").read_text())
        assert report["workers"] == 3


class TestClassCount:
    def test_writes_table(self, tmp_path):
        doc = base_config()
        doc["data"]["n_classes"] = 10
        doc["data"]["per_class_n"] = 40
        doc["kmeans"]["k"] = 5
        doc["epochs_initial"] = 3
        path = write_config(tmp_path, doc)
        out = tmp_path / "cc"
        assert main(["classcount", "--config", path, "--counts", "2,3", "--out", str(out)]) == 0
        rows = (out / "classcount.csv").read_text().splitlines()
        assert rows[0] == "class_count,mean_cluster_accuracy"
        assert len(rows) == 3
        assert rows[1].startswith("2,")
        assert rows[2].startswith("3,")

    def test_duplicate_counts_warn_and_dedupe(self, tmp_path, capsys):
        doc = base_config()
        doc["data"]["n_classes"] = 10
        doc["data"]["per_class_n"] = 40
        doc["kmeans"]["k"] = 5
        doc["epochs_initial"] = 3
        path = write_config(tmp_path, doc)
        out = tmp_path / "cc"
        assert main(["classcount", "--config", path, "--counts", "2,2,3", "--out", str(out)]) == 0
        captured = capsys.readouterr()
        assert "duplicate" in captured.err
        rows = (out / "classcount.csv").read_text().splitlines()
        assert len(rows) == 3

    def test_invalid_count_exits_one(self, tmp_path, capsys):
        doc = base_config()
        doc["data"]["n_classes"] = 10
        doc["data"]["per_class_n"] = 40
        path = write_config(tmp_path, doc)
        assert main(["classcount", "--config", path, "--counts", "1", "--out", str(tmp_path / "x")]) == 1
