import json

import numpy as np
import pytest

from lipcap.cli import main
from lipcap.datasets import gaussian_blobs
from lipcap.modelio import save_dataset_csv, save_model
from lipcap.network import LayerSpec, NetworkSpec, validate_network


def identity_model(tmp_path, name="id.json"):
    spec = validate_network(
        NetworkSpec(2, [LayerSpec(W=np.eye(2)), LayerSpec(W=np.eye(2))])
    )
    path = tmp_path / name
    save_model(spec, path)
    return path


def blob_csv(tmp_path, name, n=60, seed=0):
    X, labels = gaussian_blobs(n, seed=seed)
    path = tmp_path / name
    save_dataset_csv(path, X, labels=labels)
    return path


class TestWitnessCommand:
    def test_reference_configuration(self, tmp_path, capsys):
        out = tmp_path / "w"
        rc = main([
            "witness", "--widths", "3,2,4", "--a", "2,3", "--seed", "0",
            "--out", str(out),
        ])
        assert rc == 0
        verify = json.loads((tmp_path / "w.verify.json").read_text())
        assert verify["analytic"]["value"] == 6.0
        assert abs(verify["oracle_directional"]["value"] - 6.0) <= 1e-9
        assert verify["residual"]["value"] <= 1e-9
        assert (tmp_path / "w.model.json").exists()


class TestAnalyzeCommand:
    def test_identity_model(self, tmp_path):
        model = identity_model(tmp_path)
        out = tmp_path / "report.json"
        rc = main(["analyze", "--model", str(model), "--out", str(out)])
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["kind"] == "capacity"
        assert report["pw"]["value"] == 1.0
        assert report["input_lipschitz_upper"]["value"] == 1.0

    def test_missing_model_is_contract_error(self, tmp_path):
        rc = main(["analyze", "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path / "r.json")])
        assert rc == 1

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            main(["analyze"])  # missing required flags
        assert exc.value.code == 2


class TestTrainAndPlot:
    def test_train_then_plot(self, tmp_path):
        data = blob_csv(tmp_path, "train.csv", n=150, seed=1)
        prefix = tmp_path / "run"
        rc = main([
            "train", "--data", str(data), "--widths", "6,6", "--epochs", "2",
            "--batch-size", "64", "--seed", "3", "--out", str(prefix),
        ])
        assert rc == 0
        trace = tmp_path / "run.trace.csv"
        assert trace.exists() and (tmp_path / "run.model.json").exists()
        svg = tmp_path / "plot.svg"
        rc = main(["plot", "--data", str(trace), "--out", str(svg)])
        assert rc == 0
        text = svg.read_text()
        assert text.startswith("<svg") and "polyline" in text

    def test_plot_flat_series_pads_range(self, tmp_path):
        data = blob_csv(tmp_path, "train.csv", n=150, seed=1)
        prefix = tmp_path / "frozen"
        main([
            "train", "--data", str(data), "--widths", "6,6", "--epochs", "1",
            "--batch-size", "64", "--lr", "0.0", "--weight-decay", "0.0",
            "--seed", "3", "--out", str(prefix),
        ])
        svg = tmp_path / "flat.svg"
        rc = main(["plot", "--data", str(tmp_path / "frozen.trace.csv"),
                   "--panels", "pw", "--out", str(svg)])
        assert rc == 0
        assert "polyline" in svg.read_text()

    def test_plot_empty_trace_errors_without_file(self, tmp_path):
        from lipcap.modelio import TRACE_COLUMNS

        bad = tmp_path / "empty.csv"
        bad.write_text(",".join(TRACE_COLUMNS) + "\n")
        out = tmp_path / "none.svg"
        rc = main(["plot", "--data", str(bad), "--out", str(out)])
        assert rc == 1
        assert not out.exists()


class TestGenboundCommand:
    def test_end_to_end(self, tmp_path):
        spec = validate_network(
            NetworkSpec(2, [LayerSpec(W=np.zeros((3, 2)), activation="identity")])
        )
        model = tmp_path / "zero3.json"
        save_model(spec, model)
        X, labels = gaussian_blobs(80, seed=5)
        train_csv = tmp_path / "train.csv"
        eval_csv = tmp_path / "eval.csv"
        save_dataset_csv(train_csv, X[:60], labels=labels[:60])
        save_dataset_csv(eval_csv, X[60:], labels=labels[60:])
        out = tmp_path / "gb.json"
        rc = main([
            "genbound", "--model", str(model), "--data", str(train_csv),
            "--eval", str(eval_csv), "--bins", "2", "--delta", "0.1",
            "--capacity-C", "50", "--pairs", "100", "--seed", "0",
            "--out", str(out),
        ])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["kind"] == "genbound"
        assert rep["total"]["value"] >= rep["f_emp"]["value"]


class TestGradcheckCommand:
    def test_small_battery(self, tmp_path, capsys):
        out = tmp_path / "g.json"
        rc = main(["gradcheck", "--n", "5", "--seed", "0", "--out", str(out)])
        assert rc == 0
        table = capsys.readouterr().out
        assert "pass" in table
        rep = json.loads(out.read_text())
        assert len(rep["checks"]) == 5


class TestDeterminism:
    def _run_twice(self, argv_builder, tmp_path, outputs):
        blobs = {}
        for tag in ("one", "two"):
            d = tmp_path / tag
            d.mkdir()
            rc = main(argv_builder(d))
            assert rc == 0
            blobs[tag] = [(d / name).read_bytes() for name in outputs]
        assert blobs["one"] == blobs["two"]

    def test_witness_is_byte_stable(self, tmp_path):
        self._run_twice(
            lambda d: ["witness", "--widths", "4,3,2", "--a", "1.5,2", "--seed", "7",
                       "--out", str(d / "w")],
            tmp_path,
            ["w.model.json", "w.verify.json"],
        )

    def test_train_is_byte_stable(self, tmp_path):
        data = blob_csv(tmp_path, "train.csv", n=150, seed=2)
        self._run_twice(
            lambda d: ["train", "--data", str(data), "--widths", "6,6", "--epochs", "1",
                       "--batch-size", "64", "--seed", "5", "--out", str(d / "r")],
            tmp_path,
            ["r.trace.csv", "r.model.json"],
        )

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LIPCAP_SEED", "13")
        rc = main(["dataset", "--samples", "20", "--out", str(tmp_path / "env.csv")])
        assert rc == 0
        rc = main(["dataset", "--samples", "20", "--seed", "13",
                   "--out", str(tmp_path / "flag.csv")])
        assert rc == 0
        assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()
