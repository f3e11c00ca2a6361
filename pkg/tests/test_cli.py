import json

import numpy as np
import pytest

from stokesae import cli, pipeline
from stokesae.dataio import load_dataset
from stokesae.metrics import read_rows_csv
from stokesae.models import Autoencoder

FAST = ["--epochs", "1", "--batch-size", "32"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    path = d / "ds.saed"
    assert run("-q", "synth", "--ny", 12, "--nx", 24, "--seed", 5, "--out", path, "--truth", d / "truth.npy") == 0
    return path


def test_synth_container(dataset, tmp_path):
    ds = load_dataset(dataset)
    assert len(ds) == 288 and ds.scaling is not None
    assert {"test", "validation", "train-A"} <= set(ds.labels.tolist())
    assert ds.meta["seed"] == 5 and "quiet_sun" in ds.meta
    truth = np.load(dataset.parent / "truth.npy")
    assert truth.shape == (288, 112, 2)
    assert json.loads((dataset.parent / "truth.json").read_text())["seed"] == 5


def test_synth_fits_then_ingest(tmp_path, capsys):
    assert run("-q", "synth", "--ny", 6, "--nx", 8, "--fits-dir", tmp_path / "scans") == 0
    assert len(list((tmp_path / "scans").glob("*.fits"))) == 8
    assert run("-q", "ingest", "--scans", tmp_path / "scans", "--out", tmp_path / "raw.saed") == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["frame"] == [6, 8] and summary["n_pixels"] == 48 and summary["scaled"]


def test_split_command(dataset, tmp_path, capsys):
    assert run("-q", "split", "--dataset", dataset, "--version", "C", "--out", tmp_path / "c.saed") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["version"] == "C" and report["realised"]["train-C"] > 0
    assert "train-C" in set(load_dataset(tmp_path / "c.saed").labels.tolist())


def test_train_evaluate_flow(dataset, tmp_path, capsys):
    w = tmp_path / "m.saew"
    assert run("-q", "train", "--dataset", dataset, "--kind", "dae", "--bottleneck", 7, *FAST,
               "--out", w, "--log", tmp_path / "log.csv") == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["epochs_run"] == 1 and meta["dataset_hash"] == pipeline.dataset_hash(load_dataset(dataset))
    assert run("-q", "evaluate", "--dataset", dataset, "--weights", w, "--out", tmp_path / "ev") == 0
    rows = read_rows_csv(tmp_path / "ev" / "runs.csv")
    assert rows[0]["run"] == "DAE-7-A" and rows[0]["n_profiles"] == len(load_dataset(dataset).subset("test"))
    assert (tmp_path / "ev" / "profiles.csv").exists() and (tmp_path / "ev" / "report.json").exists()


def test_encode_decode_matches_reconstruct(dataset, tmp_path):
    w = tmp_path / "m.saew"
    assert run("-q", "train", "--dataset", dataset, "--kind", "cae", "--bottleneck", 14, *FAST, "--out", w) == 0
    assert run("-q", "encode", "--weights", w, "--dataset", dataset, "--out", tmp_path / "z.npy") == 0
    assert run("-q", "decode", "--weights", w, "--latents", tmp_path / "z.npy", "--out", tmp_path / "r.npy") == 0
    model, _ = Autoencoder.load(w)
    test = load_dataset(dataset).subset("test")
    assert np.load(tmp_path / "z.npy").shape == (len(test), 14)
    np.testing.assert_allclose(np.load(tmp_path / "r.npy"), model.reconstruct(test.profiles), atol=1e-6)
    side = json.loads((tmp_path / "r.json").read_text())
    assert side["dataset_hash"] == pipeline.dataset_hash(load_dataset(dataset))


def test_same_seed_same_weights(dataset, tmp_path):
    for name in ("a", "b"):
        assert run("-q", "train", "--dataset", dataset, "--kind", "cae", "--bottleneck", 7, "--seed", 3, *FAST,
                   "--out", tmp_path / f"{name}.saew") == 0
    assert (tmp_path / "a.saew").read_bytes() == (tmp_path / "b.saew").read_bytes()


def test_sweep_matches_standalone(dataset, tmp_path, capsys):
    assert run("-q", "sweep", "--dataset", dataset, "--kinds", "CAE", "--bottlenecks", "7,14", "--versions", "A",
               "--version-bottleneck", 14, *FAST, "--out", tmp_path / "sw") == 0
    rows = {r["run"]: r for r in read_rows_csv(tmp_path / "sw" / "runs.csv")}
    assert set(rows) == {"CAE-7-A", "CAE-14-A"}
    capsys.readouterr()
    w = tmp_path / "alone.saew"
    assert run("-q", "train", "--dataset", dataset, "--kind", "cae", "--bottleneck", 14, *FAST, "--out", w) == 0
    assert run("-q", "evaluate", "--dataset", dataset, "--weights", w, "--out", tmp_path / "ev") == 0
    alone = read_rows_csv(tmp_path / "ev" / "runs.csv")[0]
    for key in ("LLC_I", "RLC_I", "LLC_V", "RLC_V", "chi2_I"):
        assert alone[key] == rows["CAE-14-A"][key]
    assert (tmp_path / "sw" / "CAE-7-A" / "weights.saew").exists()


def test_config_precedence(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"epochs": 3, "batch_size": 64}, "model": {"kind": "DAE", "bottleneck": 7}}))
    assert run("-q", "train", "--config", cfg, "--dataset", dataset, "--epochs", 1, "--out", tmp_path / "m.saew") == 0
    meta = json.loads(capsys.readouterr().out)
    assert meta["epochs_run"] == 1
    _, saved = Autoencoder.load(tmp_path / "m.saew")
    assert saved["kind"] == "DAE" and saved["bottleneck"] == 7


def test_unknown_config_key(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trian": {}}))
    assert run("train", "--config", cfg, "--dataset", dataset, "--out", tmp_path / "m.saew") == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_report_merges_and_refuses_mixed(dataset, tmp_path):
    recon = load_dataset(dataset).subset("test").profiles
    np.save(tmp_path / "ident.npy", recon)
    assert run("-q", "evaluate", "--dataset", dataset, "--reconstructions", tmp_path / "ident.npy",
               "--out", tmp_path / "e1") == 0
    assert run("-q", "evaluate", "--dataset", dataset, "--reconstructions", tmp_path / "ident.npy", "--name", "two",
               "--out", tmp_path / "e2") == 0
    assert run("-q", "report", tmp_path / "e1", tmp_path / "e2", "--out", tmp_path / "all") == 0
    rows = read_rows_csv(tmp_path / "all" / "runs.csv")
    assert [r["run"] for r in rows] == ["ident", "two"]
    assert rows[0]["LLC_I"] < 1e-6  # reconstructions equal to the observations
    meta = json.loads((tmp_path / "e2" / "report.json").read_text())
    meta["meta"]["dataset_hash"] = "0" * 64
    (tmp_path / "e2" / "report.json").write_text(json.dumps(meta))
    assert run("-q", "report", tmp_path / "e1", tmp_path / "e2", "--out", tmp_path / "bad") == 1


def test_describe(capsys, tmp_path):
    assert run("describe", "--kind", "cae", "--bottleneck", 28) == 0
    out = capsys.readouterr().out
    assert "Dense_28" in out and "(112, 2)" in out


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as info:
            run("train", "--kind", "VAE", "--dataset", "x", "--out", "y")
        assert info.value.code == 2

    def test_missing_subcommand_is_2(self):
        with pytest.raises(SystemExit) as info:
            run()
        assert info.value.code == 2

    def test_missing_file_is_1(self, tmp_path, capsys):
        assert run("train", "--dataset", tmp_path / "nope.saed", "--out", tmp_path / "m.saew") == 1
        assert capsys.readouterr().err.startswith("error: ")

    def test_corrupt_container_is_1(self, tmp_path, capsys):
        (tmp_path / "bad.saed").write_bytes(b"garbage")
        assert run("describe", "--dataset", tmp_path / "bad.saed") == 1
        assert "FormatError" in capsys.readouterr().err

    def test_wrong_reconstruction_shape_is_1(self, dataset, tmp_path):
        np.save(tmp_path / "r.npy", np.zeros((3, 112, 2)))
        assert run("-q", "evaluate", "--dataset", dataset, "--reconstructions", tmp_path / "r.npy",
                   "--out", tmp_path / "e") == 1
