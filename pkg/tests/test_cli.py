import csv
import json

import pytest

from seal_hil import cli
from seal_hil.expert import DemoDataset


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "kd.jsonl"
    assert run("gen-data", "--env", "keydoor", "--n", 3, "--seed", 1, "--out", out) == 0
    return out


def test_gen_data_writes_dataset_and_manifest(data):
    ds = DemoDataset.from_jsonl(data)
    assert len(ds) == 3 and not ds.labeled
    manifest = json.loads(data.with_suffix(".manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["hashes"]["dataset"] == cli.sha256_file(data)


def test_usage_errors(tmp_path):
    assert run("gen-data", "--env", "keydoor", "--n", 0, "--out", tmp_path / "x.jsonl") == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        run("train", "--method", "nope")
    assert err.value.code == cli.EXIT_USAGE
    assert run("reproduce", "no-such-bundle") == cli.EXIT_USAGE


def test_missing_inputs(tmp_path):
    assert run("label", "--data", tmp_path / "missing.jsonl") == cli.EXIT_INPUT
    assert run("eval", "--checkpoint", tmp_path / "missing.ckpt") == cli.EXIT_INPUT
    assert run("train", "--config", tmp_path / "missing.yaml") == cli.EXIT_INPUT


def test_label_oracle_then_cached(data, tmp_path, capsys):
    cache = tmp_path / "cache.jsonl"
    out = tmp_path / "labeled.jsonl"
    assert run("label", "--data", data, "--cache", cache, "--out", out) == 0
    first = capsys.readouterr().out
    assert DemoDataset.from_jsonl(out).labeled
    assert run("label", "--data", data, "--cache", cache, "--out", out) == 0
    assert "(0 backend queries)" in capsys.readouterr().out
    assert "(0 backend queries)" not in first


def test_remote_without_credential_writes_nothing(data, tmp_path, monkeypatch):
    monkeypatch.delenv("SEAL_CLI_TEST_KEY", raising=False)
    before = sorted(p.name for p in tmp_path.iterdir())
    code = run("label", "--data", data, "--backend", "remote", "--endpoint", "http://127.0.0.1:9",
               "--model", "m", "--credential-env", "SEAL_CLI_TEST_KEY")
    assert code == cli.EXIT_BACKEND
    assert sorted(p.name for p in tmp_path.iterdir()) == before


def test_credential_never_lands_on_disk(data, tmp_path, monkeypatch):
    secret = "sk-test-not-a-real-credential"
    monkeypatch.setenv("SEAL_CLI_TEST_KEY", secret)
    run("label", "--data", data, "--backend", "remote", "--endpoint", "http://127.0.0.1:9",
        "--model", "m", "--credential-env", "SEAL_CLI_TEST_KEY", "--workers", 1)
    for p in tmp_path.rglob("*"):
        if p.is_file():
            assert secret not in p.read_text(errors="ignore")


def train_args(out, seed=0, extra=()):
    return ["train", "--method", "seal", "--env", "keydoor", "--demos", 3, "--seed", seed, "--epochs", 2,
            "--hidden", 16, 16, "--val-every", 1, "--val-episodes", 3, "--out-dir", out, *extra]


def test_train_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*train_args(a)) == 0
    assert run(*train_args(b)) == 0
    for name in ("model.ckpt", "trace.csv", "dataset.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["hashes"] == mb["hashes"] and ma["config"]["lr"] == 5e-5


def test_config_file_layering(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("lr: 0.001\nbatch-size: 16\nepochs: 7\n")
    out = tmp_path / "run"
    assert run(*train_args(out, extra=["--config", cfg])) == 0
    config = json.loads((out / "manifest.json").read_text())["config"]
    assert config["lr"] == 0.001 and config["batch_size"] == 16
    assert config["epochs"] == 2  # the flag wins over the file


def test_train_from_file_and_eval(data, tmp_path, capsys):
    labeled = tmp_path / "l.jsonl"
    run("label", "--data", data, "--out", labeled, "--cache", tmp_path / "c.jsonl")
    out = tmp_path / "run"
    assert run("train", "--method", "tc", "--data", labeled, "--epochs", 1, "--hidden", 8, 8, "--out-dir", out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["hashes"]["dataset"] == cli.sha256_file(labeled)
    capsys.readouterr()
    trace = tmp_path / "trace.jsonl"
    assert run("eval", "--checkpoint", out / "model.ckpt", "--episodes", 5, "--trace", trace) == 0
    report = json.loads(capsys.readouterr().out.split("trace:")[0])
    assert report["episodes"] == 5 and report["method"] == "tc"
    assert trace.exists()
    assert run("eval", "--checkpoint", out / "model.ckpt", "--env", "grid3") == cli.EXIT_INPUT


def test_unlabeled_data_rejected_for_label_methods(data, tmp_path):
    assert run("train", "--method", "seal", "--data", data, "--epochs", 1, "--out-dir", tmp_path / "r") == cli.EXIT_INPUT


def test_reproduce_small_bundle_and_plot(tmp_path):
    code = run("reproduce", "table2", "--seeds", 0, 1, "--demos", 3, "--methods", "bc", "seal",
               "--epochs", 1, "--episodes", 4, "--out-dir", tmp_path)
    assert code == 0
    root = tmp_path / "table2"
    table = (root / "table.md").read_text()
    assert "| BC | SEAL |" in table and "pick up the key" in table
    with (root / "summary.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert {r["method"] for r in rows} == {"bc", "seal"}
    assert all(r["seeds"] == "0 1" for r in rows)
    assert (root / "seal_n3" / "1" / "manifest.json").exists()
    pytest.importorskip("matplotlib")
    assert run("plot", root / "summary.csv", "--out", tmp_path / "p.png") == 0
    assert (tmp_path / "p.png").stat().st_size > 0


def test_sweep_rejects_bad_k(tmp_path):
    assert run("sweep", "--k", 1, 4, "--out-dir", tmp_path) == cli.EXIT_USAGE


def test_sweep_small(tmp_path):
    code = run("sweep", "--k", 2, 4, "--methods", "lisa", "--demos", 3, "--seeds", 0, "--epochs", 1,
               "--episodes", 3, "--out-dir", tmp_path)
    assert code == 0
    with (tmp_path / "ksweep" / "summary.csv").open() as f:
        assert sorted(r["k"] for r in csv.DictReader(f)) == ["2", "4"]
