import csv
import json
from pathlib import Path

import pytest

from diffch.cli import main
from diffch.config import ExperimentConfig, derive_seed, load_config, parse_ini, snapshot_text
from diffch.errors import ConfigError

SMOKE = Path(__file__).resolve().parents[1] / "configs" / "smoke.ini"


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    root = tmp_path_factory.mktemp("chain")
    assert run("gen", "--config", SMOKE, "--out", root / "g") == 0
    ds = root / "g" / "dataset.bin"
    assert run("train", "--config", SMOKE, "--dataset", ds, "--out", root / "t") == 0
    ck = root / "t" / "model.ckpt"
    assert run("classify", "--config", SMOKE, "--dataset", ds, "--checkpoint", ck, "--out", root / "c") == 0
    return root


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.F == 400 and cfg.M == 32 and len(cfg.profiles) == 3
        assert cfg.snrs == (0.0, 5.0, 10.0, 15.0, 20.0, 30.0)

    def test_ini_values(self):
        cfg = load_config(SMOKE)
        assert cfg.F == 16 and cfg.train.steps == 30 and cfg.train.model["hidden_size"] == 8
        assert cfg.snrs[-1] == float("inf")

    def test_snapshot_round_trip(self, tmp_path):
        cfg = load_config(SMOKE)
        (tmp_path / "c.json").write_text(snapshot_text(cfg))
        again = load_config(tmp_path / "c.json")
        assert snapshot_text(again) == snapshot_text(cfg)

    @pytest.mark.parametrize("text", [
        "[experiment]\nbogus = 1\n",
        "[train]\nsteps = many\n",
        "[model]\nwidth = 3\n",
        "[experiment]\nrates = 0.5, 1.5\n",
        "[experiment]\nF = 4\n",  # default profile delays exceed F
        "[other]\n",
        "[train]\noptimizer = lbfgs\n",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_ini(text)

    def test_seed_derivation(self):
        assert derive_seed(3, 1) == derive_seed(3, 1)
        assert len({derive_seed(3, k) for k in range(6)}) == 6
        assert derive_seed(3, 1) != derive_seed(4, 1)


class TestCommands:
    def test_gen_outputs(self, chain, capsys):
        header = (chain / "g" / "dataset.bin").read_bytes().split(b"\n", 1)[0]
        assert header == b"DIFFCH v1 F=16 C=3 N=60"
        assert len(rows(chain / "g" / "features.csv")) == 61
        snap = json.loads((chain / "g" / "config.json").read_text())
        assert snap["seed"] == 1 and snap["per_scenario"] == 20

    def test_loss_rows_equal_steps(self, chain):
        assert len(rows(chain / "t" / "loss.csv")) == 1 + 30

    def test_results_cover_test_split(self, chain):
        r = rows(chain / "c" / "results.csv")
        assert r[0][:3] == ["sample_id", "true_label", "pred_label"] and len(r[0]) == 9
        assert len(r) == 1 + 30

    def test_reruns_are_byte_identical(self, chain, tmp_path):
        ds = chain / "g" / "dataset.bin"
        assert run("gen", "--config", SMOKE, "--out", tmp_path / "g") == 0
        assert (tmp_path / "g" / "dataset.bin").read_bytes() == ds.read_bytes()
        assert run("train", "--config", SMOKE, "--dataset", ds, "--out", tmp_path / "t") == 0
        assert (tmp_path / "t" / "model.ckpt").read_bytes() == (chain / "t" / "model.ckpt").read_bytes()
        assert run("classify", "--config", SMOKE, "--dataset", ds, "--checkpoint", chain / "t" / "model.ckpt",
                   "--out", tmp_path / "c", "--threads", "2") == 0
        assert (tmp_path / "c" / "results.csv").read_bytes() == (chain / "c" / "results.csv").read_bytes()

    def test_snapshot_reproduces_dataset(self, chain, tmp_path):
        assert run("gen", "--config", chain / "g" / "config.json", "--out", tmp_path) == 0
        assert (tmp_path / "dataset.bin").read_bytes() == (chain / "g" / "dataset.bin").read_bytes()

    def test_seed_flag_changes_dataset(self, chain, tmp_path):
        assert run("gen", "--config", SMOKE, "--seed", 2, "--out", tmp_path) == 0
        assert (tmp_path / "dataset.bin").read_bytes() != (chain / "g" / "dataset.bin").read_bytes()

    def test_sweeps(self, chain, tmp_path):
        ds, ck = chain / "g" / "dataset.bin", chain / "t" / "model.ckpt"
        assert run("sweep-rate", "--config", SMOKE, "--dataset", ds, "--out", tmp_path / "r") == 0
        r = rows(tmp_path / "r" / "sweep_rate.csv")
        assert r[0] == ["rate", "diff_acc", "baseline_acc"] and len(r) == 3
        assert all(0 <= float(v) <= 1 for row in r[1:] for v in row[1:])
        assert run("sweep-snr", "--config", SMOKE, "--dataset", ds, "--checkpoint", ck, "--out", tmp_path / "s") == 0
        s = rows(tmp_path / "s" / "sweep_snr.csv")
        assert [row[0] for row in s[1:]] == ["0.0", "10.0", "inf"]
        clean = json.loads((chain / "c" / "summary.json").read_text())
        assert float(s[-1][1]) == clean["diff_acc"] and float(s[-1][2]) == clean["baseline_acc"]

    def test_exit_codes(self, chain, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[train]\nsteps = 0\n")
        assert run("gen", "--config", bad, "--out", tmp_path) == 2
        assert run("train", "--config", SMOKE, "--out", tmp_path) == 2  # no --dataset
        assert run("train", "--config", SMOKE, "--dataset", tmp_path / "missing.bin", "--out", tmp_path) == 4
        (tmp_path / "junk.bin").write_bytes(b"nope")
        assert run("train", "--config", SMOKE, "--dataset", tmp_path / "junk.bin", "--out", tmp_path) == 4
        boom = tmp_path / "boom.ini"
        boom.write_text(SMOKE.read_text().replace("[train]\n", "[train]\nlr = 1e300\noptimizer = sgd\n"))
        assert run("train", "--config", boom, "--dataset", chain / "g" / "dataset.bin", "--out", tmp_path) == 3

    def test_threads_env(self, chain, tmp_path, monkeypatch):
        monkeypatch.setenv("DIFFCH_THREADS", "zero")
        assert run("classify", "--config", SMOKE, "--dataset", chain / "g" / "dataset.bin",
                   "--checkpoint", chain / "t" / "model.ckpt", "--out", tmp_path) == 2
