import json
from pathlib import Path

import numpy as np
import pytest

from tubekit import cli
from tubekit.compositor import check_shared_tubelets
from tubekit.storage import read_checkpoint, read_history, read_manifest, read_pair_dataset, read_ppm

SMALL = """
[corpus]
count = 8

[train]
epochs = 2
batch_size = 4
queue = 8

[eval]
probes = 4
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return str(p)


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv("TUBELET_LOG", "quiet")


def files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(Path(d).rglob("*")) if p.is_file()}


class TestCommands:
    def test_traj(self, tmp_path):
        out = tmp_path / "t"
        assert cli.run(["traj", "--kind", "nonlinear", "--n", "48", "--sigma", "8", "--count", "5",
                        "--out", str(out)]) == 0
        assert [p.name for p in out.glob("*.ppm")] == ["trajectories.ppm"]
        doc = json.loads((out / "trajectories.json").read_text())
        assert len(doc["trajectories"]) == 5 and doc["kind"] == "nonlinear"

    def test_pairs_pass_checker(self, tmp_path, small):
        out = tmp_path / "p"
        assert cli.run(["pairs", "--config", small, "--mode", "tubelet", "--m", "2", "--count", "10",
                        "--out", str(out)]) == 0
        recs = read_manifest(out / "pairs.jsonl")
        assert len(recs) == 10
        for s in read_pair_dataset(out):
            assert check_shared_tubelets(s) == [] and len(s.specs) == 2

    @pytest.mark.parametrize("mode", ["static", "linear", "nonlinear", "scaled-crop-control"])
    def test_pairs_modes(self, tmp_path, small, mode):
        out = tmp_path / mode
        assert cli.run(["pairs", "--config", small, "--mode", mode, "--count", "2", "--out", str(out)]) == 0
        assert all(s.mode == mode for s in read_pair_dataset(out))

    def test_corpus(self, tmp_path, small):
        out = tmp_path / "c"
        assert cli.run(["corpus", "--config", small, "--count", "3", "--out", str(out)]) == 0
        assert len(read_manifest(out / "manifest.jsonl")) == 3

    def test_train_and_eval(self, tmp_path, small, capsys):
        pairs, run = tmp_path / "p", tmp_path / "r"
        assert cli.run(["pairs", "--config", small, "--count", "6", "--out", str(pairs)]) == 0
        assert cli.run(["train", "--config", small, "--pairs", str(pairs), "--out", str(run)]) == 0
        assert len(read_history(run / "history.csv")) == 2
        read_checkpoint(run / "checkpoint.tbck")
        capsys.readouterr()
        assert cli.run(["eval", "--config", small, "--out", str(run)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "probe_mode,probes,top1,top5" and lines[1].startswith("tubelet,4,")

    def test_train_on_the_fly(self, tmp_path, small):
        assert cli.run(["train", "--config", small, "--mode", "linear", "--epochs", "1",
                        "--out", str(tmp_path / "r")]) == 0
        assert len(read_history(tmp_path / "r" / "history.csv")) == 1

    def test_ablate(self, tmp_path, small):
        out = tmp_path / "a"
        assert cli.run(["ablate", "--config", small, "--epochs", "1", "--mode", "static",
                        "--mode", "scaled-crop-control", "--out", str(out)]) == 0
        rows = (out / "ablation.csv").read_text().splitlines()
        assert rows[0].startswith("mode,top1,top5") and [r.split(",")[0] for r in rows[1:]] == [
            "static", "scaled-crop-control"]

    def test_plot_from_pairs_and_traj(self, tmp_path, small):
        pairs = tmp_path / "p"
        cli.run(["pairs", "--config", small, "--count", "2", "--out", str(pairs)])
        assert cli.run(["plot", str(pairs), "--out", str(tmp_path / "plots")]) == 0
        cover = read_ppm(tmp_path / "plots" / "pair-00001-cover.ppm")
        assert cover.shape[0] == 32 * 4
        assert cli.run(["plot", str(pairs / "pair-00001"), "--out", str(tmp_path / "one")]) == 0
        assert (tmp_path / "one" / "pair-00001-traj.ppm").exists()
        cli.run(["traj", "--out", str(tmp_path / "t"), "--scale", "1"])
        assert cli.run(["plot", str(tmp_path / "t" / "trajectories.json"), "--out", str(tmp_path / "tp"),
                        "--scale", "1"]) == 0
        assert np.array_equal(read_ppm(tmp_path / "tp" / "trajectories.ppm"),
                              read_ppm(tmp_path / "t" / "trajectories.ppm"))


class TestErrors:
    def test_unknown_subcommand(self, capsys):
        assert cli.run(["frobnicate"]) != 0
        err = capsys.readouterr().err
        assert "usage:" in err

    def test_unknown_flag(self, capsys):
        assert cli.run(["pairs", "--frobnicate"]) != 0
        assert "usage:" in capsys.readouterr().err

    def test_no_command(self, capsys):
        assert cli.run([]) != 0

    def test_bad_config_is_one_line(self, tmp_path, capsys):
        p = tmp_path / "c.toml"
        p.write_text("[train]\ntau = -1\n")
        assert cli.run(["train", "--config", str(p), "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err.strip()
        assert "\n" not in err and "train.tau" in err

    def test_missing_checkpoint(self, tmp_path, small, capsys):
        assert cli.run(["eval", "--config", small, "--out", str(tmp_path / "none")]) == 1
        assert "checkpoint.tbck" in capsys.readouterr().err

    def test_bad_log_level(self, monkeypatch, capsys):
        monkeypatch.setenv("TUBELET_LOG", "chatty")
        assert cli.run(["traj", "--count", "1"]) != 0
        assert "TUBELET_LOG" in capsys.readouterr().err


class TestHelp:
    @pytest.mark.parametrize("cmd", sorted(cli.COMMANDS))
    def test_every_flag_documented(self, cmd, capsys):
        assert cli.run([cmd, "--help"]) == 0
        text = capsys.readouterr().out
        sub = next(a for a in cli.build_parser()._actions if a.dest == "command").choices[cmd]
        for action in sub._actions:
            for opt in action.option_strings:
                assert opt in text
        for flag in ("--seed", "--config", "--out", "--jobs"):
            assert flag in text
        assert "default" in text

    def test_paper_defaults_in_help(self, capsys):
        cli.run(["traj", "--help"])
        text = " ".join(capsys.readouterr().out.split())
        assert "default 48" in text and "default 8.0" in text and "default 3" in text
        cli.run(["train", "--help"])
        text = " ".join(capsys.readouterr().out.split())
        assert "default 0.2" in text


class TestPrecedence:
    def test_flag_over_file_over_default(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text("[train]\ntau = 0.1\nepochs = 7\n")
        args = cli.build_parser().parse_args(["train", "--config", str(p), "--tau", "0.3"])
        run = cli._load_run(args, **{"train.tau": args.tau, "train.epochs": args.epochs})
        assert run["train"]["tau"] == 0.3      # flag
        assert run["train"]["epochs"] == 7     # file
        assert run["train"]["queue"] == 256    # default


def test_determinism(tmp_path, small):
    for rep in ("one", "two"):
        d = tmp_path / rep
        assert cli.run(["pairs", "--config", small, "--count", "4", "--jobs", "1", "--out", str(d / "p")]) == 0
        assert cli.run(["train", "--config", small, "--pairs", str(d / "p"), "--out", str(d / "r")]) == 0
    assert files(tmp_path / "one") == files(tmp_path / "two")


def test_parallel_pairs_match_sequential(tmp_path, small):
    cli.run(["pairs", "--config", small, "--count", "4", "--jobs", "1", "--out", str(tmp_path / "s")])
    cli.run(["pairs", "--config", small, "--count", "4", "--jobs", "2", "--out", str(tmp_path / "p")])
    assert files(tmp_path / "s") == files(tmp_path / "p")
