"""Command-line interface: exit codes and the end-to-end command flow."""

import numpy as np
import pytest

from dctm.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main

TINY = [
    "--conv.channels=8",
    "--transformer.hidden=16",
    "--transformer.heads=2",
    "--transformer.encoder_layers=1",
    "--transformer.decoder_layers=1",
    "--transformer.ff_dim=32",
    "--optim.lr=0.001",
    "--optim.epochs=1",
    "--optim.batch_size=4",
    "--data.window=32",
    "--data.stride=16",
]


@pytest.fixture(scope="module")
def flow(tmp_path_factory):
    """Dataset + trained run shared by the command tests."""
    base = tmp_path_factory.mktemp("cli")
    root, run = base / "data", base / "run"
    assert main(["gen-synth", "--out", str(root), "--sessions", "3",
                 "--frames", "80", "--dims", "3,3,2", "--seed", "9"]) == EXIT_OK
    assert main(["train", "--out", str(run), f"--data.root={root}", *TINY]) == EXIT_OK
    return root, run


class TestFlow:
    def test_gen_synth_layout(self, flow):
        root, _ = flow
        assert (root / "splits.json").exists()
        session_dirs = sorted(p.name for p in root.iterdir() if p.is_dir())
        assert len(session_dirs) == 3
        first = root / session_dirs[0]
        for name in ("expert.head.csv", "expert.pose.csv", "expert.voice.csv",
                     "expert.labels.csv", "novice.labels.csv"):
            assert (first / name).exists(), name

    def test_train_wrote_run_directory(self, flow):
        _, run = flow
        for name in ("config.txt", "checkpoint.best.dctm", "report.json"):
            assert (run / name).exists(), name

    def test_evaluate(self, flow, capsys):
        _, run = flow
        assert main(["evaluate", "--run", str(run), "--split", "val"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "ccc_overall" in out

    def test_evaluate_with_override_echoes_it(self, flow, capsys):
        _, run = flow
        assert main(["evaluate", "--run", str(run), "--split", "val",
                     "--optim.batch_size=2"]) == EXIT_OK
        assert "optim.batch_size = 2" in capsys.readouterr().out

    def test_predict_writes_score_files(self, flow, tmp_path, capsys):
        _, run = flow
        out = tmp_path / "scores"
        assert main(["predict", "--run", str(run), "--out", str(out)]) == EXIT_OK
        files = sorted(out.glob("*.scores.csv"))
        assert len(files) == 2  # one val session id x expert/novice
        body = files[0].read_text().splitlines()
        assert body[0] == "frame,score"
        assert len(body) == 81

    def test_verify_command(self, capsys):
        assert main(["verify", "--grad-cases", "3"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out


class TestConfigErrors:
    def test_unparsable_value(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "r"),
                     "--optim.lr=banana"]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "r"),
                     "--optim.warmup=5"]) == EXIT_CONFIG

    def test_override_without_value(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path / "r"), "--optim.lr"])
        assert code == EXIT_CONFIG
        assert "--key=value" in capsys.readouterr().err

    def test_missing_run_directory(self, tmp_path):
        assert main(["evaluate", "--run", str(tmp_path / "ghost")]) == EXIT_CONFIG

    def test_unknown_split(self, flow):
        _, run = flow
        assert main(["evaluate", "--run", str(run), "--split", "test"]) == EXIT_CONFIG

    def test_gen_synth_rejects_overrides(self, tmp_path):
        assert main(["gen-synth", "--out", str(tmp_path / "d"),
                     "--optim.lr=1"]) == EXIT_CONFIG

    def test_gen_synth_bad_dims(self, tmp_path):
        assert main(["gen-synth", "--out", str(tmp_path / "d"),
                     "--dims", "3,3"]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "r"),
                     "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


class TestNumericalErrors:
    def test_nan_labels_rejected_at_load(self, tmp_path, capsys):
        # the loader refuses out-of-range (including NaN) labels, so this
        # is a data error, not a numerical one
        root = tmp_path / "data"
        assert main(["gen-synth", "--out", str(root), "--sessions", "2",
                     "--frames", "60", "--dims", "2,2,2"]) == EXIT_OK
        for labels in root.glob("*/*.labels.csv"):
            lines = labels.read_text().splitlines()
            poisoned = [lines[0]] + [f"{i},nan" for i in range(len(lines) - 1)]
            labels.write_text("\n".join(poisoned) + "\n")
        code = main(["train", "--out", str(tmp_path / "r"),
                     f"--data.root={root}", *TINY])
        assert code == EXIT_CONFIG
        assert "outside [0, 1]" in capsys.readouterr().err

    def test_constant_labels_aborts_with_exit_2(self, tmp_path, capsys):
        # all-0.5 labels meet the fresh model's all-0.5 predictions: the
        # concordance loss hits 0/0 and training must abort, not continue
        root = tmp_path / "data"
        assert main(["gen-synth", "--out", str(root), "--sessions", "2",
                     "--frames", "60", "--dims", "2,2,2"]) == EXIT_OK
        for labels in root.glob("*/*.labels.csv"):
            lines = labels.read_text().splitlines()
            flat = [lines[0]] + [f"{i},0.5" for i in range(len(lines) - 1)]
            labels.write_text("\n".join(flat) + "\n")
        with np.errstate(all="ignore"):
            code = main(["train", "--out", str(tmp_path / "r"),
                         f"--data.root={root}", *TINY])
        assert code == EXIT_NUMERICAL
        assert "non-finite loss" in capsys.readouterr().err
