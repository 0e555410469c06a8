import subprocess
import sys

import pytest

from matrixse import harness
from matrixse.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, run
from matrixse.tasks import read_instances

TINY = ["--maps", "4", "--blocks", "1", "--min-size", "4", "--max-size", "4", "--steps", "4",
        "--batch-size", "2", "--log-every", "2", "--eval-sizes", "4,8", "--eval-instances", "4"]


def test_train_writes_outputs(tmp_path, capsys):
    assert run(["train", *TINY, "--out", str(tmp_path)]) == EXIT_OK
    for name in ("config.txt", "metrics.jsonl", "checkpoint.ckpt", "accuracy.md"):
        assert (tmp_path / name).exists()
    assert "8x8*" in capsys.readouterr().out
    assert "m=4\n" in (tmp_path / "config.txt").read_text()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("task=xor\nsteps=100\nm=16\n")
    assert run(["train", "--config", str(cfg), *TINY, "--out", str(tmp_path / "run")]) == EXIT_OK
    echoed = (tmp_path / "run" / "config.txt").read_text()
    assert "task=xor\n" in echoed and "steps=4\n" in echoed and "m=4\n" in echoed


def test_eval_from_checkpoint(tmp_path, capsys):
    run(["train", *TINY, "--out", str(tmp_path)])
    capsys.readouterr()
    code = run(["eval", "--checkpoint", str(tmp_path / "checkpoint.ckpt"), "--sizes", "4,16", "--instances", "2"])
    assert code == EXIT_OK and "16x16*" in capsys.readouterr().out


def test_ablate(tmp_path):
    assert run(["ablate", *TINY, "--out", str(tmp_path)]) == EXIT_OK
    table = (tmp_path / "ablation.md").read_text()
    assert "| zorder |" in table and "| raster |" in table


def test_bench(tmp_path, capsys):
    code = run(["bench", "--maps", "4", "--blocks", "1", "--sizes", "4,8", "--bench-steps", "2", "--warmup", "1",
                "--out", str(tmp_path)])
    assert code == EXIT_OK and "slope" in capsys.readouterr().out
    assert (tmp_path / "bench.md").exists()


def test_gen_round_trips(tmp_path):
    out = tmp_path / "x.txt"
    assert run(["gen", "--task", "rotate90", "--size", "8", "--count", "3", "-o", str(out)]) == EXIT_OK
    assert len(read_instances(out.read_text())) == 3


@pytest.mark.parametrize("argv", [
    ["train", "--task", "sorting"],
    ["train", "--max-size", "12"],
    ["train", "--augment", "perhaps"],
])
def test_config_errors(argv, tmp_path):
    assert run([*argv, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_bad_config_file_line(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("no equals sign here\n")
    assert run(["train", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_argparse_errors_use_config_code():
    with pytest.raises(SystemExit) as info:
        run(["train", "--steps", "many"])
    assert info.value.code == EXIT_CONFIG


def test_data_errors(tmp_path):
    assert run(["eval", "--checkpoint", str(tmp_path / "missing.ckpt")]) == EXIT_DATA
    bad = tmp_path / "bad.ckpt"
    bad.write_text("garbage")
    assert run(["eval", "--checkpoint", str(bad)]) == EXIT_DATA
    assert run(["train", *TINY, "--task", "sudoku", "--data", str(tmp_path / "none.csv"),
                "--out", str(tmp_path)]) == EXIT_DATA


def test_numeric_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise harness.NumericFailure("non-finite loss nan at step 0")

    monkeypatch.setattr("matrixse.cli.train", boom)
    assert run(["train", *TINY, "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "matrixse", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "train" in proc.stdout
