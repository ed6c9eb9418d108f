import json
import os

import pytest

from hallcube.cli import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    _exponents,
    build_parser,
    main,
)

SUBCOMMANDS = ("gen", "train", "eval", "table1", "unseen", "ablate",
               "crossface", "sensitivity", "report")

HELP_FLAGS = {
    "gen": ("--face", "--scale", "--noise-sd", "--no-quantize", "--jobs",
            "--seed", "--server", "-o"),
    "train": ("--data", "--small", "--sizes", "--epochs", "--lr", "--batch"),
    "eval": ("--ckpt", "--data", "--split"),
    "table1": ("--faces", "--scale", "--small", "--jobs"),
    "unseen": ("--face", "--scale", "--small"),
    "ablate": ("--face", "--factors", "--scale"),
    "crossface": ("--faces", "--bins", "--scale"),
    "sensitivity": ("--face", "--scale"),
    "report": ("run_dir", "--server"),
}


def run(argv, capsys):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_help_lists_every_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for cmd in SUBCOMMANDS:
        assert cmd in text


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_subcommand_help_snapshot(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in HELP_FLAGS[cmd]:
        assert flag in text, (cmd, flag)


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_USAGE


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--face", "1", "--bogus"])
    assert exc.value.code == EXIT_USAGE


def test_exponent_ranges():
    assert _exponents("0..3") == [1, 2, 4, 8]
    assert _exponents("0,5,10") == [1, 32, 1024]
    with pytest.raises(Exception):
        _exponents("-2..1")


def test_gen_train_eval_chain(tmp_path, capsys):
    data_dir = str(tmp_path / "data")
    rc, out, err = run(["gen", "--face", "1", "--scale", "0.02",
                        "--seed", "3", "-o", data_dir], capsys)
    assert rc == EXIT_OK, err
    data_path = json.loads(out)["path"]

    rc, out, err = run(["train", "--data", data_path, "--seed", "3",
                        "--sizes", "9,16,100", "--epochs", "4",
                        "--batch", "512", "--lr", "0.005",
                        "-o", str(tmp_path / "run")], capsys)
    assert rc == EXIT_OK, err
    ckpt = json.loads(out)["checkpoint_dir"]

    rc, out, err = run(["eval", "--ckpt", ckpt, "--data", data_path,
                        "-o", str(tmp_path / "eval")], capsys)
    assert rc == EXIT_OK, err
    metrics = json.loads(out)
    for key in ("a_sim", "e_loc", "e_f_pct", "a_non"):
        assert key in metrics
    assert os.path.isfile(os.path.join(str(tmp_path / "eval"),
                                       "summary.json"))


def test_eval_missing_checkpoint_fails_naming_stage(tmp_path, capsys):
    rc, out, err = run(["eval", "--ckpt", str(tmp_path / "none"),
                        "--data", str(tmp_path / "none.csv")], capsys)
    assert rc == EXIT_FAILURE
    assert "error [eval]" in err


def test_default_out_honors_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HALLCUBE_OUT", str(tmp_path / "root"))
    monkeypatch.chdir(tmp_path)
    rc, out, err = run(["gen", "--face", "1", "--scale", "0.02",
                        "--seed", "3"], capsys)
    assert rc == EXIT_OK, err
    path = json.loads(out)["path"]
    assert path.startswith(str(tmp_path / "root"))
    assert os.path.isfile(path)


def test_unreachable_server_is_runtime_failure(capsys):
    rc, out, err = run(["report", "--server", "http://127.0.0.1:9",
                        "ignored_dir"], capsys)
    assert rc == EXIT_FAILURE
    assert "error [report]" in err


def test_study_and_report_through_cli(tmp_path, capsys):
    out_dir = str(tmp_path / "study")
    rc, out, err = run(["table1", "--faces", "1", "--scale", "0.02",
                        "--seed", "3", "--sizes", "9,16,100",
                        "--epochs", "3", "--lr", "0.005",
                        "-o", out_dir], capsys)
    assert rc == EXIT_OK, err
    body = json.loads(out)
    assert body["study"] == "table1"

    rc, out, err = run(["report", out_dir], capsys)
    assert rc == EXIT_OK, err
    files = json.loads(out)["files"]
    assert any(f.endswith("report.txt") for f in files)
