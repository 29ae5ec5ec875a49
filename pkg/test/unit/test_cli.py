"""
Tests for gnnprint/cli.py
"""
import os

import pandas as pd
import pytest
from testfixtures import TempDirectory

from gnnprint.cli import build_parser, main
from gnnprint.constant import INDEPENDENT, SURROGATE
from gnnprint.util import load_json

TINY = "config/test/tiny.yaml"


def test_parser_requires_seed():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "-c", TINY])
    # score and report are seedless
    args = build_parser().parse_args(["report", "-r", "results.csv"])
    assert args.command == "report"


def test_stages():
    with TempDirectory() as tmp:

        def call(command, name, *extra):
            return main(
                [command, "-c", TINY, "--log_dir", tmp.path, "-n", name]
                + list(extra)
            )

        def out(name, *parts):
            return os.path.join(tmp.path, name, *parts)

        assert call("gen-data", "data", "--seed", "0") == 0
        data_dir = out("data", "data")
        assert call("train", "train", "--seed", "0", "--data_dir", data_dir) == 0
        victim = out("train", "victim.json")
        assert os.path.exists(victim)
        args = ["--seed", "0", "--data_dir", data_dir, "--victim", victim]
        assert call("attack", "attack", *args) == 0
        assert call("fingerprint", "fp", *args) == 0
        assert (
            call(
                "score",
                "score",
                "-f",
                out("fp", "fingerprint.json"),
                "--zoo",
                out("attack", "zoo", "manifest.json"),
                "-m",
                victim,
                "--threshold",
                "1.0",
            )
            == 0
        )
        scores = pd.read_csv(out("score", "scores.csv"))
        reports = load_json(out("score", "reports.json"))

    assert scores["candidate_id"].tolist()[0] == "victim.json"
    # surrogate and two independents follow the explicit model
    assert len(scores) == 4
    assert reports["threshold"] == 1.0
    assert set(scores["verdict"]) <= {SURROGATE, INDEPENDENT}


def test_run_and_report():
    with TempDirectory() as tmp:
        code = main(
            ["run", "-c", TINY, "--seed", "0", "--log_dir", tmp.path, "-n", "x"]
        )
        assert code == 0
        assert os.path.getsize(os.path.join(tmp.path, "x", "log.txt")) > 0
        results = os.path.join(tmp.path, "x", "results.csv")
        code = main(["report", "-r", results, "--log_dir", tmp.path, "-n", "y"])
        assert code == 0
        before = load_json(os.path.join(tmp.path, "x", "report.json"))
        after = load_json(os.path.join(tmp.path, "y", "report.json"))
    assert after["pipeline"] == before["pipeline"]
    assert after["conditions"].keys() == before["conditions"].keys()
    for condition, entry in before["conditions"].items():
        for key, value in entry.items():
            assert after["conditions"][condition][key] == pytest.approx(value)


class TestErrors:
    def test_config_error(self):
        with TempDirectory() as tmp:
            path = os.path.join(tmp.path, "bad.yaml")
            with open(path, "w") as f:
                f.write("score:\n  form: auc\n")
            args = ["-c", path, "--seed", "0", "--log_dir", tmp.path, "-n", "e"]
            code = main(["gen-data"] + args)
            error = load_json(os.path.join(tmp.path, "e", "error.json"))
        assert code == 1
        assert error["stage"] == "config"
        assert error["type"] == "ValueError"
        assert "Unknown score form" in error["message"]

    def test_stage_error(self):
        with TempDirectory() as tmp:
            missing = os.path.join(tmp.path, "missing")
            code = main(
                [
                    "train",
                    "-c",
                    TINY,
                    "--seed",
                    "0",
                    "--data_dir",
                    missing,
                    "--log_dir",
                    tmp.path,
                    "-n",
                    "e",
                ]
            )
            error = load_json(os.path.join(tmp.path, "e", "error.json"))
        assert code == 1
        assert error["stage"] == "train"
        assert error["type"] == "FileNotFoundError"

    def test_nothing_to_score(self):
        with TempDirectory() as tmp:
            code = main(["score", "-f", "fp.json", "--log_dir", tmp.path, "-n", "e"])
            error = load_json(os.path.join(tmp.path, "e", "error.json"))
        assert code == 1
        assert error["stage"] == "score"
