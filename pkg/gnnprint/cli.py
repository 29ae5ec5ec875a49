# coding=utf-8

"""
Command line entry point, one subcommand per pipeline stage plus `run`.

Every subcommand writes into log_dir/exp_name. On failure an error.json with
the stage, the exception type and its message is written there and the exit
code is 1.
"""

import argparse
import os
import sys
from typing import Dict, List, Optional

import pandas as pd

import gnnprint.config.parser as config_parser
from gnnprint import experiment, log
from gnnprint.attack import load_zoo, save_zoo
from gnnprint.constant import SCORE_FORMS
from gnnprint.sampler import load_fingerprint, save_fingerprint
from gnnprint.util import (
    build_log_dir,
    load_json,
    load_model,
    save_json,
    save_model,
    save_table,
)
from gnnprint.verifier import calibrate_threshold, score_many

logger = log.get(__name__)

COMMANDS = ["gen-data", "train", "attack", "fingerprint", "score", "report", "run"]
SEEDLESS_COMMANDS = ["score", "report"]


def build_config(args: argparse.Namespace) -> Dict:
    """
    Load the config files and apply the command line overrides.

    :param args: parsed arguments.
    :return: checked config.
    """
    config = config_parser.load_configs(args.config_path)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if args.jobs is not None:
        config["jobs"] = args.jobs
    return config_parser.config_sanity_check(config)


def gen_data(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("gen-data"):
        data = experiment.generate_data(config, config["seed"])
        experiment.save_data(data, os.path.join(out_dir, "data"))


def train(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("train"):
        data = experiment.load_data(args.data_dir)
        victim = experiment.build_victim(config, data["train"], config["seed"])
        save_model(victim, os.path.join(out_dir, "victim.json"))


def attack(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("attack"):
        data = experiment.load_data(args.data_dir)
        victim = load_model(args.victim)
        zoo = experiment.build_attacks(
            config, victim, data, config["seed"], config["jobs"]
        )
        save_zoo(zoo, os.path.join(out_dir, "zoo"))


def fingerprint(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("fingerprint"):
        data = experiment.load_data(args.data_dir)
        victim = load_model(args.victim)
        fp, lambda_fps = experiment.sample_fingerprints(
            victim, data["fingerprint"], config, config["seed"], config["jobs"]
        )
        save_fingerprint(fp, os.path.join(out_dir, "fingerprint.json"))
        for lam, lam_fp in lambda_fps.items():
            save_fingerprint(
                lam_fp, os.path.join(out_dir, "fingerprints", f"lambda{lam:g}.json")
            )


def score(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("score"):
        fp = load_fingerprint(args.fingerprint)
        form = args.form or config["score"]["form"]
        candidates = [(os.path.basename(p), load_model(p)) for p in args.model or []]
        threshold = args.threshold
        if args.zoo is not None:
            zoo = load_zoo(args.zoo)
            candidates += [(e.model_id, e.model) for e in zoo.entries]
            if threshold is None:
                threshold = calibrate_threshold(
                    fp, [e.model for e in zoo.independents], form, config["jobs"]
                ).value
        if len(candidates) == 0:
            raise ValueError("Nothing to score, pass --model or --zoo.")
        reports = score_many(candidates, fp, form, threshold, jobs=config["jobs"])
        save_table(
            [
                dict(
                    candidate_id=r.candidate_id,
                    score_form=r.form,
                    score=r.score,
                    verdict=r.verdict or "",
                    beta_ratio=r.beta_ratio,
                    beta_percentile=r.beta_percentile,
                    low_confidence=r.low_confidence,
                )
                for r in reports
            ],
            os.path.join(out_dir, "scores.csv"),
        )
        save_json(
            dict(threshold=threshold, reports=[r.to_dict() for r in reports]),
            os.path.join(out_dir, "reports.json"),
        )


def report(args: argparse.Namespace, config: Dict, out_dir: str):
    with experiment.stage("report"):
        results = pd.read_csv(args.results, float_precision="round_trip")
        summary = experiment.summarize(results)
        data = dict(conditions=summary)
        previous = os.path.join(os.path.dirname(args.results), "report.json")
        if os.path.exists(previous):
            # keep the model and fingerprint statistics of the pipeline run
            data = dict(load_json(previous), conditions=summary)
        save_json(data, os.path.join(out_dir, "report.json"))
        print(experiment.summary_table(summary))


def run(args: argparse.Namespace, config: Dict, out_dir: str):
    experiment.run(config, out_dir, jobs=config["jobs"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnnprint",
        description="Fingerprint GNN embedding models and evaluate detection.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config_path",
        "-c",
        help="Path of config, YAML or JSON. Can pass multiple paths, later wins.",
        type=str,
        nargs="+",
        default=None,
    )
    common.add_argument(
        "--jobs",
        "-j",
        help="Number of worker threads, overwrites the config.",
        type=int,
        default=None,
    )
    common.add_argument(
        "--log_dir", help="Path of log directory.", default="logs", type=str
    )
    common.add_argument(
        "--exp_name",
        "-n",
        help="Name of the output directory under log_dir. "
        "If not provided, a timestamp based folder will be created.",
        default="",
        type=str,
    )

    handlers = dict(
        zip(COMMANDS, [gen_data, train, attack, fingerprint, score, report, run])
    )
    helps = {
        "gen-data": "Generate training, query and fingerprint graphs.",
        "train": "Train the victim on the training graphs.",
        "attack": "Build surrogates and independent models around a victim.",
        "fingerprint": "Sample stationary and reference tuples of a victim.",
        "score": "Score candidate models against a fingerprint.",
        "report": "Recompute the per-condition AUC from results.csv.",
        "run": "Run the whole pipeline.",
    }
    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[common], help=helps[command])
        sub.set_defaults(func=handlers[command])
        if command not in SEEDLESS_COMMANDS:
            sub.add_argument("--seed", help="Master seed.", type=int, required=True)
        if command in ["train", "attack", "fingerprint"]:
            sub.add_argument(
                "--data_dir",
                help="Directory written by gen-data, i.e. its data/ folder.",
                type=str,
                required=True,
            )
        if command in ["attack", "fingerprint"]:
            sub.add_argument(
                "--victim", help="Path of victim.json.", type=str, required=True
            )

    score_parser = subparsers.choices["score"]
    score_parser.add_argument(
        "--fingerprint", "-f", help="Path of fingerprint.json.", required=True
    )
    score_parser.add_argument(
        "--model", "-m", help="Paths of model files.", type=str, nargs="+"
    )
    score_parser.add_argument("--zoo", help="Path of a zoo manifest.json.", type=str)
    score_parser.add_argument(
        "--form", help="Score form, overwrites the config.", choices=SCORE_FORMS
    )
    score_parser.add_argument(
        "--threshold",
        help="Decision threshold, calibrated on the zoo's independents if omitted.",
        type=float,
    )

    subparsers.choices["report"].add_argument(
        "--results", "-r", help="Path of results.csv.", type=str, required=True
    )
    return parser


def main(args: Optional[List[str]] = None) -> int:
    """
    Entry point for the gnnprint script.

    :param args: arguments, sys.argv if None.
    :return: exit code.
    """
    args = build_parser().parse_args(args)
    out_dir = build_log_dir(log_dir=args.log_dir, exp_name=args.exp_name)
    with log.file_output(os.path.join(out_dir, "log.txt")):
        try:
            config = build_config(args)
            args.func(args, config, out_dir)
        except Exception as err:  # pylint: disable=broad-except
            if isinstance(err, experiment.StageError):
                stage, cause = err.stage, err.cause
            else:
                stage, cause = "config", err
            logger.error("%s failed with %s: %s", stage, type(cause).__name__, cause)
            save_json(
                dict(stage=stage, type=type(cause).__name__, message=str(cause)),
                os.path.join(out_dir, "error.json"),
            )
            return 1
        logger.info("Outputs written to %s.", out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
