"""
Desk-scale evaluation of detection quality and robustness.

Runs the whole pipeline once with config/acceptance.yaml and
config/robustness.yaml, takes tens of minutes on a single core:

    pytest -m acceptance test/integration
"""
import os

import numpy as np
import pandas as pd
import pytest

from gnnprint import experiment
from gnnprint.attack import load_zoo
from gnnprint.config.parser import load_configs, sampler_config
from gnnprint.probe import TupleSampler, q_value
from gnnprint.sampler import (
    check_fingerprint,
    find_stationary_point,
    load_fingerprint,
    sample_fingerprint,
)
from gnnprint.transform import EXACT_INVARIANT_PRESETS
from gnnprint.util import derive_seed, load_json, load_model
from gnnprint.verifier import threshold_from_scores

pytestmark = pytest.mark.acceptance

CONFIGS = ["config/acceptance.yaml", "config/robustness.yaml"]
ELEMENTWISE = ["tanh", "atan", "sigmoid"]


@pytest.fixture(scope="module")
def config():
    return load_configs(CONFIGS)


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory, config) -> str:
    path = str(tmp_path_factory.mktemp("acceptance"))
    experiment.run(config, path)
    return path


@pytest.fixture(scope="module")
def victim(out_dir):
    return load_model(os.path.join(out_dir, "victim.json"))


@pytest.fixture(scope="module")
def fingerprint(out_dir, config):
    fp = load_fingerprint(os.path.join(out_dir, "fingerprint.json"))
    return fp.subset(min(config["fingerprint"]["num_points"], fp.num_points))


@pytest.fixture(scope="module")
def fingerprint_graphs(out_dir):
    return experiment.load_data(os.path.join(out_dir, "data"))["fingerprint"]


@pytest.fixture(scope="module")
def report(out_dir):
    return load_json(os.path.join(out_dir, "report.json"))


@pytest.fixture(scope="module")
def results(out_dir):
    return pd.read_csv(
        os.path.join(out_dir, "results.csv"), float_precision="round_trip"
    )


def auc_of(report, condition: str) -> float:
    return report["conditions"][condition]["auc"]


def test_extraction_detected(report):
    assert auc_of(report, "extraction") >= 0.95


def test_independent_scores_centered(report):
    entry = report["conditions"]["extraction"]
    assert entry["num_independents"] >= 10
    assert 35 <= entry["mean_independent_score"] <= 65


def test_victim_and_surrogates_small(report, results):
    entry = report["conditions"]["extraction"]
    assert entry["victim_score"] < 15
    surrogates = results[
        (results["condition"] == "extraction")
        & (results["provenance"] == "extraction")
    ]
    assert (surrogates["score"] < entry["threshold"]).all()


@pytest.mark.parametrize("name", EXACT_INVARIANT_PRESETS)
def test_exact_transforms_keep_verdicts(report, name):
    entry = report["conditions"][f"transform:{name}"]
    assert entry["flip_fraction"] == 0.0
    assert entry["auc"] == pytest.approx(auc_of(report, "extraction"))


@pytest.mark.parametrize("name", ELEMENTWISE)
def test_elementwise_transforms_mostly_keep_verdicts(report, name):
    assert report["conditions"][f"transform:{name}"]["flip_fraction"] <= 0.2


def test_point_count_saturates(report):
    assert auc_of(report, "points:40") >= auc_of(report, "points:10")
    assert abs(auc_of(report, "points:40") - auc_of(report, "points:80")) <= 0.05


def test_pruning_robust(report):
    assert auc_of(report, "prune:0.3") >= 0.9 * auc_of(report, "extraction")


def test_finetuning_robust(report):
    assert auc_of(report, "finetune:50") >= 0.9 * auc_of(report, "extraction")


def test_fingerprint_distinct(report):
    distinctness = report["pipeline"]["distinctness"]
    assert distinctness["num_pairs"] > 0
    assert abs(distinctness["mean"]) < 0.2


def test_fingerprint_rechecks(out_dir, victim):
    fp = load_fingerprint(os.path.join(out_dir, "fingerprint.json"))
    assert check_fingerprint(victim, fp) == []


def test_report_recomputed(report, results):
    recomputed = experiment.summarize(results)
    for condition, entry in report["conditions"].items():
        for key, value in entry.items():
            assert np.isclose(recomputed[condition][key], value), (condition, key)


def test_searches_mostly_accepted(victim, fingerprint_graphs, config):
    cfg = sampler_config(config["fingerprint"])
    accepted = []
    for k in range(40):
        seed_tuple = TupleSampler(
            fingerprint_graphs, derive_seed(config["seed"], "search_rate", k), cfg.delta
        ).sample_random_tuple()
        try:
            point = find_stationary_point(victim, seed_tuple, cfg, seed=k)
        except ValueError:
            accepted.append(False)
            continue
        accepted.append(point.success)
    assert np.mean(accepted) >= 0.8


def test_stationary_tuples_separated(victim, fingerprint):
    q_stationary = [q_value(victim, t) for t in fingerprint.stationary_tuples]
    q_reference = [q_value(victim, t) for t in fingerprint.reference_tuples]
    assert np.mean(q_stationary) < 0.1 * np.mean(q_reference)


def extraction_verdicts(zoo, fp, form: str) -> dict:
    surrogates = experiment.score_entries(zoo.by_kind("extraction"), fp, form)
    independents = experiment.score_entries(zoo.independents, fp, form)
    threshold = threshold_from_scores(
        [r.score for r in independents if r is not None], form
    ).value
    return {
        r.candidate_id: r.with_threshold(threshold).verdict
        for r in surrogates + independents
        if r is not None
    }


def test_regenerated_fingerprint_agrees(
    out_dir, victim, fingerprint, fingerprint_graphs, config
):
    zoo = load_zoo(os.path.join(out_dir, "zoo", "manifest.json"))
    regenerated = sample_fingerprint(
        victim,
        fingerprint_graphs,
        config["fingerprint"]["num_points"],
        sampler_config(config["fingerprint"]),
        seed=derive_seed(config["seed"], "fingerprint", "regenerated"),
    )
    assert regenerated.seed != fingerprint.seed
    form = config["score"]["form"]
    first = extraction_verdicts(zoo, fingerprint, form)
    second = extraction_verdicts(zoo, regenerated, form)
    common = sorted(set(first) & set(second))
    assert len(common) >= 0.9 * len(zoo.by_kind("extraction") + zoo.independents)
    agreement = np.mean([first[k] == second[k] for k in common])
    assert agreement >= 0.9
