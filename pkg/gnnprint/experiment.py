"""
The evaluation pipeline: data, victim, zoo, fingerprint, scores and report.

All randomness is derived from the master seed with `derive_seed`, the stage
keys are listed in docs/source/docs/config.md.
"""
import os
import time
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import trim_mean

import gnnprint.config.parser as config_parser
from gnnprint import log
from gnnprint.attack import (
    SURROGATE_KINDS,
    ModelZoo,
    ZooEntry,
    ZooPlan,
    build_zoo,
    save_zoo,
    train_victim,
)
from gnnprint.graph.dataset import generate_dataset, load_dataset, save_dataset
from gnnprint.graph.graph import Graph
from gnnprint.model.network import GnnModel
from gnnprint.probe import DegenerateEmbeddingError
from gnnprint.sampler import (
    Fingerprint,
    SamplerConfig,
    distinctness_stats,
    sample_fingerprint,
    save_fingerprint,
)
from gnnprint.util import derive_seed, parallel_map, save_json, save_model, save_table
from gnnprint.verifier import (
    VerificationReport,
    auc,
    flip_fraction,
    normalized_auc,
    score,
    threshold_from_scores,
)

logger = log.get(__name__)

RESULT_COLUMNS = [
    "condition",
    "candidate_id",
    "provenance",
    "arch",
    "dim",
    "score_form",
    "score",
    "verdict",
]
DATA_FILES = dict(
    train="dataset.json", query="queries.json", fingerprint="fingerprint_graphs.json"
)
EXTRACTION = "extraction"
VICTIM = "victim"
INDEPENDENT_KIND = "independent"


class StageError(RuntimeError):
    """A pipeline stage failed, `cause` is the original exception."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"Stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name: str) -> Iterator[None]:
    """
    Log the duration of a stage and tag its failures with the stage name.

    :param name: stage name, as in the CLI subcommands.
    """
    logger.info("Stage %s started.", name)
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as err:
        logger.error("Stage %s failed: %s", name, err)
        raise StageError(name, err) from err
    logger.info("Stage %s done in %.1fs.", name, time.perf_counter() - start)


def generate_data(config: Dict, seed: int) -> Dict[str, List[Graph]]:
    """
    Draw training graphs, extraction queries and fingerprint graphs.

    The three draws are independent datasets of the same distribution.

    :param config: full config.
    :param seed: master seed.
    :return: dict with keys train, query and fingerprint.
    """
    data_config = config["dataset"]
    sizes = dict(
        train=data_config["num_graphs"],
        query=data_config["num_query_graphs"],
        fingerprint=data_config["num_fingerprint_graphs"],
    )
    return {
        key: generate_dataset(
            config_parser.dataset_spec(
                data_config, num_graphs, derive_seed(seed, "dataset", key)
            )
        )
        for key, num_graphs in sizes.items()
    }


def save_data(data: Dict[str, List[Graph]], data_dir: str):
    for key, filename in DATA_FILES.items():
        save_dataset(data[key], os.path.join(data_dir, filename))


def load_data(data_dir: str) -> Dict[str, List[Graph]]:
    data_dir = os.path.expanduser(data_dir)
    return {
        key: load_dataset(os.path.join(data_dir, filename))
        for key, filename in DATA_FILES.items()
    }


def build_victim(config: Dict, graphs: Sequence[Graph], seed: int) -> GnnModel:
    """
    Train the victim on the node task of the training graphs.

    :param config: full config.
    :param graphs: training graphs.
    :param seed: master seed.
    :return: victim.
    """
    victim_config = config["victim"]
    return train_victim(
        graphs,
        arch=victim_config["arch"],
        embedding_dim=victim_config["dim"],
        seed=derive_seed(seed, "victim"),
        split=victim_config.get("split"),
        cfg=config["train"],
        task_seed=derive_seed(seed, "task"),
        model_config=config["model"],
    )


def zoo_plan(config: Dict, seed: int) -> ZooPlan:
    zoo_config = config["zoo"]
    conditions = config["conditions"]
    return ZooPlan(
        surrogates=zoo_config["surrogates"],
        independents=zoo_config["independents"],
        transforms=conditions["transforms"],
        prune_fractions=conditions["prune_fractions"],
        finetune_epochs=conditions["finetune_epochs"],
        train=config["train"],
        extract=zoo_config["extract"],
        finetune=zoo_config["finetune"],
        model=config["model"],
        holdout_fraction=zoo_config["holdout_fraction"],
        seed=derive_seed(seed, "zoo"),
    )


def build_attacks(
    config: Dict,
    victim: GnnModel,
    data: Dict[str, List[Graph]],
    seed: int,
    jobs: int = 1,
) -> ModelZoo:
    return build_zoo(
        victim,
        data["train"],
        zoo_plan(config, seed),
        query_graphs=data["query"],
        task_seed=derive_seed(seed, "task"),
        jobs=jobs,
    )


def sample_fingerprints(
    victim: GnnModel,
    graphs: Sequence[Graph],
    config: Dict,
    seed: int,
    jobs: int = 1,
) -> Tuple[Fingerprint, Dict[float, Fingerprint]]:
    """
    Sample the main fingerprint and one fingerprint per swept lambda.

    The main fingerprint holds as many points as the largest point count of
    the sweep, smaller counts are prefixes of it. Every lambda fingerprint
    starts from the same seed tuples as the main one.

    :param victim: the fingerprinted model.
    :param graphs: graphs the tuples are drawn from.
    :param config: full config.
    :param seed: master seed.
    :param jobs: parallel searches.
    :return: (main fingerprint, lambda -> fingerprint)
    """
    fp_config = config["fingerprint"]
    cfg = config_parser.sampler_config(fp_config)
    num_points = max([fp_config["num_points"]] + list(config["conditions"]["points"]))
    fp_seed = derive_seed(seed, "fingerprint")
    fp = sample_fingerprint(victim, graphs, num_points, cfg, fp_seed, jobs=jobs)
    lambda_fps = {}
    for lam in config["conditions"]["lambdas"]:
        lam_cfg = SamplerConfig.from_dict(dict(cfg.to_dict(), lam=lam))
        lambda_fps[float(lam)] = sample_fingerprint(
            victim, graphs, fp_config["num_points"], lam_cfg, fp_seed, jobs=jobs
        )
    return fp, lambda_fps


def _prefix(fp: Fingerprint, num_points: int) -> Fingerprint:
    if num_points > fp.num_points:
        logger.warning(
            "Fingerprint holds %d points, fewer than the requested %d.",
            fp.num_points,
            num_points,
        )
    return fp.subset(min(num_points, fp.num_points))


def conditions_of(
    zoo: ModelZoo,
    fp: Fingerprint,
    lambda_fps: Dict[float, Fingerprint],
    config: Dict,
) -> List[Tuple[str, List[ZooEntry], str, Fingerprint]]:
    """
    Evaluation conditions of a zoo.

    :return: list of (condition, surrogates, fingerprint key, fingerprint)
    """
    conditions = config["conditions"]
    main = _prefix(fp, config["fingerprint"]["num_points"])
    extraction = zoo.by_kind("extraction")
    victim = ZooEntry(
        model_id=VICTIM,
        model=zoo.victim,
        provenance=dict(zoo.victim.info.get("provenance", {}), kind=VICTIM),
    )
    result = [(EXTRACTION, [victim] + extraction, "main", main)]
    for name in conditions["transforms"]:
        entries = [
            e for e in zoo.by_kind("transform") if e.provenance["transform"] == name
        ]
        result.append((f"transform:{name}", entries, "main", main))
    for fraction in conditions["prune_fractions"]:
        entries = [
            e
            for e in zoo.by_kind("pruned")
            if e.provenance["fraction"] == float(fraction)
        ]
        result.append((f"prune:{fraction:g}", entries, "main", main))
    for epochs in conditions["finetune_epochs"]:
        entries = [
            e for e in zoo.by_kind("finetuned") if e.provenance["epochs"] == int(epochs)
        ]
        result.append((f"finetune:{epochs}", entries, "main", main))
    for num_points in conditions["points"]:
        result.append(
            (
                f"points:{num_points}",
                extraction,
                f"points:{num_points}",
                _prefix(fp, num_points),
            )
        )
    for lam, lam_fp in lambda_fps.items():
        result.append((f"lambda:{lam:g}", extraction, f"lambda:{lam:g}", lam_fp))
    return result


def score_entries(
    entries: Sequence[ZooEntry], fp: Fingerprint, form: str, jobs: int = 1
) -> List[Optional[VerificationReport]]:
    """
    Score zoo entries, None for candidates degenerate on every tuple.
    """

    def score_one(entry: ZooEntry) -> Optional[VerificationReport]:
        try:
            return score(entry.model, fp, form=form, candidate_id=entry.model_id)
        except DegenerateEmbeddingError as err:
            logger.warning("Candidate %s is not scored: %s", entry.model_id, err)
            return None

    return parallel_map(score_one, list(entries), jobs, "scoring")


def _calibrate(
    reports: Sequence[Optional[VerificationReport]], form: str
) -> Optional[float]:
    scores = [r.score for r in reports if r is not None]
    try:
        return threshold_from_scores(scores, form).value
    except ValueError as err:
        logger.warning("No threshold calibrated: %s", err)
        return None


def _row(
    condition: str,
    entry: ZooEntry,
    report: Optional[VerificationReport],
    form: str,
) -> Dict:
    return dict(
        condition=condition,
        candidate_id=entry.model_id,
        provenance=entry.kind,
        arch=entry.arch,
        dim=entry.dim,
        score_form=form,
        score=np.nan if report is None else report.score,
        verdict="" if report is None or report.verdict is None else report.verdict,
        beta_ratio=np.nan if report is None else report.beta_ratio,
        beta_percentile=np.nan if report is None else report.beta_percentile,
        num_degenerate=np.nan if report is None else len(report.degenerate_flags),
        low_confidence=np.nan if report is None else report.low_confidence,
        epsilon=entry.epsilon,
    )


def evaluate(
    zoo: ModelZoo,
    fp: Fingerprint,
    lambda_fps: Dict[float, Fingerprint],
    config: Dict,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Score every condition's surrogates and the independents.

    Independents are scored once per fingerprint and repeated in every
    condition using it, theta is calibrated on them.

    :return: one row per (condition, candidate), RESULT_COLUMNS first.
    """
    form = config["score"]["form"]
    independent_cache: Dict[str, Tuple[List, Optional[float]]] = {}
    rows = []
    for condition, entries, fp_key, condition_fp in conditions_of(
        zoo, fp, lambda_fps, config
    ):
        if fp_key not in independent_cache:
            reports = score_entries(zoo.independents, condition_fp, form, jobs)
            independent_cache[fp_key] = (reports, _calibrate(reports, form))
        independent_reports, threshold = independent_cache[fp_key]
        if len(entries) == 0:
            logger.warning("Condition %s has no surrogates.", condition)
        reports = score_entries(entries, condition_fp, form, jobs)
        for entry, report in zip(
            list(entries) + zoo.independents, reports + independent_reports
        ):
            if report is not None:
                report = report.with_threshold(threshold)
            rows.append(_row(condition, entry, report, form))
    columns = RESULT_COLUMNS + [k for k in rows[0] if k not in RESULT_COLUMNS]
    return pd.DataFrame(rows, columns=columns)


def _condition_summary(rows: pd.DataFrame) -> Dict:
    surrogates = rows[rows["provenance"].isin(SURROGATE_KINDS)]
    independents = rows[rows["provenance"] == INDEPENDENT_KIND]
    victim = rows[rows["provenance"] == VICTIM]
    summary = dict(
        num_surrogates=len(surrogates), num_independents=len(independents)
    )
    if len(surrogates) > 0:
        summary["mean_surrogate_score"] = float(surrogates["score"].mean())
    if len(independents) > 0:
        summary["mean_independent_score"] = float(independents["score"].mean())
        summary["trimmed_mean_independent_score"] = float(
            trim_mean(independents["score"].to_numpy(), 0.1)
        )
        try:
            summary["threshold"] = threshold_from_scores(
                independents["score"].tolist(), rows["score_form"].iloc[0]
            ).value
        except ValueError:
            pass
    if len(victim) > 0:
        summary["victim_score"] = float(victim["score"].iloc[0])
    if len(surrogates) > 0 and len(independents) > 0:
        summary["auc"] = auc(surrogates["score"], independents["score"])
    return summary


def _flip_fraction(rows: pd.DataFrame, extraction: pd.DataFrame) -> Optional[float]:
    before_scores = dict(
        zip(extraction["candidate_id"], extraction["score"].astype(float))
    )
    surrogates = rows[rows["provenance"].isin(SURROGATE_KINDS)]
    independents = rows[rows["provenance"] == INDEPENDENT_KIND]["score"]
    before, after = [], []
    for candidate_id, value in zip(surrogates["candidate_id"], surrogates["score"]):
        base = candidate_id.rsplit("+", 1)[0]
        if base in before_scores:
            before.append(before_scores[base])
            after.append(float(value))
    if len(before) == 0 or len(independents) == 0:
        return None
    return flip_fraction(before, after, independents.tolist())


def summarize(results: pd.DataFrame) -> Dict[str, Dict]:
    """
    Per-condition AUC and score statistics, computed from results alone.

    Rows without a score are left out. The normalized AUC divides by the AUC
    of the extraction condition, transform conditions also get the fraction
    of (surrogate, independent) orderings flipped by the transform.

    :param results: rows as written to results.csv
    :return: condition -> dict of statistics
    """
    scored = results[results["score"].notna()]
    num_unscored = len(results) - len(scored)
    if num_unscored > 0:
        logger.warning("%d result rows have no score and are left out.", num_unscored)
    summary = {}
    for condition in pd.unique(results["condition"]):
        summary[condition] = _condition_summary(
            scored[scored["condition"] == condition]
        )

    extraction = scored[
        (scored["condition"] == EXTRACTION)
        & scored["provenance"].isin(SURROGATE_KINDS)
    ]
    reference = summary.get(EXTRACTION, {}).get("auc")
    for condition, entry in summary.items():
        if "auc" in entry and reference is not None and reference > 0:
            entry["normalized_auc"] = normalized_auc(entry["auc"], reference)
        if condition.startswith("transform:"):
            flips = _flip_fraction(scored[scored["condition"] == condition], extraction)
            if flips is not None:
                entry["flip_fraction"] = flips
    return summary


def summary_table(summary: Dict[str, Dict]) -> str:
    """Markdown table of the per-condition summary."""
    columns = [
        "auc",
        "normalized_auc",
        "flip_fraction",
        "threshold",
        "victim_score",
        "mean_surrogate_score",
        "mean_independent_score",
        "num_surrogates",
        "num_independents",
    ]
    df = pd.DataFrame.from_dict(summary, orient="index")
    df = df[[c for c in columns if c in df.columns]]
    df.index.name = "condition"
    return df.to_markdown(floatfmt=".4f")


def pipeline_stats(zoo: ModelZoo, fp: Fingerprint) -> Dict:
    """Statistics needing models or the fingerprint, not kept in results.csv."""
    epsilons = {
        e.model_id: e.epsilon for e in zoo.surrogates if e.epsilon is not None
    }
    stats = dict(
        num_points=fp.num_points,
        requested_points=fp.requested,
        seconds_per_point=float(np.mean([p.seconds for p in fp.stationary])),
        evals_per_point=float(np.mean([p.evals for p in fp.stationary])),
        mean_residual=float(np.mean(fp.residuals)),
        epsilon=epsilons,
        mean_epsilon=float(np.mean(list(epsilons.values()))) if epsilons else None,
    )
    try:
        distinctness = distinctness_stats(fp)
        stats["distinctness"] = dict(
            mean=distinctness["mean"],
            num_pairs=distinctness["num_pairs"],
            histogram=distinctness["histogram"],
            bin_edges=distinctness["bin_edges"],
        )
    except ValueError as err:
        logger.warning("Distinctness not computed: %s", err)
    return stats


def condition_filename(condition: str) -> str:
    return condition.replace(":", "_") + ".csv"


def write_results(results: pd.DataFrame, out_dir: str) -> str:
    """
    Write results.csv and one detailed table per condition under scores/.

    :return: path of results.csv
    """
    path = os.path.join(out_dir, "results.csv")
    save_table(results[RESULT_COLUMNS].to_dict("records"), path, RESULT_COLUMNS)
    for condition in pd.unique(results["condition"]):
        rows = results[results["condition"] == condition]
        save_table(
            rows.to_dict("records"),
            os.path.join(out_dir, "scores", condition_filename(condition)),
            list(results.columns),
        )
    return path


def run(config: Dict, out_dir: str, jobs: int = 1) -> Dict:
    """
    Run the whole pipeline.

    Writes config.yaml, data/, victim.json, zoo/, fingerprint.json,
    results.csv, scores/ and report.json into out_dir.

    :param config: checked config, see config_sanity_check.
    :param out_dir: output directory.
    :param jobs: worker threads.
    :return: the report.
    """
    seed = config["seed"]
    config_parser.save(config=config, out_dir=out_dir)
    with stage("gen-data"):
        data = generate_data(config, seed)
        save_data(data, os.path.join(out_dir, "data"))
    with stage("train"):
        victim = build_victim(config, data["train"], seed)
        save_model(victim, os.path.join(out_dir, "victim.json"))
    with stage("attack"):
        zoo = build_attacks(config, victim, data, seed, jobs)
        save_zoo(zoo, os.path.join(out_dir, "zoo"))
    with stage("fingerprint"):
        fp, lambda_fps = sample_fingerprints(
            victim, data["fingerprint"], config, seed, jobs
        )
        save_fingerprint(fp, os.path.join(out_dir, "fingerprint.json"))
        for lam, lam_fp in lambda_fps.items():
            save_fingerprint(
                lam_fp, os.path.join(out_dir, "fingerprints", f"lambda{lam:g}.json")
            )
    with stage("score"):
        results = evaluate(zoo, fp, lambda_fps, config, jobs)
        write_results(results, out_dir)
    with stage("report"):
        report = dict(
            seed=seed,
            score_form=config["score"]["form"],
            conditions=summarize(results),
            pipeline=pipeline_stats(zoo, fp),
        )
        save_json(report, os.path.join(out_dir, "report.json"))
        logger.info("Summary:\n%s", summary_table(report["conditions"]))
    return report
