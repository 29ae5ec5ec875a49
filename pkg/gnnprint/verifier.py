"""
Scoring candidates against a fingerprint, threshold calibration and
detection AUC.

A low score means the candidate changes little at the victim's stationary
tuples compared to random tuples, which is what a surrogate does.
"""
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from gnnprint import log
from gnnprint.constant import INDEPENDENT, SCORE_FORMS, SURROGATE
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.network import GnnModel
from gnnprint.probe import (
    DegenerateEmbeddingError,
    QueryTuple,
    normalized_derivative_norm,
    q_value,
)
from gnnprint.sampler import Fingerprint
from gnnprint.util import parallel_map

logger = log.get(__name__)

LOW_CONFIDENCE_FRACTION = 0.25


def percentile_score(values: Sequence[float], reference: Sequence[float]) -> float:
    """
    Mean weak percentile rank of values within reference.

    rank(x) = 100 * |{u in reference: u <= x}| / |reference|

    :param values: q over stationary tuples.
    :param reference: q over reference tuples, non-empty.
    :return: score in [0, 100]
    """
    reference = np.sort(np.asarray(reference, dtype=np.float64))
    counts = np.searchsorted(reference, np.asarray(values, dtype=np.float64), "right")
    return float(np.mean(100.0 * counts / reference.size))


def ratio_score(values: Sequence[float], reference: Sequence[float]) -> float:
    """
    sum(values) / sum(reference).

    :raises DegenerateEmbeddingError: if every reference value is zero.
    """
    denom = float(np.sum(reference))
    if denom == 0:
        raise DegenerateEmbeddingError(
            "All reference q values are zero, the ratio score is undefined"
        )
    return float(np.sum(values) / denom)


class VerificationReport:
    """q values of one candidate on a fingerprint and the resulting scores."""

    def __init__(
        self,
        candidate_id: str,
        q_stationary: List[Optional[float]],
        q_reference: List[Optional[float]],
        form: str,
        threshold: Optional[float] = None,
    ):
        """
        :param candidate_id: name of the candidate.
        :param q_stationary: q over T, None where the tuple was degenerate.
        :param q_reference: q over R, None where the tuple was degenerate.
        :param form: ratio or percentile, selects `score`.
        :param threshold: theta, no verdict if None.
        """
        if form not in SCORE_FORMS:
            raise ValueError(f"Unknown score form {form}, supported are {SCORE_FORMS}")
        self.candidate_id = candidate_id
        self.q_stationary = q_stationary
        self.q_reference = q_reference
        self.form = form
        self.threshold = threshold

        q_t = [q for q in q_stationary if q is not None]
        q_r = [q for q in q_reference if q is not None]
        if len(q_t) == 0 or len(q_r) == 0:
            raise DegenerateEmbeddingError(
                f"All stationary or all reference tuples are degenerate "
                f"for candidate {candidate_id}"
            )
        self.degenerate_flags = [
            ("T", k) for k, q in enumerate(q_stationary) if q is None
        ] + [("R", k) for k, q in enumerate(q_reference) if q is None]
        total = len(q_stationary) + len(q_reference)
        num_degenerate = len(self.degenerate_flags)
        self.low_confidence = num_degenerate > LOW_CONFIDENCE_FRACTION * total
        self.beta_ratio = ratio_score(q_t, q_r)
        self.beta_percentile = percentile_score(q_t, q_r)
        if self.low_confidence:
            logger.warning(
                "Candidate %s: %d of %d tuples excluded as degenerate.",
                candidate_id,
                len(self.degenerate_flags),
                total,
            )

    @property
    def score(self) -> float:
        return self.beta_ratio if self.form == "ratio" else self.beta_percentile

    @property
    def verdict(self) -> Optional[str]:
        if self.threshold is None:
            return None
        return SURROGATE if self.score <= self.threshold else INDEPENDENT

    def with_threshold(self, threshold: Optional[float]) -> "VerificationReport":
        return VerificationReport(
            candidate_id=self.candidate_id,
            q_stationary=self.q_stationary,
            q_reference=self.q_reference,
            form=self.form,
            threshold=threshold,
        )

    def to_dict(self) -> Dict:
        return dict(
            candidate_id=self.candidate_id,
            q_T=self.q_stationary,
            q_R=self.q_reference,
            beta_ratio=self.beta_ratio,
            beta_percentile=self.beta_percentile,
            form=self.form,
            score=self.score,
            threshold=self.threshold,
            verdict=self.verdict,
            degenerate_flags=[list(x) for x in self.degenerate_flags],
            low_confidence=self.low_confidence,
        )


def _safe_q(candidate: EmbeddingModel, t: QueryTuple) -> Optional[float]:
    try:
        return q_value(candidate, t)
    except DegenerateEmbeddingError:
        return None


def score(
    candidate: EmbeddingModel,
    fp: Fingerprint,
    form: str = "percentile",
    threshold: Optional[float] = None,
    candidate_id: str = "candidate",
) -> VerificationReport:
    """
    Score a candidate on the stationary and reference tuples of a fingerprint.

    :param candidate: any embedding model taking the fingerprint's features.
    :param fp: fingerprint.
    :param form: ratio or percentile.
    :param threshold: theta for the verdict.
    :param candidate_id: name in the report.
    :return: report.
    """
    if candidate.feature_dim is not None and candidate.feature_dim != fp.feature_dim:
        raise ValueError(
            f"Candidate {candidate_id} expects feature dim {candidate.feature_dim}, "
            f"fingerprint graphs have {fp.feature_dim}"
        )
    return VerificationReport(
        candidate_id=candidate_id,
        q_stationary=[_safe_q(candidate, t) for t in fp.stationary_tuples],
        q_reference=[_safe_q(candidate, t) for t in fp.reference_tuples],
        form=form,
        threshold=threshold,
    )


def score_many(
    candidates: Sequence[Tuple[str, EmbeddingModel]],
    fp: Fingerprint,
    form: str = "percentile",
    threshold: Optional[float] = None,
    jobs: int = 1,
) -> List[VerificationReport]:
    """
    Score candidates in parallel, reports keep the input order.

    :param candidates: (candidate_id, model) pairs.
    :param fp: fingerprint.
    :param form: ratio or percentile.
    :param threshold: theta for the verdicts.
    :param jobs: number of workers.
    :return: reports.
    """
    return parallel_map(
        lambda item: score(
            item[1], fp, form=form, threshold=threshold, candidate_id=item[0]
        ),
        list(candidates),
        jobs,
        "scoring",
    )


class Threshold:
    """Decision threshold theta, scores <= theta are surrogates."""

    def __init__(
        self,
        value: float,
        method: str = "fixed",
        form: str = "percentile",
        calibration_scores: Optional[List[float]] = None,
    ):
        if not value > 0:
            raise ValueError(f"Threshold must be > 0, got {value}")
        self.value = float(value)
        self.method = method
        self.form = form
        self.calibration_scores = list(calibration_scores or [])

    def to_dict(self) -> Dict:
        return dict(
            value=self.value,
            method=self.method,
            form=self.form,
            calibration_scores=self.calibration_scores,
        )


def threshold_from_scores(scores: Sequence[float], form: str) -> Threshold:
    """
    theta = min(scores) / 2 over independent models.

    :param scores: scores of at least two independent models, all > 0.
    :param form: score form the scores were computed with.
    :return: threshold.
    """
    if len(scores) < 2:
        raise ValueError(
            f"Calibration needs at least 2 independent models, got {len(scores)}"
        )
    if not all(s > 0 for s in scores):
        raise ValueError(f"Calibration scores must all be > 0, got {list(scores)}")
    return Threshold(
        value=min(scores) / 2.0,
        method="independent-bound",
        form=form,
        calibration_scores=[float(s) for s in scores],
    )


def calibrate_threshold(
    fp: Fingerprint,
    independents: Sequence[EmbeddingModel],
    form: str = "percentile",
    jobs: int = 1,
) -> Threshold:
    """
    Threshold from independently trained models.

    :param fp: fingerprint.
    :param independents: at least two models trained without the victim.
    :param form: ratio or percentile.
    :param jobs: number of workers.
    :return: threshold at half the smallest independent score.
    """
    if len(independents) < 2:
        raise ValueError(
            f"Calibration needs at least 2 independent models, got {len(independents)}"
        )
    named = [(f"independent{k}", m) for k, m in enumerate(independents)]
    reports = score_many(named, fp, form, jobs=jobs)
    return threshold_from_scores([r.score for r in reports], form)


def detect_exact(
    candidates: Sequence[GnnModel],
    tuples: Sequence[QueryTuple],
    tol: Union[float, Sequence[float]],
) -> List[str]:
    """
    Surrogate iff every tuple is stationary for the candidate.

    Exact copies, up to invertible output transformations, share all
    stationary points of the victim.

    :param candidates: native models.
    :param tuples: stationary tuples of the victim, continuous features.
    :param tol: bound on |grad_w h_i| / |h_i|, one value or one per tuple.
    :return: verdict per candidate.
    """
    tols = np.broadcast_to(np.asarray(tol, dtype=np.float64), (len(tuples),))
    if any(t.graph.integer_features for t in tuples):
        raise ValueError("Exact detection needs continuous features.")
    verdicts = []
    for candidate in candidates:
        stationary = True
        for t, bound in zip(tuples, tols):
            try:
                value = normalized_derivative_norm(candidate, t, mode="analytic")
            except DegenerateEmbeddingError:
                stationary = False
                break
            if not value < bound:
                stationary = False
                break
        verdicts.append(SURROGATE if stationary else INDEPENDENT)
    return verdicts


def auc(
    surrogate_scores: Sequence[float], independent_scores: Sequence[float]
) -> float:
    """
    P(surrogate score < independent score), ties counted one half.

    Computed as the Mann-Whitney statistic from average ranks.

    :param surrogate_scores: non-empty.
    :param independent_scores: non-empty.
    :return: AUC in [0, 1]
    """
    surrogate_scores = np.asarray(surrogate_scores, dtype=np.float64)
    independent_scores = np.asarray(independent_scores, dtype=np.float64)
    if surrogate_scores.size == 0 or independent_scores.size == 0:
        raise ValueError("AUC needs non-empty surrogate and independent scores.")
    if np.isnan(surrogate_scores).any() or np.isnan(independent_scores).any():
        raise ValueError("AUC is undefined for nan scores.")
    ranks = rankdata(np.concatenate([surrogate_scores, independent_scores]))
    num_s, num_i = surrogate_scores.size, independent_scores.size
    u_independent = ranks[num_s:].sum() - num_i * (num_i + 1) / 2.0
    return float(u_independent / (num_s * num_i))


def normalized_auc(value: float, reference: float) -> float:
    """AUC under attack relative to the AUC without attack."""
    if not reference > 0:
        raise ValueError(f"Reference AUC must be > 0, got {reference}")
    return float(value / reference)


def flip_fraction(
    before: Sequence[float],
    after: Sequence[float],
    independents: Sequence[float],
) -> float:
    """
    Fraction of (surrogate, independent) pairs whose ordering changes when the
    surrogates are transformed.

    :param before: surrogate scores without transformation.
    :param after: scores of the same surrogates transformed, same order.
    :param independents: independent scores.
    :return: fraction in [0, 1]
    """
    if len(before) != len(after):
        raise ValueError(
            f"before and after must pair up, got {len(before)} and {len(after)}"
        )
    if len(before) == 0 or len(independents) == 0:
        raise ValueError("flip_fraction needs non-empty score lists.")
    ind = np.asarray(independents, dtype=np.float64)[None, :]
    ordered_before = np.asarray(before, dtype=np.float64)[:, None] < ind
    ordered_after = np.asarray(after, dtype=np.float64)[:, None] < ind
    return float(np.mean(ordered_before != ordered_after))
