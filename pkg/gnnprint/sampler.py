"""
Search for stationary tuples of a victim model and assemble fingerprints.

A tuple is stationary when the derivative of h_i along w vanishes. The
search minimizes

    |grad_w h_i(X)| / |h_i(X)| + lam * |X - X0|_F / |X0|_F

over the features of node i and its k-hop neighbourhood, starting from the
features X0 of a randomly drawn tuple, without gradients of the victim.
For integer features the derivative is replaced by h_i(X + e_i w) - h_i(X)
and every proposal is rounded.
"""
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from gnnprint import log
from gnnprint.constant import DEFAULT_DELTA, DEFAULT_FD_STEP, MIN_EMBEDDING_NORM
from gnnprint.graph.graph import Graph, khop_subgraph
from gnnprint.model.interface import EmbeddingModel
from gnnprint.probe import QueryTuple, TupleSampler
from gnnprint.util import derive_seed, load_json, parallel_map, save_json

logger = log.get(__name__)

OPTIMIZERS = ["auto", "nelder-mead", "es"]
MAX_RESAMPLES = 3
ZERO_RESIDUAL = 1.0e-14


class FingerprintError(RuntimeError):
    """Too few stationary points could be found."""


class SamplerConfig:
    def __init__(
        self,
        lam: float = 0.01,
        budget: int = 2000,
        optimizer: str = "auto",
        acceptance: float = 0.02,
        khop: Optional[int] = 2,
        fd_step: float = DEFAULT_FD_STEP,
        delta: float = DEFAULT_DELTA,
        simplex_scale: float = 0.1,
    ):
        """
        Init.

        :param lam: weight of the distance to the seed features, >= 0.
        :param budget: max objective evaluations per search, >= 1.
        :param optimizer: nelder-mead, es, or auto (es for integer features).
        :param acceptance: a search succeeds when the first objective term falls
            below acceptance times its value at the seed features.
        :param khop: only node i and its k-hop neighbours move, all nodes if None.
        :param fd_step: central difference step inside the objective.
        :param delta: step of the reference tuples and the verifier probe.
        :param simplex_scale: initial simplex edge relative to the feature scale.
        """
        if lam < 0:
            raise ValueError(f"lam must be >= 0, got {lam}")
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        if optimizer not in OPTIMIZERS:
            raise ValueError(
                f"Unknown optimizer {optimizer}, supported are {OPTIMIZERS}"
            )
        if not 0 < acceptance < 1:
            raise ValueError(f"acceptance must be within (0, 1), got {acceptance}")
        if khop is not None and khop < 0:
            raise ValueError(f"khop must be >= 0, got {khop}")
        if fd_step <= 0 or delta <= 0:
            raise ValueError(
                f"fd_step and delta must be > 0, got fd_step={fd_step}, delta={delta}"
            )
        self.lam = float(lam)
        self.budget = int(budget)
        self.optimizer = optimizer
        self.acceptance = float(acceptance)
        self.khop = khop
        self.fd_step = float(fd_step)
        self.delta = float(delta)
        self.simplex_scale = float(simplex_scale)

    def to_dict(self) -> Dict:
        return dict(
            lam=self.lam,
            budget=self.budget,
            optimizer=self.optimizer,
            acceptance=self.acceptance,
            khop=self.khop,
            fd_step=self.fd_step,
            delta=self.delta,
            simplex_scale=self.simplex_scale,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "SamplerConfig":
        return cls(**data)


class StationaryPoint:
    """Outcome of one search: the optimized tuple and how it was obtained."""

    def __init__(
        self,
        query: QueryTuple,
        residual: float,
        bound: float,
        seed_residual: float,
        success: bool,
        evals: int = 0,
        seconds: float = 0.0,
        reg_distance: float = 0.0,
    ):
        self.query = query
        self.residual = float(residual)
        self.bound = float(bound)
        self.seed_residual = float(seed_residual)
        self.success = bool(success)
        self.evals = int(evals)
        self.seconds = float(seconds)
        self.reg_distance = float(reg_distance)

    def to_dict(self) -> Dict:
        return dict(
            query=self.query.to_dict(),
            residual=self.residual,
            bound=self.bound,
            seed_residual=self.seed_residual,
            success=self.success,
            evals=self.evals,
            seconds=self.seconds,
            reg_distance=self.reg_distance,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "StationaryPoint":
        data = dict(data)
        data["query"] = QueryTuple.from_dict(data["query"])
        return cls(**data)


class _Converged(Exception):
    pass


class StationarityObjective:
    """
    Objective of one search over the flattened free rows of X.

    Counts evaluations, keeps the best point seen and stops the optimizer
    once the first term is below `stop_below`.
    """

    def __init__(self, victim: EmbeddingModel, seed: QueryTuple, cfg: SamplerConfig):
        graph = seed.graph
        self.victim = victim
        self.seed = seed
        self.cfg = cfg
        self.integer = graph.integer_features
        if cfg.khop is None:
            self.free_nodes = np.arange(graph.num_nodes)
        else:
            _, index_map = khop_subgraph(graph, seed.node, cfg.khop)
            self.free_nodes = np.array(sorted(index_map.keys()))
        self.x0 = np.array(graph.features, copy=True)
        norm = np.linalg.norm(self.x0)
        self.x0_norm = norm if norm > 0 else 1.0
        self.v0 = self.x0[self.free_nodes].ravel()

        self.evals = 0
        self.stop_below = -np.inf
        self.best_value = np.inf
        self.best_first = np.inf
        self.best_v = self.v0

    def features(self, v: np.ndarray) -> np.ndarray:
        x = np.array(self.x0, copy=True)
        x[self.free_nodes] = np.reshape(v, (len(self.free_nodes), -1))
        return x

    def first_term(self, x: np.ndarray) -> float:
        """
        Normalized directional change of h_i at features x.

        :param x: shape = (n, D)
        :return: |grad_w h_i| / |h_i|, inf if h_i vanishes
        """
        i, w = self.seed.node, self.seed.direction
        if self.integer:
            stacked = np.stack([x, x])
            stacked[1, i] += w
        else:
            tau = self.cfg.fd_step
            stacked = np.stack([x, x, x])
            stacked[1, i] += tau * w
            stacked[2, i] -= tau * w
        outputs = self.victim.embed_batch(self.seed.graph, stacked)[:, :, i]
        norm = np.linalg.norm(outputs[0])
        if not norm >= MIN_EMBEDDING_NORM:
            return np.inf
        if self.integer:
            return float(np.linalg.norm(outputs[1] - outputs[0]) / norm)
        return float(np.linalg.norm((outputs[1] - outputs[2]) / (2 * tau)) / norm)

    def reg_distance(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.x0) / self.x0_norm)

    def __call__(self, v: np.ndarray) -> float:
        if self.integer:
            v = np.round(v)
        x = self.features(v)
        first = self.first_term(x)
        value = first + self.cfg.lam * self.reg_distance(x)
        self.evals += 1
        if value < self.best_value:
            self.best_value, self.best_first, self.best_v = value, first, np.array(v)
        if first < self.stop_below:
            raise _Converged()
        return value


def _nelder_mead(
    objective: StationarityObjective, v0: np.ndarray, scale: float, budget: int, rng
):
    """
    Adaptive Nelder-Mead from an axis simplex, or a random one when rng is given.
    """
    dim = v0.size
    if rng is None:
        simplex = np.vstack([v0, v0 + scale * np.eye(dim)])
    else:
        simplex = np.vstack([v0, v0 + scale * rng.standard_normal((dim, dim))])
    minimize(
        objective,
        v0,
        method="Nelder-Mead",
        options=dict(
            maxfev=budget,
            initial_simplex=simplex,
            adaptive=True,
            xatol=1e-12,
            fatol=1e-14,
        ),
    )


def _one_plus_one_es(
    objective: StationarityObjective,
    v0: np.ndarray,
    scale: float,
    budget: int,
    rng: np.random.Generator,
):
    """
    (1+1)-ES with the one-fifth success rule.

    Each proposal mutates a random subset of coordinates, for integer features
    the mutation is rounded and moves at least one coordinate by one unit.
    """
    x, fx = v0, objective(v0)
    sigma = scale
    rate = 1.0 / v0.size
    for _ in range(budget - 1):
        mask = rng.random(v0.size) < rate
        if not mask.any():
            mask[rng.integers(v0.size)] = True
        step = sigma * rng.standard_normal(v0.size) * mask
        if objective.integer:
            step = np.round(step)
            if not step.any():
                step[mask] = rng.choice([-1.0, 1.0], size=int(mask.sum()))
        y = x + step
        fy = objective(y)
        if fy <= fx:
            x, fx = y, fy
            sigma *= 1.5
        else:
            sigma *= 1.5 ** (-0.25)
        sigma = max(sigma, 0.5 if objective.integer else 1e-8)


def find_stationary_point(
    victim: EmbeddingModel, seed_tuple: QueryTuple, cfg: SamplerConfig, seed: int = 0
) -> StationaryPoint:
    """
    Move the features around node i to a point where h_i is stationary along w.

    A failed search still returns the best point found, with success False.

    :param victim: queried model.
    :param seed_tuple: starting tuple, its graph provides X0.
    :param cfg: search config.
    :param seed: seed of the random restart simplex and the ES mutations.
    :return: the optimized tuple with the same graph structure, node and direction.
    """
    start = time.perf_counter()
    objective = StationarityObjective(victim=victim, seed=seed_tuple, cfg=cfg)
    seed_residual = objective.first_term(objective.x0)
    if not np.isfinite(seed_residual):
        raise ValueError(
            f"Embedding of node {seed_tuple.node} vanishes at the seed features."
        )
    bound = cfg.acceptance * seed_residual
    if seed_residual < ZERO_RESIDUAL:
        return StationaryPoint(
            query=seed_tuple,
            residual=seed_residual,
            bound=bound,
            seed_residual=seed_residual,
            success=True,
            evals=1,
            seconds=time.perf_counter() - start,
        )

    rng = np.random.default_rng(seed)
    objective.stop_below = bound
    feature_scale = np.sqrt(np.mean(objective.v0**2)) if objective.v0.size else 0.0
    scale = cfg.simplex_scale * (feature_scale if feature_scale > 0 else 1.0)
    use_es = cfg.optimizer == "es" or (
        cfg.optimizer == "auto" and seed_tuple.graph.integer_features
    )
    try:
        if use_es:
            _one_plus_one_es(
                objective,
                objective.v0,
                scale=max(scale, 1.0) if objective.integer else scale,
                budget=cfg.budget,
                rng=rng,
            )
        else:
            _nelder_mead(objective, objective.v0, scale, cfg.budget, rng=None)
            remaining = cfg.budget - objective.evals
            if objective.best_first >= bound and remaining > objective.v0.size + 1:
                # restart from X0 with a larger random simplex
                _nelder_mead(objective, objective.v0, 5 * scale, remaining, rng=rng)
    except _Converged:
        pass

    features = objective.features(objective.best_v)
    residual = objective.best_first
    success = residual < bound
    if not success:
        logger.debug(
            "Stationary search on node %d stopped at residual %.3g > bound %.3g.",
            seed_tuple.node,
            residual,
            bound,
        )
    return StationaryPoint(
        query=seed_tuple.with_graph(seed_tuple.graph.with_features(features)),
        residual=residual,
        bound=bound,
        seed_residual=seed_residual,
        success=success,
        evals=objective.evals + 1,
        seconds=time.perf_counter() - start,
        reg_distance=objective.reg_distance(features),
    )


class Fingerprint:
    """
    Stationary tuples T of a victim and as many random reference tuples R.
    """

    def __init__(
        self,
        victim_id: str,
        stationary: Sequence[StationaryPoint],
        reference: Sequence[QueryTuple],
        config: SamplerConfig,
        seed: int,
        requested: Optional[int] = None,
    ):
        if len(stationary) < 1 or len(stationary) != len(reference):
            raise ValueError(
                f"A fingerprint needs |T| = |R| >= 1, "
                f"got |T| = {len(stationary)} and |R| = {len(reference)}"
            )
        self.victim_id = victim_id
        self.stationary = list(stationary)
        self.reference = list(reference)
        self.config = config
        self.seed = int(seed)
        self.requested = len(stationary) if requested is None else int(requested)

    @property
    def num_points(self) -> int:
        return len(self.stationary)

    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def stationary_tuples(self) -> List[QueryTuple]:
        return [p.query for p in self.stationary]

    @property
    def reference_tuples(self) -> List[QueryTuple]:
        return self.reference

    @property
    def residuals(self) -> List[float]:
        return [p.residual for p in self.stationary]

    @property
    def feature_dim(self) -> int:
        return self.reference[0].graph.feature_dim

    def subset(self, num_points: int) -> "Fingerprint":
        """First `num_points` tuples of T and R."""
        if not 1 <= num_points <= self.num_points:
            raise ValueError(
                f"num_points must be within [1, {self.num_points}], got {num_points}"
            )
        return Fingerprint(
            victim_id=self.victim_id,
            stationary=self.stationary[:num_points],
            reference=self.reference[:num_points],
            config=self.config,
            seed=self.seed,
            requested=num_points,
        )

    def to_dict(self) -> Dict:
        return dict(
            victim_id=self.victim_id,
            seed=self.seed,
            requested=self.requested,
            config=self.config.to_dict(),
            stationary=[p.to_dict() for p in self.stationary],
            reference=[t.to_dict() for t in self.reference],
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "Fingerprint":
        return cls(
            victim_id=data["victim_id"],
            stationary=[StationaryPoint.from_dict(p) for p in data["stationary"]],
            reference=[QueryTuple.from_dict(t) for t in data["reference"]],
            config=SamplerConfig.from_dict(data["config"]),
            seed=data["seed"],
            requested=data.get("requested"),
        )


def sample_fingerprint(
    victim: EmbeddingModel,
    dataset: Sequence[Graph],
    num_points: int,
    cfg: SamplerConfig,
    seed: int,
    victim_id: str = "victim",
    jobs: int = 1,
) -> Fingerprint:
    """
    Draw `num_points` seed tuples, optimize each into a stationary tuple, then
    draw as many fresh reference tuples.

    A failed search is retried from a new seed tuple up to three times, then
    the slot is dropped and the fingerprint shrinks.

    :param victim: queried model.
    :param dataset: graphs to draw tuples from.
    :param num_points: requested number of stationary tuples, >= 1.
    :param cfg: search config.
    :param seed: seed of all random draws.
    :param victim_id: stored in the fingerprint.
    :param jobs: number of parallel searches.
    :return: fingerprint.
    """
    if num_points < 1:
        raise ValueError(f"num_points must be >= 1, got {num_points}")

    def search(slot: int) -> Optional[StationaryPoint]:
        for attempt in range(1 + MAX_RESAMPLES):
            seed_tuple = TupleSampler(
                dataset, derive_seed(seed, "seed_tuple", slot, attempt), cfg.delta
            ).sample_random_tuple()
            try:
                point = find_stationary_point(
                    victim,
                    seed_tuple,
                    cfg,
                    seed=derive_seed(seed, "search", slot, attempt),
                )
            except ValueError as err:
                logger.debug("Seed tuple of slot %d rejected: %s", slot, err)
                continue
            if point.success:
                return point
        return None

    points = parallel_map(search, list(range(num_points)), jobs, "stationary points")
    stationary = [p for p in points if p is not None]
    num_dropped = num_points - len(stationary)
    if num_dropped > 0:
        logger.warning(
            "Dropped %d of %d stationary searches after %d resamples.",
            num_dropped,
            num_points,
            MAX_RESAMPLES,
        )
    if len(stationary) < num_points / 2:
        raise FingerprintError(
            f"Only {len(stationary)} of {num_points} stationary searches succeeded."
        )
    reference = TupleSampler(
        dataset, derive_seed(seed, "reference"), cfg.delta
    ).sample(len(stationary))
    logger.info(
        "Sampled fingerprint of %s with %d stationary points, "
        "mean residual reduction %.3g, mean %.2fs per point.",
        victim_id,
        len(stationary),
        np.mean([p.residual / p.seed_residual for p in stationary if p.seed_residual]),
        np.mean([p.seconds for p in stationary]),
    )
    return Fingerprint(
        victim_id=victim_id,
        stationary=stationary,
        reference=reference,
        config=cfg,
        seed=seed,
        requested=num_points,
    )


def check_fingerprint(victim: EmbeddingModel, fp: Fingerprint) -> List[int]:
    """
    Re-evaluate the first objective term of every stationary tuple.

    :param victim: the fingerprinted model.
    :param fp: fingerprint.
    :return: indices of tuples whose residual now exceeds the recorded bound.
    """
    violations = []
    for k, point in enumerate(fp.stationary):
        objective = StationarityObjective(
            victim=victim, seed=point.query, cfg=fp.config
        )
        if not objective.first_term(objective.x0) <= max(point.bound, ZERO_RESIDUAL):
            violations.append(k)
    return violations


def distinctness_stats(fp: Fingerprint, bins: int = 20) -> Dict:
    """
    Pairwise cosine similarity of the flattened stationary feature matrices.

    Only pairs of the same shape (n, D) are compared.

    :param fp: fingerprint.
    :param bins: number of histogram bins over [-1, 1].
    :return: dict with mean, num_pairs, cosines, histogram and bin_edges.
    """
    groups: Dict[tuple, List[np.ndarray]] = {}
    for t in fp.stationary_tuples:
        groups.setdefault(t.graph.features.shape, []).append(t.graph.features.ravel())
    cosines = []
    for vectors in groups.values():
        for a in range(len(vectors)):
            for b in range(a + 1, len(vectors)):
                denom = np.linalg.norm(vectors[a]) * np.linalg.norm(vectors[b])
                cos = float(vectors[a] @ vectors[b] / denom) if denom > 0 else 0.0
                cosines.append(cos)
    if len(cosines) == 0:
        raise ValueError("Distinctness needs at least two tuples of the same shape.")
    histogram, bin_edges = np.histogram(cosines, bins=bins, range=(-1.0, 1.0))
    return dict(
        mean=float(np.mean(cosines)),
        num_pairs=len(cosines),
        cosines=cosines,
        histogram=histogram.tolist(),
        bin_edges=bin_edges.tolist(),
    )


def save_fingerprint(fp: Fingerprint, path: str):
    save_json(fp.to_dict(), path)


def load_fingerprint(path: str) -> Fingerprint:
    return Fingerprint.from_dict(load_json(path))
