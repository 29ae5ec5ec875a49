"""
Tests for gnnprint/sampler.py
"""
import os

import numpy as np
import pytest
from testfixtures import TempDirectory

from gnnprint.graph.graph import Graph
from gnnprint.model.interface import EmbeddingModel
from gnnprint.probe import QueryTuple
from gnnprint.sampler import (
    Fingerprint,
    FingerprintError,
    SamplerConfig,
    StationaryPoint,
    check_fingerprint,
    distinctness_stats,
    find_stationary_point,
    load_fingerprint,
    sample_fingerprint,
    save_fingerprint,
)
from test.unit.util import LinearModel, random_graph


class QuadraticModel(EmbeddingModel):
    """h_j = (|x_j - c|^2 + 1, 1), stationary along w where (x_j - c) . w = 0."""

    def __init__(self, center: np.ndarray):
        self.center = np.asarray(center, dtype=np.float64)

    @property
    def embedding_dim(self) -> int:
        return 2

    def embed(self, graph: Graph) -> np.ndarray:
        sq = np.sum((graph.features - self.center) ** 2, axis=1) + 1.0
        return np.stack([sq, np.ones(graph.num_nodes)])


@pytest.fixture()
def dataset():
    return [random_graph(num_nodes=5, feature_dim=3, seed=k) for k in range(3)]


@pytest.fixture()
def victim():
    return QuadraticModel(center=[0.5, -0.5, 1.0])


@pytest.fixture()
def cfg():
    return SamplerConfig(lam=0.0, budget=500, khop=0, acceptance=0.02)


def make_point(features, node=0, w=(1.0, 0.0)) -> StationaryPoint:
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    graph = Graph(num_nodes=features.shape[0], edges=[], features=features)
    query = QueryTuple(graph=graph, node=node, direction=np.asarray(w), delta=0.01)
    return StationaryPoint(
        query=query, residual=0.0, bound=1.0, seed_residual=1.0, success=True
    )


class TestSamplerConfig:
    def test_dict(self):
        cfg = SamplerConfig(lam=0.1, khop=None, optimizer="es")
        assert SamplerConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()

    @pytest.mark.parametrize(
        "kwargs,err_msg",
        [
            (dict(lam=-1.0), "lam must be >= 0"),
            (dict(budget=0), "budget must be >= 1"),
            (dict(optimizer="bfgs"), "Unknown optimizer"),
            (dict(acceptance=1.0), "acceptance must be within"),
            (dict(khop=-1), "khop must be >= 0"),
            (dict(delta=0.0), "must be > 0"),
        ],
    )
    def test_err(self, kwargs, err_msg):
        with pytest.raises(ValueError) as err_info:
            SamplerConfig(**kwargs)
        assert err_msg in str(err_info.value)


class TestFindStationaryPoint:
    @pytest.mark.parametrize("optimizer", ["nelder-mead", "es"])
    def test_success(self, victim, dataset, optimizer):
        cfg = SamplerConfig(lam=0.0, budget=2000, khop=0, optimizer=optimizer)
        w = np.array([1.0, 2.0, -2.0]) / 3.0
        seed_tuple = QueryTuple(graph=dataset[0], node=1, direction=w, delta=0.01)
        point = find_stationary_point(victim, seed_tuple, cfg, seed=0)
        assert point.success
        assert point.residual < point.bound
        assert point.bound == pytest.approx(0.02 * point.seed_residual, rel=1e-12)
        assert point.evals > 1
        # structure, node and direction are kept, only node 1 moved
        moved = point.query
        assert moved.graph.edges == dataset[0].edges
        assert moved.node == 1
        assert np.array_equal(moved.direction, seed_tuple.direction)
        others = [0, 2, 3, 4]
        assert np.array_equal(
            moved.graph.features[others], dataset[0].features[others]
        )
        d = moved.graph.features[1] - victim.center
        assert abs(d @ w) < abs((dataset[0].features[1] - victim.center) @ w)

    def test_residual_not_increased(self, dataset):
        model = LinearModel(np.random.default_rng(0).standard_normal((2, 3)))
        cfg = SamplerConfig(lam=0.5, budget=50, khop=1)
        seed_tuple = QueryTuple(
            graph=dataset[1], node=0, direction=[0.0, 1.0, 0.0], delta=0.01
        )
        point = find_stationary_point(model, seed_tuple, cfg, seed=1)
        assert point.residual <= point.seed_residual
        assert point.reg_distance >= 0.0

    def test_zero_residual(self, dataset):
        # h does not depend on the first feature
        model = LinearModel(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        seed_tuple = QueryTuple(
            graph=dataset[0], node=2, direction=[1.0, 0.0, 0.0], delta=0.01
        )
        point = find_stationary_point(model, seed_tuple, SamplerConfig(), seed=0)
        assert point.success
        assert point.evals == 1
        assert point.query is seed_tuple

    def test_integer_features(self):
        features = np.array([[3, 1], [0, 2], [1, 1]], dtype=np.float64)
        graph = Graph(
            num_nodes=3,
            edges=[(0, 1), (1, 2)],
            features=features,
            integer_features=True,
        )
        model = QuadraticModel(center=[0.0, 0.0])
        seed_tuple = QueryTuple(graph=graph, node=0, direction=[1.0, 0.0], delta=1.0)
        cfg = SamplerConfig(lam=0.0, budget=300, khop=0, acceptance=0.5)
        point = find_stationary_point(model, seed_tuple, cfg, seed=0)
        got = point.query.graph.features
        assert point.query.graph.integer_features
        assert np.array_equal(got, np.round(got))
        assert point.residual <= point.seed_residual

    def test_vanishing_seed(self, dataset):
        model = LinearModel(np.zeros((2, 3)))
        seed_tuple = QueryTuple(
            graph=dataset[0], node=0, direction=[1.0, 0.0, 0.0], delta=0.01
        )
        with pytest.raises(ValueError) as err_info:
            find_stationary_point(model, seed_tuple, SamplerConfig(), seed=0)
        assert "vanishes" in str(err_info.value)

    def test_regularization_monotone(self):
        # mean relative displacement over shared seed tuples does not grow with lam
        center = np.array([0.5, -0.5, 1.0])
        model = QuadraticModel(center=center)
        seed_tuples = []
        for k in range(20):
            rng = np.random.default_rng(k)
            w = rng.standard_normal(3)
            seed_tuples.append(
                QueryTuple(
                    graph=random_graph(num_nodes=5, feature_dim=3, seed=100 + k),
                    node=k % 5,
                    direction=w / np.linalg.norm(w),
                    delta=0.01,
                )
            )
        means = []
        for lam in [0.0, 1.0, 100.0]:
            cfg = SamplerConfig(lam=lam, budget=300, khop=0)
            means.append(
                np.mean(
                    [
                        find_stationary_point(model, t, cfg, seed=k).reg_distance
                        for k, t in enumerate(seed_tuples)
                    ]
                )
            )
        assert means[0] > 0
        assert means[1] <= means[0]
        assert means[2] <= means[1]
        assert means[2] < 0.5 * means[0]


class TestSampleFingerprint:
    def test_deterministic(self, victim, dataset, cfg):
        a = sample_fingerprint(victim, dataset, num_points=3, cfg=cfg, seed=5)
        b = sample_fingerprint(victim, dataset, num_points=3, cfg=cfg, seed=5, jobs=2)
        assert a.num_points == b.num_points == 3
        assert a.requested == 3
        assert a.residuals == b.residuals
        for x, y in zip(a.stationary_tuples, b.stationary_tuples):
            assert x.graph.digest() == y.graph.digest()
        for x, y in zip(a.reference_tuples, b.reference_tuples):
            assert x.graph.digest() == y.graph.digest()
            assert x.node == y.node

    def test_reference_fresh(self, victim, dataset, cfg):
        fp = sample_fingerprint(victim, dataset, num_points=3, cfg=cfg, seed=0)
        digests = {g.digest() for g in dataset}
        for t in fp.reference_tuples:
            assert t.graph.digest() in digests
            assert t.delta == cfg.delta
        assert len(fp.reference_tuples) == fp.num_points

    def test_fingerprint_error(self, dataset):
        model = LinearModel(np.random.default_rng(0).standard_normal((2, 3)))
        cfg = SamplerConfig(lam=0.0, budget=1, acceptance=0.02)
        with pytest.raises(FingerprintError):
            sample_fingerprint(model, dataset, num_points=2, cfg=cfg, seed=0)

    def test_err(self, victim, dataset, cfg):
        with pytest.raises(ValueError) as err_info:
            sample_fingerprint(victim, dataset, num_points=0, cfg=cfg, seed=0)
        assert "num_points must be >= 1" in str(err_info.value)


class TestFingerprint:
    @pytest.fixture()
    def fp(self, victim, dataset, cfg):
        return sample_fingerprint(victim, dataset, num_points=3, cfg=cfg, seed=1)

    def test_check(self, fp, victim):
        assert check_fingerprint(victim, fp) == []
        other = QuadraticModel(center=[10.0, 10.0, -10.0])
        assert len(check_fingerprint(other, fp)) > 0

    def test_subset(self, fp):
        sub = fp.subset(2)
        assert sub.num_points == 2
        assert sub.residuals == fp.residuals[:2]
        assert sub.reference_tuples == fp.reference_tuples[:2]
        assert sub.lam == fp.lam
        with pytest.raises(ValueError):
            fp.subset(4)

    def test_save_load(self, fp):
        with TempDirectory() as tmp:
            path = os.path.join(tmp.path, "fingerprint.json")
            save_fingerprint(fp, path)
            got = load_fingerprint(path)
        assert got.to_dict() == fp.to_dict()

    def test_err(self):
        with pytest.raises(ValueError) as err_info:
            Fingerprint(
                victim_id="v",
                stationary=[make_point([1.0, 0.0])],
                reference=[],
                config=SamplerConfig(),
                seed=0,
            )
        assert "|T| = |R| >= 1" in str(err_info.value)


def test_distinctness_stats():
    points = [make_point([1.0, 0.0]), make_point([0.0, 1.0]), make_point([2.0, 0.0])]
    fp = Fingerprint(
        victim_id="v",
        stationary=points,
        reference=[p.query for p in points],
        config=SamplerConfig(),
        seed=0,
    )
    stats = distinctness_stats(fp, bins=4)
    assert stats["num_pairs"] == 3
    assert sorted(stats["cosines"]) == pytest.approx([0.0, 0.0, 1.0])
    assert stats["mean"] == pytest.approx(1.0 / 3.0)
    assert sum(stats["histogram"]) == 3

    single = fp.subset(1)
    with pytest.raises(ValueError) as err_info:
        distinctness_stats(single)
    assert "at least two tuples" in str(err_info.value)
