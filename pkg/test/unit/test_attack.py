"""
Tests for gnnprint/attack.py
"""
import os

import numpy as np
import pytest
from testfixtures import TempDirectory

from gnnprint.attack import (
    ZooPlan,
    build_zoo,
    expand_members,
    extract,
    extraction_projection,
    holdout_split,
    load_zoo,
    save_zoo,
    split_dataset,
    train_independent,
)
from gnnprint.model.network import GnnModel
from gnnprint.model.trainer import TrainConfig
from gnnprint.transform import TransformedModel
from gnnprint.util import derive_seed
from test.unit.util import random_graph


@pytest.fixture()
def graphs():
    return [random_graph(num_nodes=4, feature_dim=3, seed=k) for k in range(6)]


@pytest.fixture()
def victim():
    model = GnnModel.init("gcn", feature_dim=3, seed=11, embedding_dim=3)
    model.info["provenance"] = dict(kind="victim", arch="gcn", dim=3, seed=11, split=0)
    return model


def tiny_plan(**kwargs) -> ZooPlan:
    config = dict(
        surrogates=[dict(arch="gcn", dim=3)],
        independents=dict(count=2, archs=["gcn", "sage"], splits=[0, 1]),
        transforms=["rotate"],
        prune_fractions=[0.5],
        finetune_epochs=[1],
        train=dict(epochs=2, num_classes=2),
        extract=dict(epochs=2),
        finetune=dict(num_graphs=2, num_classes=2),
        model=dict(hidden_dim=4),
        seed=3,
    )
    config.update(kwargs)
    return ZooPlan(**config)


class TestSplits:
    def test_split_dataset(self, graphs):
        graphs = graphs[:5]
        assert split_dataset(graphs, 0) == graphs[:2]
        assert split_dataset(graphs, 1) == graphs[2:]
        assert split_dataset(graphs, None) == graphs

    @pytest.mark.parametrize(
        "num_graphs,split,err_msg",
        [(4, 2, "split must be 0, 1 or None"), (1, 0, "at least 2 graphs")],
    )
    def test_split_dataset_err(self, graphs, num_graphs, split, err_msg):
        with pytest.raises(ValueError) as err_info:
            split_dataset(graphs[:num_graphs], split)
        assert err_msg in str(err_info.value)

    @pytest.mark.parametrize(
        "num_graphs,fraction,expected",
        [(6, 0.2, (4, 2)), (6, 0.0, (5, 1)), (6, 1.0, (1, 5)), (1, 0.2, (1, 1))],
    )
    def test_holdout_split(self, graphs, num_graphs, fraction, expected):
        train, holdout = holdout_split(graphs[:num_graphs], fraction)
        assert (len(train), len(holdout)) == expected


def test_extraction_projection():
    assert extraction_projection(4, 4, seed=0) is None
    p = extraction_projection(4, 8, seed=0)
    assert p.shape == (8, 4)
    assert np.array_equal(p, extraction_projection(4, 8, seed=0))


class TestExpandMembers:
    def test_compact(self):
        got = expand_members(dict(count=4, archs=["gcn", "gin"], dims=[8, 16]), "s")
        assert [(m["arch"], m["dim"]) for m in got] == [
            ("gcn", 8),
            ("gin", 8),
            ("gcn", 16),
            ("gin", 16),
        ]
        assert all(m["split"] is None for m in got)

    def test_explicit(self):
        got = expand_members([dict(arch="sage", dim=2)], "s")
        assert got == [dict(arch="sage", dim=2)]

    def test_err(self):
        with pytest.raises(ValueError) as err_info:
            expand_members([dict(arch="gat")], "surrogate")
        assert "Unknown surrogate architecture" in str(err_info.value)


class TestExtract:
    def test_untrained(self, victim, graphs):
        surrogate = extract(victim, graphs, "gin", 3, cfg=None, seed=1)
        assert surrogate.embedding_dim == 3
        assert surrogate.info["provenance"]["epochs"] == 0
        assert surrogate.info["epsilon"] > 0
        assert surrogate.info["num_queries"] == len(graphs)

    def test_trained_reduces_error(self, victim, graphs):
        untrained = extract(victim, graphs, "gcn", 3, cfg=None, seed=1)
        cfg = TrainConfig(epochs=30, learning_rate=0.05, seed=1)
        trained = extract(victim, graphs, "gcn", 3, cfg=cfg, seed=1)
        assert trained.info["provenance"]["kind"] == "extraction"
        assert trained.info["epsilon"] < untrained.info["epsilon"]

    def test_projection(self, victim, graphs):
        cfg = TrainConfig(epochs=3, seed=0)
        surrogate = extract(victim, graphs, "sage", 5, cfg=cfg, seed=2)
        assert surrogate.embedding_dim == 5
        assert np.isfinite(surrogate.info["epsilon"])
        assert surrogate.info["projection_seed"] == derive_seed(2, "projection")

    def test_err(self, victim, graphs):
        with pytest.raises(ValueError) as err_info:
            extract(victim, graphs, "gcn", 3, cfg=TrainConfig(loss="task"))
        assert "regresses embeddings" in str(err_info.value)


def test_train_independent(graphs):
    model = train_independent(
        graphs,
        arch="gin",
        embedding_dim=2,
        seed=4,
        split=1,
        cfg=dict(epochs=2, num_classes=2),
        task_seed=0,
    )
    assert model.embedding_dim == 2
    assert model.info["provenance"] == dict(
        kind="independent", arch="gin", dim=2, seed=4, split=1
    )


class TestBuildZoo:
    def test_plan_err(self):
        with pytest.raises(ValueError) as err_info:
            tiny_plan(transforms=["fft"])
        assert "Unknown transform preset" in str(err_info.value)

    def test_members(self, victim, graphs):
        zoo = build_zoo(victim, graphs, tiny_plan(), task_seed=0)
        kinds = [e.kind for e in zoo.surrogates]
        assert kinds == ["extraction", "transform", "pruned", "finetuned"]
        assert all(e.is_surrogate for e in zoo.surrogates)
        assert [e.kind for e in zoo.independents] == ["independent"] * 2
        assert not any(e.is_surrogate for e in zoo.independents)
        assert [e.arch for e in zoo.independents] == ["gcn", "sage"]
        assert len(zoo.entries) == 6
        assert len(zoo.by_kind("pruned")) == 1

        base = zoo.surrogates[0]
        assert base.model_id == "surrogate0-gcn-d3"
        transformed = zoo.by_kind("transform")[0]
        assert transformed.model_id == "surrogate0-gcn-d3+rotate"
        assert isinstance(transformed.model, TransformedModel)
        assert transformed.epsilon == base.epsilon
        assert transformed.provenance["base"] == base.model_id
        pruned = zoo.by_kind("pruned")[0]
        assert pruned.model_id == "surrogate0-gcn-d3+prune0.5"
        assert zoo.by_kind("finetuned")[0].model_id == "surrogate0-gcn-d3+finetune1"

    def test_deterministic(self, victim, graphs):
        a = build_zoo(victim, graphs, tiny_plan(), task_seed=0)
        b = build_zoo(victim, graphs, tiny_plan(), task_seed=0, jobs=2)
        g = graphs[0]
        for x, y in zip(a.entries, b.entries):
            assert x.model_id == y.model_id
            assert np.array_equal(x.model.embed(g), y.model.embed(g))

    def test_victim_collision(self, victim, graphs):
        plan = tiny_plan(independents=[dict(arch="gcn", dim=3, split=0)])
        victim.info["provenance"]["seed"] = derive_seed(plan.seed, "independent", 0)
        with pytest.raises(ValueError) as err_info:
            build_zoo(victim, graphs, plan)
        assert "would be the victim itself" in str(err_info.value)

    def test_save_load(self, victim, graphs):
        zoo = build_zoo(
            victim, graphs, tiny_plan(prune_fractions=[], finetune_epochs=[])
        )
        with TempDirectory() as tmp:
            manifest = save_zoo(zoo, tmp.path)
            assert os.path.exists(os.path.join(tmp.path, "models", "victim.json"))
            got = load_zoo(manifest)
        assert [e.model_id for e in got.surrogates] == [
            e.model_id for e in zoo.surrogates
        ]
        assert [e.model_id for e in got.independents] == [
            e.model_id for e in zoo.independents
        ]
        g = graphs[1]
        assert np.array_equal(got.victim.embed(g), victim.embed(g))
        for x, y in zip(got.entries, zoo.entries):
            assert x.provenance == y.provenance
            assert x.epsilon == y.epsilon
            assert np.array_equal(x.model.embed(g), y.model.embed(g))
