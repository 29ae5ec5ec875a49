"""
Tests for gnnprint/graph/dataset.py
"""
import os

import numpy as np
import pytest
from testfixtures import TempDirectory

from gnnprint.graph.dataset import (
    DatasetSpec,
    ErdosRenyi,
    Grid,
    Path,
    Star,
    generate_dataset,
    khop_dataset,
    load_dataset,
    make_node_labels,
    save_dataset,
)
from test.unit.util import random_graph


class TestEdgeModels:
    @pytest.mark.parametrize("p,num_edges", [(0.0, 0), (1.0, 10)])
    def test_erdos_renyi_extremes(self, p, num_edges):
        edges = ErdosRenyi(p)(5, np.random.default_rng(0))
        assert len(edges) == num_edges

    def test_erdos_renyi_err(self):
        with pytest.raises(ValueError) as err_info:
            ErdosRenyi(1.5)
        assert "within [0, 1]" in str(err_info.value)

    @pytest.mark.parametrize(
        "edge_model,num_nodes,expected",
        [
            (Path(), 4, [(0, 1), (1, 2), (2, 3)]),
            (Star(), 4, [(0, 1), (0, 2), (0, 3)]),
            (Grid(), 4, [(0, 1), (0, 2), (1, 3), (2, 3)]),
            (Path(), 1, []),
        ],
    )
    def test_deterministic(self, edge_model, num_nodes, expected):
        got = edge_model(num_nodes, np.random.default_rng(0))
        assert sorted(got) == expected

    def test_grid_nine(self):
        assert len(Grid()(9, np.random.default_rng(0))) == 12


class TestDatasetSpec:
    def test_defaults(self):
        spec = DatasetSpec(num_graphs=2, nodes_per_graph=5, feature_dim=3)
        assert spec.nodes_per_graph == (5, 5)
        assert spec.edge_model == dict(name="erdos_renyi", p=0.3)
        assert not spec.integer_features
        assert spec.to_dict()["nodes_per_graph"] == [5, 5]

    @pytest.mark.parametrize(
        "kwargs,err_msg",
        [
            (dict(num_graphs=0), "num_graphs must be >= 1"),
            (dict(nodes_per_graph=[3, 2]), "nodes_per_graph must be a range"),
            (dict(nodes_per_graph=0), "nodes_per_graph must be a range"),
            (dict(feature_dim=0), "feature_dim must be >= 1"),
            (dict(feature_model=dict(name="uniform")), "Unknown feature model"),
            (
                dict(feature_model=dict(name="integer", high=-1)),
                "upper bound must be >= 0",
            ),
            (dict(edge_model=dict(name="erdos_renyi", p=2.0)), "within [0, 1]"),
            (dict(edge_model=dict(name="ring")), "has not been registered"),
        ],
    )
    def test_err(self, kwargs, err_msg):
        args = dict(num_graphs=2, nodes_per_graph=5, feature_dim=3)
        args.update(kwargs)
        with pytest.raises(ValueError) as err_info:
            DatasetSpec(**args)
        assert err_msg in str(err_info.value)


class TestGenerateDataset:
    def test_deterministic(self):
        spec = DatasetSpec(num_graphs=4, nodes_per_graph=[3, 6], feature_dim=2, seed=7)
        a, b = generate_dataset(spec), generate_dataset(spec)
        assert [g.digest() for g in a] == [g.digest() for g in b]
        assert all(3 <= g.num_nodes <= 6 for g in a)
        assert all(g.feature_dim == 2 for g in a)

    def test_seed_changes_graphs(self):
        a = generate_dataset(
            DatasetSpec(num_graphs=3, nodes_per_graph=5, feature_dim=2)
        )
        b = generate_dataset(
            DatasetSpec(num_graphs=3, nodes_per_graph=5, feature_dim=2, seed=1)
        )
        assert [g.digest() for g in a] != [g.digest() for g in b]

    def test_integer_features(self):
        spec = DatasetSpec(
            num_graphs=3,
            nodes_per_graph=5,
            feature_dim=4,
            edge_model=dict(name="star"),
            feature_model=dict(name="integer", high=2),
        )
        for g in generate_dataset(spec):
            assert g.integer_features
            assert g.features.min() >= 0
            assert g.features.max() <= 2
            assert g.num_edges == 4


def test_khop_dataset():
    g = random_graph(num_nodes=20, feature_dim=2, p=0.1, seed=3)
    graphs = khop_dataset(g, num_subgraphs=5, k=1, seed=0)
    assert len(graphs) == 5
    assert all(1 <= sub.num_nodes <= 20 for sub in graphs)
    again = khop_dataset(g, num_subgraphs=5, k=1, seed=0)
    assert [x.digest() for x in graphs] == [x.digest() for x in again]


class TestMakeNodeLabels:
    @pytest.mark.parametrize("propagate", [True, False])
    def test_labels(self, propagate):
        graphs = [random_graph(seed=k) for k in range(3)]
        labels = make_node_labels(graphs, num_classes=3, seed=0, propagate=propagate)
        assert [y.shape for y in labels] == [(g.num_nodes,) for g in graphs]
        assert all(y.min() >= 0 and y.max() < 3 for y in labels)
        again = make_node_labels(graphs, num_classes=3, seed=0, propagate=propagate)
        assert all(np.array_equal(x, y) for x, y in zip(labels, again))

    def test_linear_without_propagation(self):
        # labels only depend on the node's own features
        g = random_graph(seed=0)
        isolated = g.__class__(num_nodes=g.num_nodes, edges=[], features=g.features)
        a = make_node_labels([g], num_classes=4, seed=1, propagate=False)[0]
        b = make_node_labels([isolated], num_classes=4, seed=1, propagate=False)[0]
        assert np.array_equal(a, b)

    def test_err(self):
        with pytest.raises(ValueError) as err_info:
            make_node_labels([random_graph()], num_classes=1, seed=0, propagate=True)
        assert "num_classes must be >= 2" in str(err_info.value)


class TestSaveLoad:
    def test_round_trip(self):
        graphs = [random_graph(seed=k) for k in range(3)]
        with TempDirectory() as tmp:
            path = os.path.join(tmp.path, "sub", "graphs.json")
            save_dataset(graphs, path)
            got = load_dataset(path)
        assert got == graphs

    def test_not_a_list(self):
        with TempDirectory() as tmp:
            tmp.write("graph.json", b'{"n": 1}')
            with pytest.raises(ValueError) as err_info:
                load_dataset(os.path.join(tmp.path, "graph.json"))
        assert "JSON array" in str(err_info.value)
