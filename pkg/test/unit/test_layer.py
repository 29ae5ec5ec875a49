"""
Tests for gnnprint/model/layer.py

Each convolution is checked against a dense numpy oracle.
"""
import numpy as np
import pytest
import tensorflow as tf

from gnnprint.model.layer import GCNConv, GINConv, SAGEConv, TaskHead
from gnnprint.model.layer_util import (
    gcn_normalized_adjacency,
    graph_operators,
    mean_aggregation,
)
from test.unit.util import is_equal_tf, random_graph


def set_random_params(layer, seed: int = 0):
    rng = np.random.default_rng(seed)
    for var in layer.params.values():
        var.assign(rng.standard_normal(var.shape))


@pytest.fixture()
def graph():
    return random_graph(num_nodes=5, feature_dim=3, seed=2)


class TestGraphConv:
    @pytest.mark.parametrize(
        "layer_cls,keys",
        [
            (GCNConv, ["kernel", "bias"]),
            (GINConv, ["kernel", "bias"]),
            (SAGEConv, ["kernel_self", "kernel_neigh", "bias"]),
        ],
    )
    def test_params(self, layer_cls, keys):
        layer = layer_cls(in_dim=3, out_dim=2)
        assert list(layer.params.keys()) == keys
        assert all(v.dtype == tf.float64 for v in layer.params.values())
        no_bias = layer_cls(in_dim=3, out_dim=2, use_bias=False)
        assert "bias" not in no_bias.params

    def test_gcn(self, graph):
        layer = GCNConv(in_dim=3, out_dim=2)
        set_random_params(layer)
        got = layer(tf.constant(graph.features), operators=graph_operators(graph))
        p = {k: v.numpy() for k, v in layer.params.items()}
        expected = (
            gcn_normalized_adjacency(graph.adjacency()) @ graph.features @ p["kernel"]
            + p["bias"]
        )
        assert is_equal_tf(got, expected)

    def test_gin(self, graph):
        layer = GINConv(in_dim=3, out_dim=2)
        set_random_params(layer)
        got = layer(tf.constant(graph.features), operators=graph_operators(graph))
        p = {k: v.numpy() for k, v in layer.params.items()}
        aggregated = graph.features + graph.adjacency() @ graph.features
        expected = aggregated @ p["kernel"] + p["bias"]
        assert is_equal_tf(got, expected)

    def test_sage(self, graph):
        layer = SAGEConv(in_dim=3, out_dim=2)
        set_random_params(layer)
        got = layer(tf.constant(graph.features), operators=graph_operators(graph))
        p = {k: v.numpy() for k, v in layer.params.items()}
        expected = (
            graph.features @ p["kernel_self"]
            + mean_aggregation(graph.adjacency()) @ graph.features @ p["kernel_neigh"]
            + p["bias"]
        )
        assert is_equal_tf(got, expected)

    def test_batch_axis(self, graph):
        layer = SAGEConv(in_dim=3, out_dim=2)
        set_random_params(layer)
        operators = graph_operators(graph)
        batch = np.stack([graph.features, 2 * graph.features])
        got = layer(tf.constant(batch), operators=operators)
        for k in range(2):
            single = layer(tf.constant(batch[k]), operators=operators)
            assert is_equal_tf(got[k], single)

    def test_get_config(self):
        config = GINConv(in_dim=3, out_dim=2, eps=0.5).get_config()
        assert config["in_dim"] == 3
        assert config["out_dim"] == 2
        assert config["eps"] == 0.5


def test_task_head():
    head = TaskHead(in_dim=3, num_classes=4)
    head.kernel.assign(np.ones((3, 4)))
    got = head(tf.constant(np.ones((2, 3))))
    assert is_equal_tf(got, np.full((2, 4), 3.0))
