"""
Synthetic graph datasets, node labels and their JSON files.
"""

import json
import os
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from gnnprint import log
from gnnprint.graph.graph import Graph, khop_subgraph
from gnnprint.registry import REGISTRY

logger = log.get(__name__)

FEATURE_MODELS = ["normal", "integer"]


@REGISTRY.register_edge_model(name="erdos_renyi")
class ErdosRenyi:
    """Each of the C(n, 2) pairs is an edge independently with probability p."""

    def __init__(self, p: float):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"Edge probability must be within [0, 1], got {p}")
        self.p = p

    def __call__(self, num_nodes: int, rng: np.random.Generator) -> List[Tuple]:
        rows, cols = np.triu_indices(num_nodes, k=1)
        keep = rng.random(rows.shape[0]) < self.p
        return list(zip(rows[keep].tolist(), cols[keep].tolist()))


@REGISTRY.register_edge_model(name="path")
class Path:
    def __call__(self, num_nodes: int, rng: np.random.Generator) -> List[Tuple]:
        return [(i, i + 1) for i in range(num_nodes - 1)]


@REGISTRY.register_edge_model(name="star")
class Star:
    def __call__(self, num_nodes: int, rng: np.random.Generator) -> List[Tuple]:
        return [(0, i) for i in range(1, num_nodes)]


@REGISTRY.register_edge_model(name="grid")
class Grid:
    """Row-major grid with floor(sqrt(n)) rows, the last row may be partial."""

    def __call__(self, num_nodes: int, rng: np.random.Generator) -> List[Tuple]:
        width = int(np.ceil(num_nodes / max(int(np.sqrt(num_nodes)), 1)))
        edges = []
        for i in range(num_nodes):
            if (i + 1) % width != 0 and i + 1 < num_nodes:
                edges.append((i, i + 1))
            if i + width < num_nodes:
                edges.append((i, i + width))
        return edges


class DatasetSpec:
    """
    Parameters of a synthetic dataset.

    `edge_model` and `feature_model` are config dicts with key `name`,
    e.g. dict(name="erdos_renyi", p=0.3) and dict(name="integer", high=3).
    """

    def __init__(
        self,
        num_graphs: int,
        nodes_per_graph: Union[int, Sequence[int]],
        feature_dim: int,
        edge_model: Optional[Dict] = None,
        feature_model: Optional[Dict] = None,
        seed: int = 0,
    ):
        """
        Init and validate.

        :param num_graphs: number of graphs, >= 1.
        :param nodes_per_graph: fixed count or inclusive range [low, high].
        :param feature_dim: D, >= 1.
        :param edge_model: registered edge model config.
        :param feature_model: dict(name="normal") or dict(name="integer", high=K).
        :param seed: 64-bit seed.
        """
        if isinstance(nodes_per_graph, int):
            nodes_per_graph = (nodes_per_graph, nodes_per_graph)
        nodes_per_graph = tuple(int(x) for x in nodes_per_graph)
        if edge_model is None:
            edge_model = dict(name="erdos_renyi", p=0.3)
        feature_model = dict(name="normal") if feature_model is None else feature_model

        if num_graphs < 1:
            raise ValueError(f"num_graphs must be >= 1, got {num_graphs}")
        low, high = nodes_per_graph[0], nodes_per_graph[-1]
        if len(nodes_per_graph) != 2 or not 1 <= low <= high:
            raise ValueError(
                f"nodes_per_graph must be a range [low, high] with 1 <= low <= high, "
                f"got {nodes_per_graph}"
            )
        if feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
        if feature_model.get("name") not in FEATURE_MODELS:
            raise ValueError(
                f"Unknown feature model {feature_model}, "
                f"supported names are {FEATURE_MODELS}"
            )
        if feature_model["name"] == "integer" and feature_model.get("high", 3) < 0:
            raise ValueError(
                f"Integer feature upper bound must be >= 0, got {feature_model}"
            )

        self.num_graphs = int(num_graphs)
        self.nodes_per_graph = nodes_per_graph
        self.feature_dim = int(feature_dim)
        self.edge_model = dict(edge_model)
        self.feature_model = dict(feature_model)
        self.seed = int(seed)
        # validates the edge model arguments, e.g. p out of range
        self._edge_fn = REGISTRY.build_edge_model(config=self.edge_model)

    @property
    def integer_features(self) -> bool:
        return self.feature_model["name"] == "integer"

    def sample_features(self, num_nodes: int, rng: np.random.Generator) -> np.ndarray:
        """
        Draw a feature matrix.

        :param num_nodes: n
        :param rng: random generator.
        :return: shape = (n, D)
        """
        shape = (num_nodes, self.feature_dim)
        if self.integer_features:
            high = int(self.feature_model.get("high", 3))
            return rng.integers(0, high + 1, size=shape).astype(np.float64)
        return rng.standard_normal(shape)

    def to_dict(self) -> Dict:
        return dict(
            num_graphs=self.num_graphs,
            nodes_per_graph=list(self.nodes_per_graph),
            feature_dim=self.feature_dim,
            edge_model=self.edge_model,
            feature_model=self.feature_model,
            seed=self.seed,
        )


def generate_dataset(spec: DatasetSpec) -> List[Graph]:
    """
    Draw `spec.num_graphs` graphs, deterministic given `spec.seed`.

    :param spec: dataset spec.
    :return: list of graphs.
    """
    rng = np.random.default_rng(spec.seed)
    low, high = spec.nodes_per_graph
    graphs = []
    for _ in range(spec.num_graphs):
        num_nodes = int(rng.integers(low, high + 1))
        edges = spec._edge_fn(num_nodes, rng)
        graphs.append(
            Graph(
                num_nodes=num_nodes,
                edges=edges,
                features=spec.sample_features(num_nodes, rng),
                integer_features=spec.integer_features,
            )
        )
    logger.debug(
        "Generated %d graphs with edge model %s.", len(graphs), spec.edge_model
    )
    return graphs


def khop_dataset(g: Graph, num_subgraphs: int, k: int, seed: int) -> List[Graph]:
    """
    Turn one large graph into a dataset of k-hop subgraphs around random centres.

    :param g: the large graph.
    :param num_subgraphs: number of subgraphs.
    :param k: hop radius.
    :param seed: random seed for the centres.
    :return: list of subgraphs.
    """
    rng = np.random.default_rng(seed)
    centers = rng.integers(0, g.num_nodes, size=num_subgraphs)
    return [khop_subgraph(g, int(c), k)[0] for c in centers]


def make_node_labels(
    graphs: Sequence[Graph], num_classes: int, seed: int, propagate: bool
) -> List[np.ndarray]:
    """
    Synthetic node classes from a fixed random class-score matrix.

    With `propagate=False` the classes are a linear function of raw features,
    hence linearly separable. With `propagate=True` the scores use the mean of
    the node and its neighbours, which makes the task depend on structure.

    :param graphs: graphs sharing the feature dim.
    :param num_classes: number of classes, >= 2.
    :param seed: seed of the score matrix.
    :param propagate: whether to average over the closed neighbourhood.
    :return: per-graph int arrays of shape (n,)
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    rng = np.random.default_rng(seed)
    weight = rng.standard_normal((graphs[0].feature_dim, num_classes))
    labels = []
    for g in graphs:
        features = g.features
        if propagate:
            adj = g.adjacency() + np.eye(g.num_nodes)
            features = adj @ features / adj.sum(axis=1, keepdims=True)
        labels.append(np.argmax(features @ weight, axis=1).astype(np.int64))
    return labels


def save_dataset(graphs: Sequence[Graph], path: str):
    """
    Save graphs as one JSON array.

    :param graphs: graphs.
    :param path: output file path.
    """
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, "w") as f:
        json.dump([g.to_dict() for g in graphs], f)


def load_dataset(path: str) -> List[Graph]:
    """
    Load graphs saved by `save_dataset`.

    :param path: JSON file path.
    :return: list of graphs.
    """
    with open(os.path.expanduser(path), "r") as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"Dataset file {path} must contain a JSON array.")
    return [Graph.from_dict(x) for x in data]
