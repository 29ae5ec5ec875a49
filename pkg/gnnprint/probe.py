"""
Query tuples and the measurements taken on them: the normalized change
statistic q and directional derivatives of a node embedding.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np
import tensorflow as tf

from gnnprint import log
from gnnprint.constant import DEFAULT_DELTA, DEFAULT_FD_STEP, MIN_EMBEDDING_NORM
from gnnprint.graph.graph import Graph, check_unit
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.layer_util import graph_operators
from gnnprint.model.network import GnnModel

logger = log.get(__name__)

DERIVATIVE_MODES = ["analytic", "central-fd"]


class DegenerateEmbeddingError(ValueError):
    """The probed node has an embedding too close to zero to normalize by."""


class QueryTuple:
    """
    A probe (graph, node, direction, step).

    For integer features the direction is a basis vector e_j and the step is 1.
    """

    def __init__(self, graph: Graph, node: int, direction: np.ndarray, delta: float):
        if not 0 <= node < graph.num_nodes:
            raise ValueError(f"Node index {node} out of range [0, {graph.num_nodes})")
        direction = check_unit(direction, graph.feature_dim)
        if delta <= 0:
            raise ValueError(f"Step delta must be > 0, got {delta}")
        if graph.integer_features:
            if delta != 1.0:
                raise ValueError(f"Integer features require delta = 1, got {delta}")
            if np.count_nonzero(direction) != 1 or direction.max() != 1.0:
                raise ValueError(
                    f"Integer features require a basis direction e_j, got {direction}"
                )
        direction = np.array(direction, copy=True)
        direction.setflags(write=False)
        self.graph = graph
        self.node = int(node)
        self.direction = direction
        self.delta = float(delta)

    def with_graph(self, graph: Graph) -> "QueryTuple":
        return QueryTuple(
            graph=graph, node=self.node, direction=self.direction, delta=self.delta
        )

    def perturbed_features(self, tau: float) -> np.ndarray:
        """Features with row `node` moved by tau * direction."""
        features = np.array(self.graph.features, copy=True)
        features[self.node] += tau * self.direction
        return features

    def to_dict(self) -> Dict:
        return dict(
            graph=self.graph.to_dict(),
            i=self.node,
            w=self.direction.tolist(),
            delta=self.delta,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "QueryTuple":
        return cls(
            graph=Graph.from_dict(data["graph"]),
            node=data["i"],
            direction=np.asarray(data["w"], dtype=np.float64),
            delta=data["delta"],
        )

    def __repr__(self) -> str:
        return f"QueryTuple(graph={self.graph}, node={self.node}, delta={self.delta})"


def random_direction(
    rng: np.random.Generator, feature_dim: int, integer_features: bool
) -> np.ndarray:
    """
    Uniform direction on the unit sphere, or a uniform basis vector for
    integer features.

    :param rng: random generator.
    :param feature_dim: D.
    :param integer_features: whether to draw e_j.
    :return: shape = (D,)
    """
    if integer_features:
        w = np.zeros(feature_dim)
        w[rng.integers(feature_dim)] = 1.0
        return w
    while True:
        g = rng.standard_normal(feature_dim)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


class TupleSampler:
    """Draws query tuples: graph and node uniform, direction uniform on the sphere."""

    def __init__(
        self, dataset: Sequence[Graph], seed: int, delta: float = DEFAULT_DELTA
    ):
        if len(dataset) == 0:
            raise ValueError("TupleSampler needs a non-empty dataset.")
        if delta <= 0:
            raise ValueError(f"Step delta must be > 0, got {delta}")
        self.dataset = list(dataset)
        self.seed = seed
        self.delta = delta
        self._rng = np.random.default_rng(seed)

    def sample_random_tuple(self) -> QueryTuple:
        graph = self.dataset[self._rng.integers(len(self.dataset))]
        node = int(self._rng.integers(graph.num_nodes))
        direction = random_direction(
            self._rng, graph.feature_dim, graph.integer_features
        )
        return QueryTuple(
            graph=graph,
            node=node,
            direction=direction,
            delta=1.0 if graph.integer_features else self.delta,
        )

    def sample(self, count: int) -> List[QueryTuple]:
        return [self.sample_random_tuple() for _ in range(count)]


def sample_random_tuple(sampler: TupleSampler) -> QueryTuple:
    return sampler.sample_random_tuple()


def node_norm_guard(h_i: np.ndarray, node: int) -> float:
    """
    :param h_i: embedding of the probed node.
    :param node: node index for the message.
    :return: |h_i|
    """
    norm = float(np.linalg.norm(h_i))
    if not norm >= MIN_EMBEDDING_NORM:
        raise DegenerateEmbeddingError(
            f"Embedding of node {node} has norm {norm} < {MIN_EMBEDDING_NORM}"
        )
    return norm


def q_value(f: EmbeddingModel, t: QueryTuple) -> float:
    """
    q = |h_i(X + delta e_i w^T) - h_i(X)| / |h_i(X)|.

    :param f: model.
    :param t: tuple.
    :return: non-negative real.
    """
    features = np.stack([t.graph.features, t.perturbed_features(t.delta)])
    outputs = f.embed_batch(t.graph, features)
    h_i, h_i_perturbed = outputs[0][:, t.node], outputs[1][:, t.node]
    norm = node_norm_guard(h_i, t.node)
    return float(np.linalg.norm(h_i_perturbed - h_i) / norm)


def directional_derivative(
    f: EmbeddingModel,
    t: QueryTuple,
    mode: str = "analytic",
    fd_step: float = DEFAULT_FD_STEP,
) -> np.ndarray:
    """
    Derivative of h_i along w at X.

    - analytic: Jacobian-vector product through the layers, native models only.
    - central-fd: (h_i(X + tau w) - h_i(X - tau w)) / (2 tau).

    :param f: model.
    :param t: tuple, continuous features.
    :param mode: analytic or central-fd.
    :param fd_step: tau of the central difference.
    :return: shape = (d',)
    """
    if mode not in DERIVATIVE_MODES:
        raise ValueError(f"Unknown mode {mode}, supported are {DERIVATIVE_MODES}")
    if t.graph.integer_features:
        raise ValueError(
            "Directional derivatives are undefined for integer features, "
            "use q_value with delta = 1."
        )
    if mode == "central-fd":
        features = np.stack(
            [t.perturbed_features(fd_step), t.perturbed_features(-fd_step)]
        )
        outputs = f.embed_batch(t.graph, features)
        return (outputs[0][:, t.node] - outputs[1][:, t.node]) / (2.0 * fd_step)

    if not isinstance(f, GnnModel):
        raise ValueError(f"Analytic derivatives need a native GnnModel, got {f}")
    f.check_input(t.graph)
    return jvp(f, t.graph, t.node, t.direction)


def jvp(
    f: GnnModel, graph: Graph, node: int, direction: np.ndarray
) -> np.ndarray:
    """
    Forward-mode derivative of h_node along a feature direction of node `node`.

    :param f: native model.
    :param graph: graph.
    :param node: perturbed and read node.
    :param direction: shape = (D,)
    :return: shape = (d',)
    """
    features = tf.constant(graph.features, dtype=tf.float64)
    tangent = np.zeros(graph.features.shape)
    tangent[node] = direction
    with tf.autodiff.ForwardAccumulator(
        primals=features, tangents=tf.constant(tangent, dtype=tf.float64)
    ) as acc:
        outputs = f.embed_tensor(features, graph_operators(graph))
    return acc.jvp(outputs).numpy()[node]


def normalized_derivative_norm(
    f: EmbeddingModel,
    t: QueryTuple,
    mode: str = "central-fd",
    fd_step: Optional[float] = None,
) -> float:
    """
    |grad_w h_i| / |h_i|, the stationarity measure of a tuple.

    :param f: model.
    :param t: tuple, continuous features.
    :param mode: derivative mode.
    :param fd_step: tau for central-fd.
    :return: non-negative real.
    """
    h_i = f.embed(t.graph)[:, t.node]
    norm = node_norm_guard(h_i, t.node)
    derivative = directional_derivative(
        f, t, mode=mode, fd_step=DEFAULT_FD_STEP if fd_step is None else fd_step
    )
    return float(np.linalg.norm(derivative) / norm)
