from typing import List, Optional, Union

import numpy as np
import tensorflow as tf

from gnnprint.constant import EPS
from gnnprint.graph.graph import Graph
from gnnprint.model.interface import EmbeddingModel


def is_equal_np(
    x: Union[np.ndarray, List], y: Union[np.ndarray, List], atol: float = EPS
) -> bool:
    """
    Check if two numpy arrays are identical within a tolerance.

    :param x:
    :param y:
    :param atol: error margin
    :return: return true if two arrays are nearly equal
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    # check shape
    if x.shape != y.shape:
        return False

    # check nan values
    # support case some values are nan
    if np.any(np.isnan(x) != np.isnan(y)):
        return False
    x = np.nan_to_num(x)
    y = np.nan_to_num(y)

    # check values
    return np.all(np.isclose(x, y, atol=atol, rtol=0))


def is_equal_tf(
    x: Union[tf.Tensor, np.ndarray, List],
    y: Union[tf.Tensor, np.ndarray, List],
    atol: float = EPS,
) -> bool:
    """
    Check if two tf tensors are identical within a tolerance.

    :param x:
    :param y:
    :param atol: error margin
    :return: return true if two tf tensors are nearly equal
    """
    x = tf.cast(x, dtype=tf.float64).numpy()
    y = tf.cast(y, dtype=tf.float64).numpy()
    return is_equal_np(x=x, y=y, atol=atol)


def random_graph(
    num_nodes: int = 6,
    feature_dim: int = 3,
    p: float = 0.5,
    seed: int = 0,
    connected: bool = True,
) -> Graph:
    """
    Random graph with standard normal features.

    :param num_nodes: n
    :param feature_dim: D
    :param p: edge probability.
    :param seed: random seed.
    :param connected: add a path through all nodes.
    :return: graph
    """
    rng = np.random.default_rng(seed)
    edges = {
        (u, v)
        for u in range(num_nodes)
        for v in range(u + 1, num_nodes)
        if rng.random() < p
    }
    if connected:
        edges |= {(u, u + 1) for u in range(num_nodes - 1)}
    return Graph(
        num_nodes=num_nodes,
        edges=sorted(edges),
        features=rng.standard_normal((num_nodes, feature_dim)),
    )


class LinearModel(EmbeddingModel):
    """h_j = W x_j + b, no message passing, for exact checks."""

    def __init__(self, weight: np.ndarray, bias: Optional[np.ndarray] = None):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = (
            np.zeros(self.weight.shape[0]) if bias is None else np.asarray(bias)
        )

    @property
    def embedding_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[1]

    def embed(self, graph: Graph) -> np.ndarray:
        return self.weight @ graph.features.T + self.bias[:, None]

