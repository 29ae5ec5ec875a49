"""
Module containing utilities for graph layers: the dense propagation operators.
"""
from typing import Dict

import numpy as np
import tensorflow as tf

from gnnprint.graph.graph import Graph


def gcn_normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """
    Symmetrically normalized adjacency with self-loops.

    Â = D̃^{-1/2} (A + I) D̃^{-1/2} where D̃ is the degree matrix of A + I.

    :param adj: shape = (n, n), symmetric without self-loops.
    :return: shape = (n, n)
    """
    adj_tilde = adj + np.eye(adj.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(adj_tilde.sum(axis=1))
    return adj_tilde * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


def mean_aggregation(adj: np.ndarray) -> np.ndarray:
    """
    Row-normalized adjacency, rows of isolated nodes are zero.

    :param adj: shape = (n, n)
    :return: shape = (n, n)
    """
    deg = adj.sum(axis=1, keepdims=True)
    return np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)


def graph_operators(graph: Graph) -> Dict[str, tf.Tensor]:
    """
    Dense propagation operators used by the graph convolutions.

    - gcn: normalized adjacency with self-loops
    - sum: raw adjacency, neighbour sum
    - mean: neighbour mean

    :param graph: input graph.
    :return: dict of float64 tensors of shape (n, n)
    """
    adj = graph.adjacency()
    return dict(
        gcn=tf.constant(gcn_normalized_adjacency(adj), dtype=tf.float64),
        sum=tf.constant(adj, dtype=tf.float64),
        mean=tf.constant(mean_aggregation(adj), dtype=tf.float64),
    )


def propagate(operator: tf.Tensor, features: tf.Tensor) -> tf.Tensor:
    """
    Multiply node features by an (n, n) operator, supporting leading batch axes.

    :param operator: shape = (n, n)
    :param features: shape = (..., n, f)
    :return: shape = (..., n, f)
    """
    return tf.einsum("ij,...jf->...if", operator, features)


def glorot_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int
) -> np.ndarray:
    """
    Glorot uniform initial kernel.

    :param rng: random generator.
    :param fan_in: input dim.
    :param fan_out: output dim.
    :return: shape = (fan_in, fan_out)
    """
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
