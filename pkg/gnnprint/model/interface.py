"""
Query-only interface shared by native GNNs, transformed surrogates and test doubles.
"""
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from gnnprint.graph.graph import Graph


class EmbeddingModel(ABC):
    """
    Interface class for node embedding models.

    A model maps a graph to a matrix of shape (embedding_dim, num_nodes)
    whose column j is the embedding of node j. Implementations must be
    deterministic and must not mutate their state when queried.
    """

    @property
    @abstractmethod
    def embedding_dim(self) -> int:
        """Output dimension d'."""

    @property
    def feature_dim(self) -> Optional[int]:
        """Expected input feature dim, None if the model accepts any."""
        return None

    @abstractmethod
    def embed(self, graph: Graph) -> np.ndarray:
        """
        Embed all nodes of a graph.

        :param graph: input graph.
        :return: shape = (embedding_dim, num_nodes)
        """

    def embed_batch(self, graph: Graph, features: np.ndarray) -> np.ndarray:
        """
        Embed several feature matrices that share the structure of `graph`.

        :param graph: provides the structure.
        :param features: shape = (batch, n, D)
        :return: shape = (batch, embedding_dim, n)
        """
        return np.stack([self.embed(graph.with_features(x)) for x in features])

    def check_input(self, graph: Graph):
        """
        Raise if the graph does not fit the model input.

        :param graph: input graph.
        """
        if self.feature_dim is not None and graph.feature_dim != self.feature_dim:
            raise ValueError(
                f"Model expects feature dim {self.feature_dim}, "
                f"got graph with feature dim {graph.feature_dim}"
            )
