"""This module defines the graph convolution layers."""
from collections import OrderedDict
from typing import Dict

import tensorflow as tf
import tensorflow.keras.layers as tfkl

from gnnprint.model.layer_util import propagate


class GraphConv(tfkl.Layer):
    """
    Interface of a dense graph convolution in float64.

    Weights are created eagerly in `__init__` since all shapes are known,
    and are exposed in a fixed order through `params`.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        use_bias: bool = True,
        name: str = "graph_conv",
        **kwargs,
    ):
        """
        Init.

        :param in_dim: input feature dim.
        :param out_dim: output feature dim.
        :param use_bias: whether to add a bias.
        :param name: name of the layer.
        :param kwargs: additional arguments.
        """
        super().__init__(name=name, dtype="float64", **kwargs)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.use_bias = use_bias
        self.params: Dict[str, tf.Variable] = OrderedDict()

    def _add_param(self, key: str, shape: tuple):
        self.params[key] = self.add_weight(
            name=key, shape=shape, initializer="zeros", dtype="float64", trainable=True
        )

    def _add_bias(self, outputs: tf.Tensor) -> tf.Tensor:
        if self.use_bias:
            return outputs + self.params["bias"]
        return outputs

    def get_config(self) -> dict:
        """Return the config dictionary for recreating this class."""
        config = super().get_config()
        config.update(in_dim=self.in_dim, out_dim=self.out_dim, use_bias=self.use_bias)
        return config


class GCNConv(GraphConv):
    """H' = Â H W + b with Â the self-loop normalized adjacency."""

    def __init__(self, in_dim: int, out_dim: int, use_bias: bool = True, **kwargs):
        super().__init__(in_dim=in_dim, out_dim=out_dim, use_bias=use_bias, **kwargs)
        self._add_param("kernel", (in_dim, out_dim))
        if use_bias:
            self._add_param("bias", (out_dim,))

    def call(self, inputs: tf.Tensor, operators: Dict[str, tf.Tensor] = None, **kwargs):
        """
        :param inputs: shape = (..., n, in_dim)
        :param operators: output of `graph_operators`
        :param kwargs: additional arguments.
        :return: shape = (..., n, out_dim)
        """
        outputs = propagate(operators["gcn"], tf.matmul(inputs, self.params["kernel"]))
        return self._add_bias(outputs)


class GINConv(GraphConv):
    """
    H' = ((1 + eps) H + sum of neighbour H) W + b.

    eps is fixed to 0 and the MLP is a single linear layer, so the convolution
    itself is linear. The network applies ReLU between convolutions only, the
    last GIN layer of an embedding model stays linear and its embeddings keep
    their sign.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        use_bias: bool = True,
        eps: float = 0.0,
        **kwargs,
    ):
        super().__init__(in_dim=in_dim, out_dim=out_dim, use_bias=use_bias, **kwargs)
        self.eps = eps
        self._add_param("kernel", (in_dim, out_dim))
        if use_bias:
            self._add_param("bias", (out_dim,))

    def call(self, inputs: tf.Tensor, operators: Dict[str, tf.Tensor] = None, **kwargs):
        """
        :param inputs: shape = (..., n, in_dim)
        :param operators: output of `graph_operators`
        :param kwargs: additional arguments.
        :return: shape = (..., n, out_dim)
        """
        aggregated = (1.0 + self.eps) * inputs + propagate(operators["sum"], inputs)
        return self._add_bias(tf.matmul(aggregated, self.params["kernel"]))

    def get_config(self) -> dict:
        """Return the config dictionary for recreating this class."""
        config = super().get_config()
        config["eps"] = self.eps
        return config


class SAGEConv(GraphConv):
    """H' = H W_self + mean(neighbour H) W_neigh + b."""

    def __init__(self, in_dim: int, out_dim: int, use_bias: bool = True, **kwargs):
        super().__init__(in_dim=in_dim, out_dim=out_dim, use_bias=use_bias, **kwargs)
        self._add_param("kernel_self", (in_dim, out_dim))
        self._add_param("kernel_neigh", (in_dim, out_dim))
        if use_bias:
            self._add_param("bias", (out_dim,))

    def call(self, inputs: tf.Tensor, operators: Dict[str, tf.Tensor] = None, **kwargs):
        """
        :param inputs: shape = (..., n, in_dim)
        :param operators: output of `graph_operators`
        :param kwargs: additional arguments.
        :return: shape = (..., n, out_dim)
        """
        outputs = tf.matmul(inputs, self.params["kernel_self"]) + tf.matmul(
            propagate(operators["mean"], inputs), self.params["kernel_neigh"]
        )
        return self._add_bias(outputs)


class TaskHead(tfkl.Layer):
    """Linear node classification head used while training on a task."""

    def __init__(self, in_dim: int, num_classes: int, name: str = "task_head"):
        super().__init__(name=name, dtype="float64")
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.kernel = self.add_weight(
            name="kernel",
            shape=(in_dim, num_classes),
            initializer="zeros",
            dtype="float64",
            trainable=True,
        )
        self.bias = self.add_weight(
            name="bias",
            shape=(num_classes,),
            initializer="zeros",
            dtype="float64",
            trainable=True,
        )

    def call(self, inputs: tf.Tensor, **kwargs) -> tf.Tensor:
        """
        :param inputs: embeddings, shape = (n, in_dim)
        :param kwargs: additional arguments.
        :return: logits, shape = (n, num_classes)
        """
        return tf.matmul(inputs, self.kernel) + self.bias
