"""
GNN backbones (GCN, GIN, GraphSAGE) and the native embedding model wrapping them.

Layer stacks:

- gcn: (GCNConv + ReLU) x 3 + GCNConv
- gin: (GINConv + ReLU) x 2 + GINConv
- sage: (SAGEConv + ReLU + Dropout) x 2 + SAGEConv, dropout only in training
"""
import base64
from copy import deepcopy
from typing import Dict, List, Optional, Tuple

import numpy as np
import tensorflow as tf

from gnnprint import log
from gnnprint.constant import ARCHITECTURES
from gnnprint.graph.graph import Graph
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.layer import GCNConv, GINConv, SAGEConv
from gnnprint.model.layer_util import glorot_uniform, graph_operators
from gnnprint.registry import REGISTRY

logger = log.get(__name__)


class GnnNetwork(tf.keras.Model):
    """
    Interface class for the GNN backbones.

    Inputs are a dict with key `features`, shape = (..., n, D), and the
    propagation operators of `graph_operators`.
    """

    conv_cls = GCNConv
    default_num_layers = 2
    dropout_rate = 0.0

    def __init__(
        self,
        feature_dim: int,
        embedding_dim: int = 8,
        hidden_dim: int = 16,
        num_layers: Optional[int] = None,
        use_bias: bool = True,
        name: str = "GnnNetwork",
        **kwargs,
    ):
        """
        Init.

        :param feature_dim: input dim D.
        :param embedding_dim: output dim d.
        :param hidden_dim: width of the hidden layers.
        :param num_layers: number of convolutions, architecture default if None.
        :param use_bias: whether convolutions have biases.
        :param name: name of the backbone.
        :param kwargs: additional arguments.
        """
        super().__init__(name=name, dtype="float64", **kwargs)
        num_layers = self.default_num_layers if num_layers is None else num_layers
        if num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {num_layers}")
        if min(feature_dim, embedding_dim, hidden_dim) < 1:
            raise ValueError(
                f"Dimensions must be positive, got feature_dim={feature_dim}, "
                f"embedding_dim={embedding_dim}, hidden_dim={hidden_dim}"
            )
        self.feature_dim = feature_dim
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.use_bias = use_bias

        dims = [feature_dim] + [hidden_dim] * (num_layers - 1) + [embedding_dim]
        self.convs = [
            self.conv_cls(
                in_dim=dims[k], out_dim=dims[k + 1], use_bias=use_bias, name=f"conv{k}"
            )
            for k in range(num_layers)
        ]
        self._dropout_rng: Optional[np.random.Generator] = None

    def parameters(self) -> List[Tuple[str, tf.Variable]]:
        """
        All weights in a fixed order.

        :return: list of (name, variable), name like "conv0/kernel"
        """
        return [
            (f"conv{k}/{key}", var)
            for k, conv in enumerate(self.convs)
            for key, var in conv.params.items()
        ]

    def seed_dropout(self, seed: Optional[int]):
        """
        Fix the dropout masks drawn in training mode.

        :param seed: None disables dropout.
        """
        self._dropout_rng = None if seed is None else np.random.default_rng(seed)

    def call(self, inputs: Dict[str, tf.Tensor], training=None, mask=None):
        """
        Forward.

        :param inputs: dict with features and operators
        :param training: dropout is only applied when True
        :param mask: not used
        :return: shape = (..., n, embedding_dim)
        """
        h = inputs["features"]
        for k, conv in enumerate(self.convs):
            h = conv(h, operators=inputs)
            if k == self.num_layers - 1:
                break
            h = tf.nn.relu(h)
            if training and self.dropout_rate > 0 and self._dropout_rng is not None:
                keep = self._dropout_rng.random(h.shape) >= self.dropout_rate
                h = h * tf.constant(keep / (1.0 - self.dropout_rate), dtype=h.dtype)
        return h

    def get_config(self) -> dict:
        """Return the config dictionary for recreating this class."""
        return dict(
            feature_dim=self.feature_dim,
            embedding_dim=self.embedding_dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            use_bias=self.use_bias,
            name=self.name,
        )


@REGISTRY.register_backbone(name="gcn")
class GCN(GnnNetwork):
    conv_cls = GCNConv
    default_num_layers = 4

    def __init__(self, name: str = "GCN", **kwargs):
        super().__init__(name=name, **kwargs)


@REGISTRY.register_backbone(name="gin")
class GIN(GnnNetwork):
    conv_cls = GINConv
    default_num_layers = 3

    def __init__(self, name: str = "GIN", **kwargs):
        super().__init__(name=name, **kwargs)


@REGISTRY.register_backbone(name="sage")
class GraphSAGE(GnnNetwork):
    conv_cls = SAGEConv
    default_num_layers = 3
    dropout_rate = 0.5

    def __init__(self, name: str = "GraphSAGE", **kwargs):
        super().__init__(name=name, **kwargs)


def encode_array(arr: np.ndarray) -> Dict:
    """
    Exact JSON encoding of a float64 array.

    :param arr: array.
    :return: dict with shape and base64 of little-endian IEEE-754 bytes.
    """
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return dict(
        shape=list(arr.shape), data=base64.b64encode(arr.tobytes()).decode("ascii")
    )


def decode_array(data: Dict) -> np.ndarray:
    """
    Inverse of `encode_array`.

    :param data: dict with shape and data.
    :return: float64 array.
    """
    raw = base64.b64decode(data["data"].encode("ascii"))
    return np.frombuffer(raw, dtype="<f8").reshape(data["shape"]).astype(np.float64)


class GnnModel(EmbeddingModel):
    """
    A trainable GNN exposing the embedding model interface.

    Instances are treated as immutable: training, pruning and fine-tuning
    return new objects built with `with_weights`.
    """

    def __init__(
        self,
        architecture: str,
        feature_dim: int,
        embedding_dim: int = 8,
        hidden_dim: int = 16,
        num_layers: Optional[int] = None,
        use_bias: bool = True,
        weights: Optional[List[np.ndarray]] = None,
        info: Optional[Dict] = None,
    ):
        """
        Init with zero weights unless `weights` is given.

        :param architecture: one of gcn, gin, sage.
        :param feature_dim: input dim D.
        :param embedding_dim: output dim d.
        :param hidden_dim: hidden width.
        :param num_layers: number of convolutions, architecture default if None.
        :param use_bias: whether convolutions have biases.
        :param weights: optional weights in `parameter_names` order.
        :param info: free-form metadata, e.g. provenance and training history.
        """
        if architecture not in ARCHITECTURES:
            raise ValueError(
                f"Unknown architecture {architecture}, supported are {ARCHITECTURES}"
            )
        self.architecture = architecture
        self.network: GnnNetwork = REGISTRY.build_backbone(
            config=dict(
                name=architecture,
                feature_dim=feature_dim,
                embedding_dim=embedding_dim,
                hidden_dim=hidden_dim,
                num_layers=num_layers,
                use_bias=use_bias,
            )
        )
        self.info: Dict = {} if info is None else deepcopy(info)
        if weights is not None:
            self._assign(weights)

    @classmethod
    def init(cls, architecture: str, feature_dim: int, seed: int, **kwargs):
        """
        Glorot uniform kernels and zero biases drawn from `seed`.

        :param architecture: one of gcn, gin, sage.
        :param feature_dim: input dim D.
        :param seed: random seed.
        :param kwargs: other arguments of `GnnModel`.
        :return: initialized model.
        """
        model = cls(architecture=architecture, feature_dim=feature_dim, **kwargs)
        rng = np.random.default_rng(seed)
        weights = []
        for name, var in model.network.parameters():
            if name.endswith("bias"):
                weights.append(np.zeros(var.shape))
            else:
                weights.append(glorot_uniform(rng, *var.shape))
        model._assign(weights)
        return model

    def _assign(self, weights: List[np.ndarray]):
        params = self.network.parameters()
        if len(weights) != len(params):
            raise ValueError(
                f"Expected {len(params)} weight arrays, got {len(weights)}"
            )
        for (name, var), value in zip(params, weights):
            value = np.asarray(value, dtype=np.float64)
            if tuple(var.shape) != value.shape:
                raise ValueError(
                    f"Weight {name} has shape {tuple(var.shape)}, got {value.shape}"
                )
            var.assign(value)

    @property
    def config(self) -> Dict:
        return dict(
            architecture=self.architecture,
            feature_dim=self.network.feature_dim,
            embedding_dim=self.network.embedding_dim,
            hidden_dim=self.network.hidden_dim,
            num_layers=self.network.num_layers,
            use_bias=self.network.use_bias,
        )

    @property
    def embedding_dim(self) -> int:
        return self.network.embedding_dim

    @property
    def feature_dim(self) -> int:
        return self.network.feature_dim

    @property
    def num_layers(self) -> int:
        return self.network.num_layers

    def parameter_names(self) -> List[str]:
        return [name for name, _ in self.network.parameters()]

    def get_weights(self) -> List[np.ndarray]:
        """Copies of all weights in `parameter_names` order."""
        return [
            np.array(var.numpy(), copy=True) for _, var in self.network.parameters()
        ]

    def with_weights(
        self, weights: List[np.ndarray], info: Optional[Dict] = None
    ) -> "GnnModel":
        """
        New model with the same configuration and other weights.

        :param weights: weights in `parameter_names` order.
        :param info: metadata of the new model, copied from self if None.
        :return: new model.
        """
        return GnnModel(
            weights=weights, info=self.info if info is None else info, **self.config
        )

    def clone(self) -> "GnnModel":
        return self.with_weights(self.get_weights())

    def embed_tensor(
        self, features: tf.Tensor, operators: Dict[str, tf.Tensor], training=False
    ) -> tf.Tensor:
        """
        Differentiable forward pass.

        :param features: shape = (..., n, D)
        :param operators: output of `graph_operators`
        :param training: enables dropout.
        :return: shape = (..., n, d)
        """
        inputs = dict(operators)
        inputs["features"] = features
        return self.network(inputs, training=training)

    def embed(self, graph: Graph) -> np.ndarray:
        """
        :param graph: input graph.
        :return: shape = (d, n)
        """
        self.check_input(graph)
        outputs = self.embed_tensor(
            tf.constant(graph.features, dtype=tf.float64), graph_operators(graph)
        )
        return outputs.numpy().T

    def embed_batch(self, graph: Graph, features: np.ndarray) -> np.ndarray:
        """
        :param graph: provides the structure.
        :param features: shape = (batch, n, D)
        :return: shape = (batch, d, n)
        """
        self.check_input(graph)
        outputs = self.embed_tensor(
            tf.constant(features, dtype=tf.float64), graph_operators(graph)
        )
        return np.transpose(outputs.numpy(), (0, 2, 1))

    def to_dict(self) -> Dict:
        """JSON-ready dict, weights exact via base64 of float64 bytes."""
        return dict(
            type="gnn",
            config=self.config,
            weights=[
                dict(name=name, **encode_array(w))
                for name, w in zip(self.parameter_names(), self.get_weights())
            ],
            info=self.info,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "GnnModel":
        """
        Inverse of `to_dict`.

        :param data: dict.
        :return: model.
        """
        return cls(
            weights=[decode_array(w) for w in data["weights"]],
            info=data.get("info", {}),
            **data["config"],
        )

    def __repr__(self) -> str:
        return f"GnnModel({self.config})"
