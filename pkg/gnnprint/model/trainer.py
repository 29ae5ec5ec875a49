"""
Full-batch training, magnitude pruning and fine-tuning of GnnModel.

All functions return new models, inputs are never modified.
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import tensorflow as tf

from gnnprint import log
from gnnprint.graph.graph import Graph, batch_graphs
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.layer import TaskHead
from gnnprint.model.layer_util import glorot_uniform, graph_operators
from gnnprint.model.network import GnnModel
from gnnprint.model.optimizer import build_optimizer

logger = log.get(__name__)

LOSSES = ["mse", "task"]


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


class TrainConfig:
    """
    Hyper-parameters of one training run.

    `loss="mse"` regresses target embeddings, `loss="task"` trains a linear
    node classification head on integer labels and discards it afterwards.
    """

    def __init__(
        self,
        epochs: int = 200,
        learning_rate: float = 0.05,
        loss: str = "mse",
        seed: int = 0,
        momentum: float = 0.9,
        num_classes: int = 4,
    ):
        if epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {epochs}")
        if learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {learning_rate}")
        if loss not in LOSSES:
            raise ValueError(f"Unknown loss {loss}, supported are {LOSSES}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be within [0, 1), got {momentum}")
        self.epochs = int(epochs)
        self.learning_rate = float(learning_rate)
        self.loss = loss
        self.seed = int(seed)
        self.momentum = float(momentum)
        self.num_classes = int(num_classes)

    @property
    def optimizer_config(self) -> Dict:
        return dict(
            name="SGD", learning_rate=self.learning_rate, momentum=self.momentum
        )

    def to_dict(self) -> Dict:
        return dict(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            loss=self.loss,
            seed=self.seed,
            momentum=self.momentum,
            num_classes=self.num_classes,
        )


def _sub_seeds(seed: int) -> Tuple[int, int, int]:
    # init, head, dropout
    states = np.random.SeedSequence(seed).generate_state(3)
    return int(states[0]), int(states[1]), int(states[2])


def _check_finite(loss: float, epoch: int):
    if not np.isfinite(loss):
        raise TrainingError(f"Training loss became non-finite at epoch {epoch}: {loss}")


def _build_head(in_dim: int, num_classes: int, seed: int) -> TaskHead:
    head = TaskHead(in_dim=in_dim, num_classes=num_classes)
    head.kernel.assign(glorot_uniform(np.random.default_rng(seed), in_dim, num_classes))
    return head


def mse_loss(outputs: tf.Tensor, targets: tf.Tensor) -> tf.Tensor:
    return tf.reduce_mean(tf.square(outputs - targets))


def task_loss(logits: tf.Tensor, labels: tf.Tensor) -> tf.Tensor:
    return tf.reduce_mean(
        tf.nn.sparse_softmax_cross_entropy_with_logits(labels=labels, logits=logits)
    )


def _stack_targets(
    graphs: Sequence[Graph], targets: Sequence[np.ndarray]
) -> np.ndarray:
    """
    :return: shape = (total nodes, d), rows in batch order
    """
    if len(targets) != len(graphs):
        raise ValueError(
            f"Got {len(targets)} target matrices for {len(graphs)} graphs"
        )
    dims = {np.shape(t)[0] for t in targets}
    if len(dims) != 1:
        raise ValueError(f"Target matrices have different embedding dims {dims}")
    for g, t in zip(graphs, targets):
        if np.shape(t) != (np.shape(t)[0], g.num_nodes):
            raise ValueError(
                f"Target must have shape (d, {g.num_nodes}), got {np.shape(t)}"
            )
    return np.concatenate([np.asarray(t, dtype=np.float64) for t in targets], axis=1).T


def _stack_labels(graphs: Sequence[Graph], labels: Sequence[np.ndarray]) -> np.ndarray:
    if len(labels) != len(graphs):
        raise ValueError(f"Got {len(labels)} label arrays for {len(graphs)} graphs")
    for g, y in zip(graphs, labels):
        if np.shape(y) != (g.num_nodes,):
            raise ValueError(
                f"Labels must have shape ({g.num_nodes},), got {np.shape(y)}"
            )
    return np.concatenate([np.asarray(y, dtype=np.int64) for y in labels])


def _fit(
    model: GnnModel,
    graphs: Sequence[Graph],
    objective: Callable[[tf.Tensor], tf.Tensor],
    epochs: int,
    optimizer_config: Dict,
    dropout_seed: int,
    head: Optional[TaskHead] = None,
    keep_best: bool = True,
    on_epoch: Optional[Callable[[tf.Tensor], None]] = None,
) -> Tuple[GnnModel, List[float]]:
    """
    Full-batch gradient descent on the disjoint union of `graphs`.

    `model` is updated in place, callers pass a fresh copy.

    :param model: model to optimize.
    :param graphs: training graphs.
    :param objective: maps network (or head) outputs on the batch to a scalar loss.
    :param epochs: number of gradient steps.
    :param optimizer_config: config of `build_optimizer`.
    :param dropout_seed: seed of the training dropout masks.
    :param head: optional head applied after the network and trained jointly.
    :param keep_best: return the lowest-loss weights seen instead of the last ones.
    :param on_epoch: called with the deterministic outputs before each step
        and at the end.
    :return: (model, deterministic loss before each step followed by the final loss)
    """
    batch = batch_graphs(graphs)
    operators = graph_operators(batch)
    features = tf.constant(batch.features, dtype=tf.float64)
    variables = [var for _, var in model.network.parameters()]
    if head is not None:
        variables += [head.kernel, head.bias]
    optimizer = build_optimizer(optimizer_config)
    model.network.seed_dropout(dropout_seed)
    stochastic = model.network.dropout_rate > 0

    def forward(training: bool) -> tf.Tensor:
        outputs = model.embed_tensor(features, operators, training=training)
        return outputs if head is None else head(outputs)

    def evaluate() -> float:
        outputs = forward(training=False)
        if on_epoch is not None:
            on_epoch(outputs)
        return float(objective(outputs))

    losses: List[float] = []
    best_loss, best_weights = np.inf, None
    for epoch in range(epochs):
        with tf.GradientTape() as tape:
            loss = objective(forward(training=True))
        current = evaluate() if stochastic or on_epoch is not None else float(loss)
        _check_finite(current, epoch)
        losses.append(current)
        if keep_best and current < best_loss:
            best_loss, best_weights = current, model.get_weights()
        grads = tape.gradient(loss, variables)
        optimizer.apply_gradients(zip(grads, variables))

    final = evaluate()
    _check_finite(final, epochs)
    losses.append(final)
    if keep_best and best_weights is not None and best_loss < final:
        model = model.with_weights(best_weights)
    model.network.seed_dropout(None)
    return model, losses


def train(
    arch: str,
    dataset: Sequence[Graph],
    targets: Sequence[np.ndarray],
    cfg: TrainConfig,
    model_config: Optional[Dict] = None,
) -> GnnModel:
    """
    Train a freshly initialized model.

    With `cfg.loss == "mse"` targets are embedding matrices of shape (d, n),
    with `cfg.loss == "task"` they are integer node labels of shape (n,).

    :param arch: gcn, gin or sage.
    :param dataset: training graphs, non-empty.
    :param targets: one target per graph.
    :param cfg: training config.
    :param model_config: other GnnModel arguments, e.g. embedding_dim, hidden_dim.
    :return: trained model, its `info` holds the loss history.
    """
    if len(dataset) == 0:
        raise ValueError("Cannot train on an empty dataset.")
    model_config = dict(model_config or {})
    init_seed, head_seed, dropout_seed = _sub_seeds(cfg.seed)
    head = None
    if cfg.loss == "mse":
        y = tf.constant(_stack_targets(dataset, targets), dtype=tf.float64)
        target_dim = int(y.shape[1])
        if model_config.setdefault("embedding_dim", target_dim) != target_dim:
            raise ValueError(
                f"Targets have dim {target_dim}, "
                f"model_config asks for {model_config['embedding_dim']}"
            )

        def objective(outputs):
            return mse_loss(outputs, y)

    else:
        labels = tf.constant(_stack_labels(dataset, targets), dtype=tf.int64)
        model_config.setdefault("embedding_dim", 8)
        head = _build_head(model_config["embedding_dim"], cfg.num_classes, head_seed)

        def objective(outputs):
            return task_loss(outputs, labels)

    model = GnnModel.init(
        architecture=arch,
        feature_dim=dataset[0].feature_dim,
        seed=init_seed,
        **model_config,
    )
    model, losses = _fit(
        model=model,
        graphs=dataset,
        objective=objective,
        epochs=cfg.epochs,
        optimizer_config=cfg.optimizer_config,
        dropout_seed=dropout_seed,
        head=head,
    )
    model.info.update(
        train=cfg.to_dict(),
        initial_loss=losses[0],
        final_loss=min(losses),
        losses=losses,
    )
    logger.info(
        "Trained %s with %s loss: %.6g -> %.6g in %d epochs.",
        arch,
        cfg.loss,
        losses[0],
        min(losses),
        cfg.epochs,
    )
    return model


def loss_and_gradients(
    model: GnnModel, graphs: Sequence[Graph], targets: Sequence[np.ndarray]
) -> Tuple[float, List[np.ndarray]]:
    """
    MSE training loss and its reverse-mode gradient, without dropout.

    :param model: model.
    :param graphs: graphs.
    :param targets: embedding matrices of shape (d, n).
    :return: (loss, gradients in `parameter_names` order)
    """
    batch = batch_graphs(graphs)
    y = tf.constant(_stack_targets(graphs, targets), dtype=tf.float64)
    variables = [var for _, var in model.network.parameters()]
    with tf.GradientTape() as tape:
        outputs = model.embed_tensor(
            tf.constant(batch.features, dtype=tf.float64), graph_operators(batch)
        )
        loss = mse_loss(outputs, y)
    grads = tape.gradient(loss, variables)
    return float(loss), [np.asarray(g) for g in grads]


def prune(model: GnnModel, fraction: float) -> GnnModel:
    """
    Global magnitude pruning of the kernels.

    The floor(fraction * total) smallest-magnitude kernel entries across all
    layers are set to zero, ties broken by position. Biases are kept.

    :param model: model, not modified.
    :param fraction: in [0, 1].
    :return: pruned model.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"Pruning fraction must be within [0, 1], got {fraction}")
    weights = model.get_weights()
    is_kernel = [not name.endswith("bias") for name in model.parameter_names()]
    flat = np.concatenate([w.ravel() for w, k in zip(weights, is_kernel) if k])
    num_pruned = int(np.floor(fraction * flat.size))
    mask = np.ones(flat.size, dtype=bool)
    mask[np.argsort(np.abs(flat), kind="stable")[:num_pruned]] = False

    pruned, offset = [], 0
    for w, k in zip(weights, is_kernel):
        if k:
            pruned.append(w * mask[offset : offset + w.size].reshape(w.shape))
            offset += w.size
        else:
            pruned.append(w)
    info = dict(model.info)
    info["pruned"] = dict(fraction=fraction, num_pruned=num_pruned)
    return model.with_weights(pruned, info=info)


def finetune(
    model: GnnModel,
    graphs: Sequence[Graph],
    labels: Sequence[np.ndarray],
    epochs: int,
    learning_rate: float = 0.01,
    momentum: float = 0.9,
    num_classes: Optional[int] = None,
    seed: int = 0,
) -> GnnModel:
    """
    Fine-tune all weights through a fresh linear head on node labels.

    The head is discarded afterwards. Accuracies of the jointly trained
    head before each epoch and at the end are kept in `info["finetune"]`.

    :param model: model, not modified.
    :param graphs: labelled graphs.
    :param labels: int labels per graph, shape (n,)
    :param epochs: number of steps, >= 0.
    :param learning_rate: >= 0, 0 leaves the weights unchanged.
    :param momentum: SGD momentum.
    :param num_classes: number of classes, inferred from labels if None.
    :param seed: seed of the head and dropout masks.
    :return: fine-tuned model.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    y = _stack_labels(graphs, labels)
    num_classes = int(y.max()) + 1 if num_classes is None else num_classes
    _, head_seed, dropout_seed = _sub_seeds(seed)
    head = _build_head(model.embedding_dim, max(num_classes, 2), head_seed)
    y_tensor = tf.constant(y, dtype=tf.int64)
    accuracies: List[float] = []

    def record_accuracy(logits):
        accuracies.append(float(np.mean(np.argmax(logits.numpy(), axis=1) == y)))

    tuned, losses = _fit(
        model=model.clone(),
        graphs=graphs,
        objective=lambda logits: task_loss(logits, y_tensor),
        epochs=epochs,
        optimizer_config=dict(
            name="SGD", learning_rate=learning_rate, momentum=momentum
        ),
        dropout_seed=dropout_seed,
        head=head,
        keep_best=False,
        on_epoch=record_accuracy,
    )
    tuned.info["finetune"] = dict(
        epochs=epochs,
        learning_rate=learning_rate,
        seed=seed,
        accuracy=accuracies,
        losses=losses,
    )
    return tuned


def relative_error(
    reference: EmbeddingModel,
    model: EmbeddingModel,
    graphs: Sequence[Graph],
    projection: Optional[np.ndarray] = None,
) -> float:
    """
    Mean over graphs of |H_model - P H_ref|_F / |P H_ref|_F.

    :param reference: reference model, e.g. the victim.
    :param model: compared model.
    :param graphs: evaluation graphs.
    :param projection: P, shape = (d', d), identity if None.
    :return: mean relative error.
    """
    errors = []
    for g in graphs:
        target = reference.embed(g)
        if projection is not None:
            target = projection @ target
        denom = max(np.linalg.norm(target), 1e-300)
        errors.append(np.linalg.norm(model.embed(g) - target) / denom)
    return float(np.mean(errors))


def min_embedding_norm(model: EmbeddingModel, graphs: Sequence[Graph]) -> float:
    """
    Smallest embedding norm over all nodes of all graphs.

    :param model: model.
    :param graphs: graphs.
    :return: min_i |h_i|
    """
    return float(min(np.linalg.norm(model.embed(g), axis=0).min() for g in graphs))
