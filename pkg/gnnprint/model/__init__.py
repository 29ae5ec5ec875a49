# flake8: noqa
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.network import GCN, GIN, GnnModel, GraphSAGE
from gnnprint.model.trainer import (
    TrainConfig,
    TrainingError,
    finetune,
    min_embedding_norm,
    prune,
    relative_error,
    train,
)
