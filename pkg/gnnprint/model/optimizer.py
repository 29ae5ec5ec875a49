"""
Functions parsing the config optimizer options
"""

import tensorflow as tf

SUPPORTED_OPTIMIZERS = ["SGD"]


def build_optimizer(optimizer_config: dict) -> tf.keras.optimizers.Optimizer:
    """
    Parsing the optimiser options and parameters
    from config dictionary.

    Only plain or momentum gradient descent is supported so that training
    stays reproducible.

    :param optimizer_config: has key name and other required arguments,
        e.g. dict(name="SGD", learning_rate=0.01, momentum=0.9)
    :return: optimizer instance
    """
    if optimizer_config["name"] not in SUPPORTED_OPTIMIZERS:
        raise ValueError(
            f"Optimizer {optimizer_config['name']} is not supported, "
            f"supported are {SUPPORTED_OPTIMIZERS}"
        )
    learning_rate = optimizer_config.get("learning_rate", 0.01)
    if learning_rate < 0:
        raise ValueError(f"Learning rate must be non-negative, got {learning_rate}")
    optimizer_cls = getattr(tf.keras.optimizers, optimizer_config["name"])
    optimizer = optimizer_cls(**optimizer_config)
    return optimizer
