import json
import os
from copy import deepcopy
from typing import Dict, List, Union

import yaml

from gnnprint import log
from gnnprint.config.default import DEFAULT_CONFIG
from gnnprint.constant import ARCHITECTURES, SCORE_FORMS
from gnnprint.graph.dataset import DatasetSpec
from gnnprint.sampler import SamplerConfig
from gnnprint.transform import preset

logger = log.get(__name__)


def update_nested_dict(d: Dict, u: Dict) -> Dict:
    """
    Merge two dicts.

    https://stackoverflow.com/questions/3232943/update-value-of-a-nested-dictionary-of-varying-depth

    :param d: dict to be overwritten in case of conflicts.
    :param u: dict to be merged into d.
    :return:
    """

    for k, v in u.items():
        if isinstance(v, dict):
            d[k] = update_nested_dict(d.get(k, {}), v)
        else:
            d[k] = v
    return d


def load_file(path: str) -> Dict:
    """
    Load one YAML or JSON config file.

    :param path: file path, JSON if it ends with .json
    :return: dict, empty for an empty file
    """
    with open(path) as file:
        if path.endswith(".json"):
            config = json.load(file)
        else:
            config = yaml.load(file, Loader=yaml.FullLoader)
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ValueError(f"Config file {path} must hold a mapping, got {type(config)}")
    return config


def load_configs(config_path: Union[str, List[str], None]) -> Dict:
    """
    Load multiple configs on top of the defaults and update the nested dictionary.

    :param config_path: list of paths or one path, later files win.
    :return: the loaded config
    """
    if config_path is None:
        config_path = []
    if isinstance(config_path, str):
        config_path = [config_path]
    # replace ~ with user home path
    config_path = [os.path.expanduser(x) for x in config_path]
    config: Dict = {}
    for config_path_i in config_path:
        config = update_nested_dict(d=config, u=load_file(config_path_i))
    return config_sanity_check(config)


def save(config: dict, out_dir: str, filename: str = "config.yaml"):
    """
    Save the config into a yaml file.

    :param config: configuration to be outputed
    :param out_dir: directory of the output file
    :param filename: name of the output file
    """
    if not filename.endswith(".yaml"):
        raise ValueError(f"Config filename must end with .yaml, got {filename}")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, filename), "w+") as f:
        f.write(yaml.dump(config))


def dataset_spec(config: Dict, num_graphs: int, seed: int) -> DatasetSpec:
    """
    Build the DatasetSpec of one draw.

    :param config: the dataset section.
    :param num_graphs: number of graphs of this draw.
    :param seed: seed of this draw.
    :return: spec.
    """
    return DatasetSpec(
        num_graphs=num_graphs,
        nodes_per_graph=config["nodes_per_graph"],
        feature_dim=config["feature_dim"],
        edge_model=config["edge_model"],
        feature_model=config["feature_model"],
        seed=seed,
    )


def sampler_config(config: Dict) -> SamplerConfig:
    """
    :param config: the fingerprint section.
    :return: SamplerConfig without num_points.
    """
    return SamplerConfig(**{k: v for k, v in config.items() if k != "num_points"})


def config_sanity_check(config: dict) -> dict:
    """
    Fill missing keys from the defaults and check the values.

    :param config: entire config.
    :return: the completed config.
    """
    user_dataset = config.get("dataset", {}) or {}
    unknown = set(config.keys()) - set(DEFAULT_CONFIG.keys())
    if unknown:
        raise ValueError(
            f"Unknown config sections {sorted(unknown)}, "
            f"supported are {sorted(DEFAULT_CONFIG.keys())}"
        )
    config = deepcopy(config)
    config = update_nested_dict(deepcopy(DEFAULT_CONFIG), config)
    # component configs with a name replace the default instead of merging
    for key in ["edge_model", "feature_model"]:
        user_value = user_dataset.get(key)
        if user_value is not None:
            config["dataset"][key] = deepcopy(user_value)

    dataset_spec(config["dataset"], config["dataset"]["num_graphs"], 0)
    for key in ["num_query_graphs", "num_fingerprint_graphs"]:
        if config["dataset"][key] < 1:
            raise ValueError(
                f"dataset.{key} must be >= 1, got {config['dataset'][key]}"
            )

    if config["victim"]["arch"] not in ARCHITECTURES:
        raise ValueError(
            f"Unknown victim arch {config['victim']['arch']}, "
            f"supported are {ARCHITECTURES}"
        )
    if config["score"]["form"] not in SCORE_FORMS:
        raise ValueError(
            f"Unknown score form {config['score']['form']}, supported are {SCORE_FORMS}"
        )
    if config["fingerprint"]["num_points"] < 1:
        raise ValueError(
            f"fingerprint.num_points must be >= 1, "
            f"got {config['fingerprint']['num_points']}"
        )
    sampler_config(config["fingerprint"])

    conditions = config["conditions"]
    for name in conditions["transforms"]:
        preset(name)
    for fraction in conditions["prune_fractions"]:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"Pruning fractions must be within [0, 1], got {fraction}")
    for epochs in conditions["finetune_epochs"]:
        if epochs < 0:
            raise ValueError(f"Fine-tuning epochs must be >= 0, got {epochs}")
    for num_points in conditions["points"]:
        if num_points < 1:
            raise ValueError(f"Point counts must be >= 1, got {num_points}")
    for lam in conditions["lambdas"]:
        if lam < 0:
            raise ValueError(f"lambda values must be >= 0, got {lam}")
    if config["jobs"] < 1:
        raise ValueError(f"jobs must be >= 1, got {config['jobs']}")
    return config
