import json
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from gnnprint import log
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.network import GnnModel
from gnnprint.transform import TransformedModel, TransformSpec

logger = log.get(__name__)

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(master: int, *keys) -> int:
    """
    Derive an independent 32-bit seed for a pipeline stage.

    The seed is the first word of SeedSequence([master, crc32(key_1), ...]),
    so it only depends on the master seed and the key path, never on the
    order in which stages run.

    :param master: master seed.
    :param keys: stage keys, e.g. ("zoo", "independent", 3).
    :return: seed in [0, 2**32)
    """
    entropy = [int(master)] + [zlib.crc32(str(key).encode("utf-8")) for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def parallel_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    jobs: int = 1,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Map fn over items with a thread pool, results keep the input order.

    :param fn: function of one item.
    :param items: inputs.
    :param jobs: number of workers, <= 1 runs sequentially.
    :param desc: progress bar description, no bar if None.
    :return: list of outputs.
    """
    disable = desc is None
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in tqdm(items, desc=desc, disable=disable, leave=False)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, x) for x in items]
        return [
            f.result() for f in tqdm(futures, desc=desc, disable=disable, leave=False)
        ]


def build_log_dir(log_dir: str, exp_name: str) -> str:
    """
    Build a log directory for the experiment.

    :param log_dir: path of the log directory.
    :param exp_name: name of the experiment.
    :return: the path of directory to save logs.
    """
    log_dir = os.path.join(
        os.path.expanduser(log_dir),
        datetime.now().strftime("%Y%m%d-%H%M%S") if exp_name == "" else exp_name,
    )
    if os.path.exists(log_dir):
        logger.warning("Log directory %s exists already.", log_dir)
    else:
        os.makedirs(log_dir)
    return log_dir


def save_json(data: Dict, path: str):
    """
    :param data: JSON-ready data.
    :param path: output file path, parent directories are created.
    """
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)


def load_json(path: str) -> Dict:
    with open(os.path.expanduser(path), "r") as f:
        return json.load(f)


def save_model(model: EmbeddingModel, path: str):
    """
    Save a native or transformed model as JSON.

    :param model: GnnModel or TransformedModel.
    :param path: output file path.
    """
    if not isinstance(model, (GnnModel, TransformedModel)):
        raise ValueError(
            f"Only native and transformed models can be saved, got {model}"
        )
    save_json(model.to_dict(), path)


def model_from_dict(data: Dict) -> EmbeddingModel:
    """
    :param data: output of `to_dict` of a native or transformed model.
    :return: model.
    """
    if data.get("type") == "gnn":
        return GnnModel.from_dict(data)
    if data.get("type") == "transformed":
        return TransformedModel(
            base=model_from_dict(data["base"]),
            spec=TransformSpec.from_dict(data["transform"]),
        )
    raise ValueError(f"Unknown model type {data.get('type')}")


def load_model(path: str) -> EmbeddingModel:
    """
    Load a model saved by `save_model`.

    :param path: JSON file path.
    :return: model.
    """
    return model_from_dict(load_json(path))


def save_table(rows: List[Dict], path: str, columns: Optional[List[str]] = None):
    """
    Save a list of records as CSV.

    :param rows: list of dicts.
    :param path: output file path.
    :param columns: column order, all keys of the rows if None.
    """
    dirname = os.path.dirname(path)
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    df = pd.DataFrame(rows, columns=columns)
    df.to_csv(path, index=False, float_format="%.17g")
