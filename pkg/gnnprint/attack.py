"""
The adversarial model zoo: extraction surrogates, their transformed, pruned
and fine-tuned variants, and independently trained models.
"""
import os
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from gnnprint import log
from gnnprint.constant import ARCHITECTURES
from gnnprint.graph.dataset import make_node_labels
from gnnprint.graph.graph import Graph
from gnnprint.model.interface import EmbeddingModel
from gnnprint.model.network import GnnModel
from gnnprint.model.trainer import (
    TrainConfig,
    finetune,
    prune,
    relative_error,
    train,
)
from gnnprint.transform import preset, wrap
from gnnprint.util import (
    derive_seed,
    load_json,
    load_model,
    parallel_map,
    save_json,
    save_model,
)

logger = log.get(__name__)

SURROGATE_KINDS = ["extraction", "transform", "pruned", "finetuned"]


def split_dataset(dataset: Sequence[Graph], split: Optional[int]) -> List[Graph]:
    """
    Two disjoint halves of the training graphs.

    :param dataset: graphs.
    :param split: 0 for the first half, 1 for the second, None for all.
    :return: graphs of the split.
    """
    if split is None:
        return list(dataset)
    if split not in [0, 1]:
        raise ValueError(f"split must be 0, 1 or None, got {split}")
    if len(dataset) < 2:
        raise ValueError("Splitting needs at least 2 graphs.")
    half = len(dataset) // 2
    return list(dataset[:half]) if split == 0 else list(dataset[half:])


def train_on_task(
    dataset: Sequence[Graph],
    arch: str,
    embedding_dim: int,
    seed: int,
    split: Optional[int],
    cfg: Dict,
    task_seed: int,
    model_config: Optional[Dict] = None,
    role: str = "independent",
) -> GnnModel:
    """
    Train a model on the synthetic node classification task of the dataset.

    The labels only depend on `task_seed`, so every model trained this way
    solves the same task, the linear head is discarded.

    :param dataset: training graphs.
    :param arch: gcn, gin or sage.
    :param embedding_dim: d.
    :param seed: training seed.
    :param split: data split, see `split_dataset`.
    :param cfg: TrainConfig arguments besides loss and seed.
    :param task_seed: seed of the node labels.
    :param model_config: other GnnModel arguments.
    :param role: victim or independent, stored in the provenance.
    :return: trained model.
    """
    graphs = split_dataset(dataset, split)
    train_config = TrainConfig(**dict(cfg, loss="task", seed=seed))
    labels = make_node_labels(
        graphs, train_config.num_classes, seed=task_seed, propagate=True
    )
    model = train(
        arch,
        graphs,
        labels,
        train_config,
        model_config=dict(model_config or {}, embedding_dim=embedding_dim),
    )
    model.info["provenance"] = dict(
        kind=role, arch=arch, dim=embedding_dim, seed=seed, split=split
    )
    return model


def train_victim(dataset: Sequence[Graph], **kwargs) -> GnnModel:
    return train_on_task(dataset, role="victim", **kwargs)


def train_independent(dataset: Sequence[Graph], **kwargs) -> GnnModel:
    return train_on_task(dataset, role="independent", **kwargs)


def extraction_projection(victim_dim: int, dim: int, seed: int) -> Optional[np.ndarray]:
    """
    Fixed map of victim embeddings to the surrogate dimension.

    :param victim_dim: d
    :param dim: d'
    :param seed: random seed.
    :return: None if d' == d, else shape = (d', d) with N(0, 1/d) entries.
    """
    if dim == victim_dim:
        return None
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, victim_dim)) / np.sqrt(victim_dim)


def holdout_split(graphs: Sequence[Graph], fraction: float):
    """
    :return: (training graphs, held-out graphs), the last graphs are held out
    """
    if len(graphs) < 2:
        return list(graphs), list(graphs)
    num_holdout = min(max(int(np.ceil(fraction * len(graphs))), 1), len(graphs) - 1)
    return list(graphs[:-num_holdout]), list(graphs[-num_holdout:])


def extract(
    victim: EmbeddingModel,
    query_graphs: Sequence[Graph],
    arch: str,
    dim: int,
    cfg: Optional[TrainConfig],
    seed: int = 0,
    holdout_fraction: float = 0.2,
    model_config: Optional[Dict] = None,
) -> GnnModel:
    """
    Train a surrogate to regress the victim's embeddings on query graphs.

    Embeddings are regressed with MSE, through a fixed random projection when
    d' differs from the victim's d. The relative error on held-out query
    graphs is stored as `info["epsilon"]`.

    :param victim: queried model.
    :param query_graphs: graphs sent to the victim.
    :param arch: surrogate architecture.
    :param dim: surrogate embedding dim d'.
    :param cfg: MSE training config, None keeps the random initialization.
    :param seed: seed of the projection and of the untrained initialization.
    :param holdout_fraction: fraction of query graphs held out for epsilon.
    :param model_config: other GnnModel arguments, e.g. hidden_dim.
    :return: surrogate.
    """
    if cfg is not None and cfg.loss != "mse":
        raise ValueError(f"Extraction regresses embeddings, got loss {cfg.loss}")
    train_graphs, holdout_graphs = holdout_split(query_graphs, holdout_fraction)
    projection_seed = derive_seed(seed, "projection")
    projection = extraction_projection(victim.embedding_dim, dim, projection_seed)
    model_config = dict(model_config or {}, embedding_dim=dim)
    if cfg is None:
        surrogate = GnnModel.init(
            architecture=arch,
            feature_dim=query_graphs[0].feature_dim,
            seed=seed,
            **model_config,
        )
    else:
        targets = [victim.embed(g) for g in train_graphs]
        if projection is not None:
            targets = [projection @ t for t in targets]
        surrogate = train(arch, train_graphs, targets, cfg, model_config=model_config)
    epsilon = relative_error(victim, surrogate, holdout_graphs, projection)
    surrogate.info.update(
        provenance=dict(
            kind="extraction",
            arch=arch,
            dim=dim,
            seed=cfg.seed if cfg is not None else seed,
            epochs=cfg.epochs if cfg is not None else 0,
        ),
        epsilon=epsilon,
        projection_seed=projection_seed,
        num_queries=len(query_graphs),
    )
    logger.info(
        "Extracted %s surrogate with d'=%d, held-out relative error %.4f.",
        arch,
        dim,
        epsilon,
    )
    return surrogate


def expand_members(members: Union[Sequence[Dict], Dict], kind: str) -> List[Dict]:
    """
    Expand a compact member spec.

    dict(count=4, archs=["gcn", "gin"], dims=[8, 16], splits=[0, 1]) cycles
    through archs first, then dims and splits.

    :param members: list of explicit dicts or a compact dict.
    :param kind: for messages.
    :return: list of dicts with keys arch, dim, split.
    """
    if isinstance(members, dict):
        archs = members.get("archs", ARCHITECTURES)
        dims = members.get("dims", [None])
        splits = members.get("splits", [None])
        expanded = []
        for k in range(members.get("count", 0)):
            cycle = k // len(archs)
            expanded.append(
                dict(
                    arch=archs[k % len(archs)],
                    dim=dims[cycle % len(dims)],
                    split=splits[cycle % len(splits)],
                )
            )
        members = expanded
    members = [dict(m) for m in members]
    for m in members:
        if m.get("arch") not in ARCHITECTURES:
            raise ValueError(f"Unknown {kind} architecture in {m}")
    return members


class ZooPlan:
    """What to build around one victim."""

    def __init__(
        self,
        surrogates: Union[Sequence[Dict], Dict] = (),
        independents: Union[Sequence[Dict], Dict] = (),
        transforms: Sequence[str] = (),
        prune_fractions: Sequence[float] = (),
        finetune_epochs: Sequence[int] = (),
        train: Optional[Dict] = None,
        extract: Optional[Dict] = None,
        finetune: Optional[Dict] = None,
        model: Optional[Dict] = None,
        holdout_fraction: float = 0.2,
        seed: int = 0,
    ):
        """
        :param surrogates: extraction surrogates, keys arch and dim.
        :param independents: independent models, keys arch, dim and split.
        :param transforms: transform presets applied to every surrogate.
        :param prune_fractions: pruning fractions applied to every surrogate.
        :param finetune_epochs: fine-tuning lengths applied to every surrogate.
        :param train: TrainConfig arguments of independents.
        :param extract: TrainConfig arguments of extraction, epochs 0 keeps the
            random initialization.
        :param finetune: keyword arguments of `finetune` besides epochs, plus
            num_graphs, the number of labelled query graphs.
        :param model: GnnModel arguments shared by all models, e.g. hidden_dim.
        :param holdout_fraction: held-out query graphs for epsilon.
        :param seed: seed of all zoo randomness.
        """
        self.surrogates = expand_members(surrogates, "surrogate")
        self.independents = expand_members(independents, "independent")
        self.transforms = list(transforms)
        for name in self.transforms:
            preset(name)
        self.prune_fractions = [float(f) for f in prune_fractions]
        self.finetune_epochs = [int(e) for e in finetune_epochs]
        self.train = dict(train or {})
        self.extract = dict(extract or {})
        self.finetune = dict(finetune or {})
        self.model = dict(model or {})
        self.holdout_fraction = holdout_fraction
        self.seed = int(seed)


class ZooEntry:
    def __init__(
        self,
        model_id: str,
        model: EmbeddingModel,
        provenance: Dict,
        epsilon: Optional[float] = None,
    ):
        self.model_id = model_id
        self.model = model
        self.provenance = provenance
        self.epsilon = epsilon

    @property
    def kind(self) -> str:
        return self.provenance["kind"]

    @property
    def is_surrogate(self) -> bool:
        return self.kind in SURROGATE_KINDS

    @property
    def arch(self) -> str:
        return self.provenance.get("arch", "")

    @property
    def dim(self) -> int:
        return self.model.embedding_dim


class ModelZoo:
    def __init__(
        self,
        victim: GnnModel,
        surrogates: Sequence[ZooEntry] = (),
        independents: Sequence[ZooEntry] = (),
    ):
        self.victim = victim
        self.surrogates = list(surrogates)
        self.independents = list(independents)

    @property
    def entries(self) -> List[ZooEntry]:
        return self.surrogates + self.independents

    def by_kind(self, kind: str) -> List[ZooEntry]:
        return [e for e in self.surrogates if e.kind == kind]


def _check_not_victim(victim: GnnModel, member: Dict, seed: int):
    provenance = victim.info.get("provenance", {})
    same = (
        provenance.get("arch") == member["arch"]
        and provenance.get("dim") == member["dim"]
        and provenance.get("split") == member.get("split")
        and provenance.get("seed") == seed
    )
    if same:
        raise ValueError(
            f"Independent model {member} with seed {seed} would be the victim itself."
        )


def build_zoo(
    victim: GnnModel,
    dataset: Sequence[Graph],
    plan: ZooPlan,
    query_graphs: Optional[Sequence[Graph]] = None,
    task_seed: int = 0,
    jobs: int = 1,
) -> ModelZoo:
    """
    Train surrogates and independents and derive the attacked variants.

    :param victim: the protected model.
    :param dataset: training graphs of the victim, shared with independents.
    :param plan: zoo plan.
    :param query_graphs: extraction queries, the dataset if None.
    :param task_seed: label seed of the victim's training task.
    :param jobs: number of models trained in parallel.
    :return: zoo, deterministic given the plan's seed.
    """
    query_graphs = list(dataset if query_graphs is None else query_graphs)
    _, holdout_graphs = holdout_split(query_graphs, plan.holdout_fraction)
    victim_dim = victim.embedding_dim
    extract_cfg = dict(plan.extract)
    extract_epochs = extract_cfg.pop("epochs", 200)

    independent_seeds = [
        derive_seed(plan.seed, "independent", k) for k in range(len(plan.independents))
    ]
    independent_members = [
        dict(m, dim=m.get("dim") or victim_dim) for m in plan.independents
    ]
    for member, seed in zip(independent_members, independent_seeds):
        _check_not_victim(victim, member, seed)

    def build_surrogate(k: int) -> ZooEntry:
        member = plan.surrogates[k]
        dim = member.get("dim") or victim_dim
        seed = derive_seed(plan.seed, "surrogate", k)
        cfg = None
        if extract_epochs > 0:
            cfg = TrainConfig(**dict(extract_cfg, epochs=extract_epochs, seed=seed))
        model = extract(
            victim,
            query_graphs,
            member["arch"],
            dim,
            cfg,
            seed=seed,
            holdout_fraction=plan.holdout_fraction,
            model_config=plan.model,
        )
        return ZooEntry(
            model_id=f"surrogate{k}-{member['arch']}-d{dim}",
            model=model,
            provenance=model.info["provenance"],
            epsilon=model.info["epsilon"],
        )

    def build_independent(k: int) -> ZooEntry:
        member = independent_members[k]
        model = train_independent(
            dataset,
            arch=member["arch"],
            embedding_dim=member["dim"],
            seed=independent_seeds[k],
            split=member.get("split"),
            cfg=plan.train,
            task_seed=task_seed,
            model_config=plan.model,
        )
        split = member.get("split")
        return ZooEntry(
            model_id=f"independent{k}-{member['arch']}-d{member['dim']}-s{split}",
            model=model,
            provenance=model.info["provenance"],
        )

    surrogates = parallel_map(
        build_surrogate, list(range(len(plan.surrogates))), jobs, "surrogates"
    )
    independents = parallel_map(
        build_independent, list(range(len(plan.independents))), jobs, "independents"
    )

    def epsilon_of(base: ZooEntry, model: EmbeddingModel) -> float:
        projection = extraction_projection(
            victim_dim, base.dim, base.model.info["projection_seed"]
        )
        return relative_error(victim, model, holdout_graphs, projection)

    variants: List[ZooEntry] = []
    for base in surrogates:
        for name in plan.transforms:
            spec = preset(name, seed=derive_seed(plan.seed, "transform", base.model_id))
            variants.append(
                ZooEntry(
                    model_id=f"{base.model_id}+{name}",
                    model=wrap(base.model, spec),
                    provenance=dict(
                        base.provenance,
                        kind="transform",
                        transform=name,
                        base=base.model_id,
                        satisfies_origin=spec.satisfies_origin,
                    ),
                    epsilon=base.epsilon,
                )
            )
        for fraction in plan.prune_fractions:
            model = prune(base.model, fraction)
            variants.append(
                ZooEntry(
                    model_id=f"{base.model_id}+prune{fraction:g}",
                    model=model,
                    provenance=dict(
                        base.provenance,
                        kind="pruned",
                        fraction=fraction,
                        base=base.model_id,
                    ),
                    epsilon=epsilon_of(base, model),
                )
            )

    if plan.finetune_epochs and surrogates:
        finetune_cfg = dict(plan.finetune)
        num_graphs = finetune_cfg.pop("num_graphs", 20)
        num_classes = finetune_cfg.pop("num_classes", 4)
        labelled = query_graphs[:num_graphs]
        labels = make_node_labels(
            labelled,
            num_classes,
            seed=derive_seed(plan.seed, "finetune_labels"),
            propagate=False,
        )
        jobs_list = [(base, e) for base in surrogates for e in plan.finetune_epochs]

        def build_finetuned(item) -> ZooEntry:
            base, epochs = item
            model = finetune(
                base.model,
                labelled,
                labels,
                epochs,
                num_classes=num_classes,
                seed=derive_seed(plan.seed, "finetune", base.model_id, epochs),
                **finetune_cfg,
            )
            return ZooEntry(
                model_id=f"{base.model_id}+finetune{epochs}",
                model=model,
                provenance=dict(
                    base.provenance, kind="finetuned", epochs=epochs, base=base.model_id
                ),
                epsilon=epsilon_of(base, model),
            )

        variants += parallel_map(build_finetuned, jobs_list, jobs, "fine-tuning")

    logger.info(
        "Built zoo with %d extraction surrogates, %d variants and %d independents.",
        len(surrogates),
        len(variants),
        len(independents),
    )
    return ModelZoo(
        victim=victim, surrogates=surrogates + variants, independents=independents
    )


def save_zoo(zoo: ModelZoo, out_dir: str) -> str:
    """
    Save every model and a manifest.

    :param zoo: zoo.
    :param out_dir: output directory, models go to out_dir/models.
    :return: path of manifest.json
    """
    model_dir = os.path.join(out_dir, "models")
    save_model(zoo.victim, os.path.join(model_dir, "victim.json"))
    entries = []
    groups = [("surrogate", zoo.surrogates), ("independent", zoo.independents)]
    for role, group in groups:
        for entry in group:
            path = os.path.join("models", f"{entry.model_id}.json")
            save_model(entry.model, os.path.join(out_dir, path))
            entries.append(
                dict(
                    model_id=entry.model_id,
                    role=role,
                    provenance=entry.provenance,
                    epsilon=entry.epsilon,
                    path=path,
                )
            )
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_json(
        dict(victim=dict(path=os.path.join("models", "victim.json")), entries=entries),
        manifest_path,
    )
    return manifest_path


def load_zoo(manifest_path: str) -> ModelZoo:
    """
    Load a zoo saved by `save_zoo`.

    :param manifest_path: path of manifest.json
    :return: zoo.
    """
    root = os.path.dirname(os.path.abspath(os.path.expanduser(manifest_path)))
    manifest = load_json(manifest_path)
    surrogates, independents = [], []
    for data in manifest["entries"]:
        entry = ZooEntry(
            model_id=data["model_id"],
            model=load_model(os.path.join(root, data["path"])),
            provenance=data["provenance"],
            epsilon=data.get("epsilon"),
        )
        (surrogates if data["role"] == "surrogate" else independents).append(entry)
    victim = load_model(os.path.join(root, manifest["victim"]["path"]))
    return ModelZoo(victim=victim, surrogates=surrogates, independents=independents)
