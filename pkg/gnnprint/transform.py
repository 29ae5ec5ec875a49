"""
Embedding-space transformations an adversary applies on top of a surrogate.

Every transformation is a registered class. `build` draws its random
parameters once from a generator and returns the output dimension,
`__call__` maps row-stacked embeddings of shape (..., d_in) to (..., d_out).
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from gnnprint.constant import EPS
from gnnprint.graph.graph import Graph
from gnnprint.model.interface import EmbeddingModel
from gnnprint.registry import REGISTRY


class EmbeddingTransform:
    """
    Interface class for embedding transformations.

    `satisfies_origin` tells whether phi(0) = 0 holds.
    """

    satisfies_origin = True

    def __init__(self):
        self.input_dim: Optional[int] = None

    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        self.input_dim = input_dim
        return input_dim

    def __call__(self, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def get_config(self) -> Dict:
        return dict()


@REGISTRY.register_transform(name="permute")
class Permute(EmbeddingTransform):
    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        self.perm = rng.permutation(input_dim)
        return super().build(input_dim, rng)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h[..., self.perm]


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """
    Haar-distributed orthogonal matrix from the QR decomposition of a Gaussian
    matrix, with the signs of R's diagonal moved into Q.

    :param dim: d
    :param rng: random generator.
    :return: shape = (d, d)
    """
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs[None, :]


@REGISTRY.register_transform(name="rotate")
class Rotate(EmbeddingTransform):
    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        self.matrix = random_rotation(input_dim, rng)
        return super().build(input_dim, rng)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h @ self.matrix.T


@REGISTRY.register_transform(name="scale")
class Scale(EmbeddingTransform):
    def __init__(self, factor: float = 5.0):
        super().__init__()
        if factor == 0:
            raise ValueError("Scale factor must be non-zero.")
        self.factor = float(factor)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return self.factor * h

    def get_config(self) -> Dict:
        return dict(factor=self.factor)


@REGISTRY.register_transform(name="project_up")
class ProjectUp(EmbeddingTransform):
    """Zero padding from d to factor * d coordinates."""

    def __init__(self, factor: int = 5):
        super().__init__()
        if factor < 1 or int(factor) != factor:
            raise ValueError(f"project_up factor must be an integer >= 1, got {factor}")
        self.factor = int(factor)

    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        super().build(input_dim, rng)
        return self.factor * input_dim

    def __call__(self, h: np.ndarray) -> np.ndarray:
        pad = [(0, 0)] * (h.ndim - 1) + [(0, (self.factor - 1) * h.shape[-1])]
        return np.pad(h, pad)

    def get_config(self) -> Dict:
        return dict(factor=self.factor)


@REGISTRY.register_transform(name="gaussian_matrix")
class GaussianMatrix(EmbeddingTransform):
    """Multiplication by a (factor * d) x d matrix with N(0, 1/d) entries."""

    def __init__(self, factor: int = 5):
        super().__init__()
        if factor < 1 or int(factor) != factor:
            raise ValueError(
                f"gaussian_matrix factor must be an integer >= 1, got {factor}"
            )
        self.factor = int(factor)

    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        super().build(input_dim, rng)
        rows = self.factor * input_dim
        self.matrix = rng.standard_normal((rows, input_dim)) / np.sqrt(input_dim)
        return rows

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h @ self.matrix.T

    def get_config(self) -> Dict:
        return dict(factor=self.factor)


@REGISTRY.register_transform(name="per_entry_scale")
class PerEntryScale(EmbeddingTransform):
    """Each coordinate scaled by its own factor drawn uniformly in [low, high]."""

    def __init__(self, low: float = 0.5, high: float = 2.0):
        super().__init__()
        if not 0 < low <= high:
            raise ValueError(f"Need 0 < low <= high, got low={low}, high={high}")
        self.low, self.high = float(low), float(high)

    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        self.factors = rng.uniform(self.low, self.high, size=input_dim)
        return super().build(input_dim, rng)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h * self.factors

    def get_config(self) -> Dict:
        return dict(low=self.low, high=self.high)


@REGISTRY.register_transform(name="translate")
class Translate(EmbeddingTransform):
    """Adds a fixed offset drawn uniformly in [low, high] per coordinate."""

    satisfies_origin = False

    def __init__(self, low: float = -1.0, high: float = 1.0):
        super().__init__()
        if low > high:
            raise ValueError(f"Need low <= high, got low={low}, high={high}")
        self.low, self.high = float(low), float(high)

    def build(self, input_dim: int, rng: np.random.Generator) -> int:
        self.offset = rng.uniform(self.low, self.high, size=input_dim)
        return super().build(input_dim, rng)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return h + self.offset

    def get_config(self) -> Dict:
        return dict(low=self.low, high=self.high)


class Elementwise(EmbeddingTransform):
    fn = staticmethod(np.tanh)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return self.fn(h)


@REGISTRY.register_transform(name="atan")
class Atan(Elementwise):
    fn = staticmethod(np.arctan)


@REGISTRY.register_transform(name="exp")
class Exp(Elementwise):
    satisfies_origin = False
    fn = staticmethod(np.exp)


@REGISTRY.register_transform(name="sigmoid")
class Sigmoid(Elementwise):
    satisfies_origin = False

    @staticmethod
    def fn(h: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 + np.tanh(0.5 * h))


@REGISTRY.register_transform(name="sinh")
class Sinh(Elementwise):
    fn = staticmethod(np.sinh)


@REGISTRY.register_transform(name="tanh")
class Tanh(Elementwise):
    fn = staticmethod(np.tanh)


@REGISTRY.register_transform(name="pow")
class Pow(EmbeddingTransform):
    """Elementwise odd power, sign preserving."""

    def __init__(self, k: int = 3):
        super().__init__()
        if k < 1 or int(k) != k or k % 2 == 0:
            raise ValueError(f"pow exponent must be an odd positive integer, got {k}")
        self.k = int(k)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return np.power(h, self.k)

    def get_config(self) -> Dict:
        return dict(k=self.k)


@REGISTRY.register_transform(name="normalize")
class Normalize(EmbeddingTransform):
    """Each embedding divided by its L1 or L2 norm."""

    def __init__(self, ord: int = 2):
        super().__init__()
        if ord not in [1, 2]:
            raise ValueError(f"normalize supports ord 1 or 2, got {ord}")
        self.ord = int(ord)

    def __call__(self, h: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(h, ord=self.ord, axis=-1, keepdims=True)
        return h / np.maximum(norm, EPS)

    def get_config(self) -> Dict:
        return dict(ord=self.ord)


class TransformSpec:
    """
    Ordered composition of transformations, leftmost applied first.

    Random parameters of step k are drawn from SeedSequence([seed, k]).
    """

    def __init__(self, composition: Sequence[Dict], seed: int = 0):
        """
        :param composition: list of configs like dict(name="scale", factor=5)
        :param seed: seed of random matrices, permutations and offsets.
        """
        self.composition = [dict(c) for c in composition]
        self.seed = int(seed)
        # validates every step
        self._instantiate()

    def _instantiate(self) -> List[EmbeddingTransform]:
        return [REGISTRY.build_transform(config=c) for c in self.composition]

    @property
    def satisfies_origin(self) -> bool:
        return all(t.satisfies_origin for t in self._instantiate())

    def build(self, input_dim: int) -> Tuple[List[EmbeddingTransform], int]:
        """
        Instantiate and draw all random parameters.

        :param input_dim: d of the wrapped model.
        :return: (built transforms, output dim)
        """
        transforms = self._instantiate()
        dim = input_dim
        for k, transform in enumerate(transforms):
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, k]))
            dim = transform.build(dim, rng)
        return transforms, dim

    def to_dict(self) -> Dict:
        return dict(composition=self.composition, seed=self.seed)

    @classmethod
    def from_dict(cls, data: Dict) -> "TransformSpec":
        return cls(composition=data["composition"], seed=data.get("seed", 0))

    def __repr__(self) -> str:
        names = "+".join(c["name"] for c in self.composition) or "identity"
        return f"TransformSpec({names}, seed={self.seed})"


TRANSFORM_PRESETS: Dict[str, List[Dict]] = dict(
    identity=[],
    permute=[dict(name="permute")],
    rotate=[dict(name="rotate")],
    scale5=[dict(name="scale", factor=5)],
    rotate_scale5=[dict(name="rotate"), dict(name="scale", factor=5)],
    project5_rotate_scale5=[
        dict(name="project_up", factor=5),
        dict(name="rotate"),
        dict(name="scale", factor=5),
    ],
    gaussian5=[dict(name="gaussian_matrix", factor=5)],
    gaussian5_entry_scale=[
        dict(name="gaussian_matrix", factor=5),
        dict(name="per_entry_scale", low=0.5, high=2.0),
    ],
    translate=[dict(name="translate", low=-1.0, high=1.0)],
    atan=[dict(name="atan")],
    exp=[dict(name="exp")],
    sigmoid=[dict(name="sigmoid")],
    sinh=[dict(name="sinh")],
    tanh=[dict(name="tanh")],
    pow3=[dict(name="pow", k=3)],
    pow5=[dict(name="pow", k=5)],
    normalize_l1=[dict(name="normalize", ord=1)],
    normalize_l2=[dict(name="normalize", ord=2)],
)

EXACT_INVARIANT_PRESETS = [
    "permute",
    "rotate",
    "rotate_scale5",
    "project5_rotate_scale5",
]


def preset(name: str, seed: int = 0) -> TransformSpec:
    if name not in TRANSFORM_PRESETS:
        raise ValueError(
            f"Unknown transform preset {name}, "
            f"supported are {sorted(TRANSFORM_PRESETS.keys())}"
        )
    return TransformSpec(composition=TRANSFORM_PRESETS[name], seed=seed)


class TransformedModel(EmbeddingModel):
    """A model whose embeddings are passed through phi node by node."""

    def __init__(self, base: EmbeddingModel, spec: TransformSpec):
        self.base = base
        self.spec = spec
        self.transforms, self._embedding_dim = spec.build(base.embedding_dim)

    @property
    def embedding_dim(self) -> int:
        return self._embedding_dim

    @property
    def feature_dim(self) -> Optional[int]:
        return self.base.feature_dim

    def apply(self, h: np.ndarray) -> np.ndarray:
        """
        :param h: shape = (..., d)
        :return: shape = (..., d')
        """
        for transform in self.transforms:
            h = transform(h)
        return h

    def embed(self, graph: Graph) -> np.ndarray:
        return self.apply(self.base.embed(graph).T).T

    def embed_batch(self, graph: Graph, features: np.ndarray) -> np.ndarray:
        outputs = np.swapaxes(self.base.embed_batch(graph, features), 1, 2)
        return np.swapaxes(self.apply(outputs), 1, 2)

    @property
    def info(self) -> Dict:
        return getattr(self.base, "info", {})

    def to_dict(self) -> Dict:
        return dict(
            type="transformed", base=self.base.to_dict(), transform=self.spec.to_dict()
        )

    def __repr__(self) -> str:
        return f"TransformedModel({self.base}, {self.spec})"


def wrap(model: EmbeddingModel, spec: TransformSpec) -> EmbeddingModel:
    """
    Compose a model with a transformation, phi applied to every embedding.

    :param model: base model.
    :param spec: transformation.
    :return: transformed model, deterministic like the base model.
    """
    return TransformedModel(base=model, spec=spec)


def check_bilipschitz(spec: TransformSpec, samples: np.ndarray) -> Tuple[float, float]:
    """
    Empirical bi-Lipschitz constants of phi over all sample pairs.

    :param spec: transformation.
    :param samples: embeddings, shape = (m, d) with m >= 2.
    :return: (min, max) of |phi(v1) - phi(v2)| / |v1 - v2|
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError(
            f"Need at least 2 sample embeddings, got shape {samples.shape}"
        )
    transforms, _ = spec.build(samples.shape[1])
    mapped = samples
    for transform in transforms:
        mapped = transform(mapped)
    rows, cols = np.triu_indices(samples.shape[0], k=1)
    dist_in = np.linalg.norm(samples[rows] - samples[cols], axis=1)
    dist_out = np.linalg.norm(mapped[rows] - mapped[cols], axis=1)
    keep = dist_in > 0
    if not keep.any():
        raise ValueError("All sample pairs coincide.")
    ratios = dist_out[keep] / dist_in[keep]
    return float(ratios.min()), float(ratios.max())
