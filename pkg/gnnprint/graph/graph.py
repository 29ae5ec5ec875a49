"""
Node-attributed undirected graph and the pure operations on it.

Graphs are immutable: the feature matrix is stored as a read-only copy
and every operation returns a new object.
"""

import hashlib
from collections import deque
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gnnprint.constant import UNIT_TOLERANCE


def normalize_edges(edges: Iterable[Sequence[int]]) -> Tuple[Tuple[int, int], ...]:
    """
    Sort an undirected edge list with (u, v), u < v.

    :param edges: iterable of pairs.
    :return: sorted tuple of normalized pairs, duplicates kept for validation.
    """
    normalized = []
    for edge in edges:
        if len(edge) != 2:
            raise ValueError(f"Edge must be a pair of node indices, got {edge}")
        u, v = int(edge[0]), int(edge[1])
        normalized.append((min(u, v), max(u, v)))
    return tuple(sorted(normalized))


class Graph:
    """
    Undirected graph with a feature matrix of shape (num_nodes, feature_dim).

    Row i of `features` holds x_i. Self-loops are never stored.
    """

    def __init__(
        self,
        num_nodes: int,
        edges: Iterable[Sequence[int]],
        features: np.ndarray,
        integer_features: bool = False,
    ):
        """
        Init and validate.

        :param num_nodes: number of nodes n.
        :param edges: undirected pairs (u, v).
        :param features: shape = (n, D).
        :param integer_features: if True all feature values must be integer valued.
        """
        if num_nodes < 1:
            raise ValueError(f"A graph needs at least one node, got {num_nodes}")
        features = np.array(features, dtype=np.float64, copy=True)
        if features.ndim != 2 or features.shape[0] != num_nodes:
            raise ValueError(
                f"features must have shape ({num_nodes}, D), got {features.shape}"
            )
        if features.shape[1] < 1:
            raise ValueError("features must have at least one column.")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite.")
        if integer_features and not np.array_equal(features, np.round(features)):
            raise ValueError(
                "integer_features is set but some feature values are not integers."
            )

        edges = normalize_edges(edges)
        for u, v in edges:
            if u < 0 or v >= num_nodes:
                raise ValueError(
                    f"Edge ({u}, {v}) has an endpoint outside [0, {num_nodes})"
                )
            if u == v:
                raise ValueError(f"Self-loop on node {u} is not allowed.")
        if len(set(edges)) != len(edges):
            raise ValueError("Duplicate undirected edges are not allowed.")

        features.setflags(write=False)
        self._num_nodes = int(num_nodes)
        self._edges = edges
        self._features = features
        self._integer_features = bool(integer_features)

    @property
    def num_nodes(self) -> int:
        return self._num_nodes

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return self._edges

    @property
    def features(self) -> np.ndarray:
        return self._features

    @property
    def integer_features(self) -> bool:
        return self._integer_features

    @property
    def feature_dim(self) -> int:
        return self._features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def with_features(self, features: np.ndarray) -> "Graph":
        """
        Return a graph with the same structure and new features.

        :param features: shape = (n, D).
        :return: new graph.
        """
        return Graph(
            num_nodes=self._num_nodes,
            edges=self._edges,
            features=features,
            integer_features=self._integer_features,
        )

    def adjacency(self) -> np.ndarray:
        """
        Dense symmetric 0/1 adjacency without self-loops.

        :return: shape = (n, n)
        """
        adj = np.zeros((self._num_nodes, self._num_nodes), dtype=np.float64)
        for u, v in self._edges:
            adj[u, v] = 1.0
            adj[v, u] = 1.0
        return adj

    def neighbors(self) -> List[List[int]]:
        """Adjacency lists, sorted."""
        nbrs: List[List[int]] = [[] for _ in range(self._num_nodes)]
        for u, v in self._edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return [sorted(x) for x in nbrs]

    def digest(self) -> str:
        """sha256 over structure, feature bytes and the integer flag."""
        h = hashlib.sha256()
        h.update(str(self._num_nodes).encode())
        h.update(repr(self._edges).encode())
        h.update(np.ascontiguousarray(self._features).tobytes())
        h.update(str(self._features.shape).encode())
        h.update(b"1" if self._integer_features else b"0")
        return h.hexdigest()

    def to_dict(self) -> Dict:
        """Return the JSON-ready dict {n, edges, X, integer_features}."""
        return dict(
            n=self._num_nodes,
            edges=[[u, v] for u, v in self._edges],
            X=self._features.tolist(),
            integer_features=self._integer_features,
        )

    @classmethod
    def from_dict(cls, data: Dict) -> "Graph":
        """
        Rebuild a graph from `to_dict` output.

        :param data: dict with keys n, edges, X and optionally integer_features.
        :return: graph.
        """
        return cls(
            num_nodes=data["n"],
            edges=data["edges"],
            features=np.asarray(data["X"], dtype=np.float64).reshape(
                data["n"], -1
            ),
            integer_features=data.get("integer_features", False),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self._num_nodes == other._num_nodes
            and self._edges == other._edges
            and self._integer_features == other._integer_features
            and np.array_equal(self._features, other._features)
        )

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return (
            f"Graph(num_nodes={self._num_nodes}, num_edges={self.num_edges}, "
            f"feature_dim={self.feature_dim}, "
            f"integer_features={self._integer_features})"
        )


def check_unit(w: np.ndarray, feature_dim: Optional[int] = None) -> np.ndarray:
    """
    Validate a perturbation direction.

    :param w: direction, shape = (D,)
    :param feature_dim: expected D, not checked if None.
    :return: w as a float64 array.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"Direction must be a vector, got shape {w.shape}")
    if feature_dim is not None and w.shape[0] != feature_dim:
        raise ValueError(
            f"Direction has dimension {w.shape[0]}, features have {feature_dim}"
        )
    norm = np.linalg.norm(w)
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"Direction must have unit norm, got norm {norm}")
    return w


def perturb_node(g: Graph, i: int, w: np.ndarray, tau: float) -> Graph:
    """
    Move the features of node i along w.

    Row i of the returned graph equals x_i + tau * w, all other rows are copied.

    :param g: input graph, not modified.
    :param i: node index.
    :param w: unit direction, shape = (D,)
    :param tau: step.
    :return: perturbed graph.
    """
    if not 0 <= i < g.num_nodes:
        raise ValueError(f"Node index {i} out of range [0, {g.num_nodes})")
    w = check_unit(w, g.feature_dim)
    features = np.array(g.features, copy=True)
    features[i] = features[i] + tau * w
    return g.with_features(features)


def bfs_distances(g: Graph, source: int) -> Dict[int, int]:
    """
    Hop distances from source to every reachable node.

    :param g: graph.
    :param source: start node.
    :return: dict node -> distance.
    """
    nbrs = g.neighbors()
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def khop_subgraph(g: Graph, center: int, k: int) -> Tuple[Graph, Dict[int, int]]:
    """
    Induced subgraph on all nodes within hop distance k of center.

    New indices follow the order of the old ones.

    :param g: graph.
    :param center: centre node.
    :param k: hop count, >= 0.
    :return: (subgraph, index map old -> new)
    """
    if not 0 <= center < g.num_nodes:
        raise ValueError(f"Node index {center} out of range [0, {g.num_nodes})")
    if k < 0:
        raise ValueError(f"Hop count must be non-negative, got {k}")
    dist = bfs_distances(g, center)
    nodes = sorted(v for v, d in dist.items() if d <= k)
    index_map = {old: new for new, old in enumerate(nodes)}
    edges = [
        (index_map[u], index_map[v])
        for u, v in g.edges
        if u in index_map and v in index_map
    ]
    sub = Graph(
        num_nodes=len(nodes),
        edges=edges,
        features=g.features[nodes],
        integer_features=g.integer_features,
    )
    return sub, index_map


def batch_graphs(graphs: Sequence[Graph]) -> Graph:
    """
    Disjoint union of graphs, node indices shifted in order.

    :param graphs: non-empty list of graphs sharing the feature dimension.
    :return: union graph.
    """
    if len(graphs) == 0:
        raise ValueError("Cannot batch an empty list of graphs.")
    feature_dims = {g.feature_dim for g in graphs}
    if len(feature_dims) != 1:
        raise ValueError(f"Graphs have different feature dims {feature_dims}")
    offset = 0
    edges = []
    for g in graphs:
        edges += [(u + offset, v + offset) for u, v in g.edges]
        offset += g.num_nodes
    return Graph(
        num_nodes=offset,
        edges=edges,
        features=np.concatenate([g.features for g in graphs], axis=0),
        integer_features=all(g.integer_features for g in graphs),
    )
