"""Communication graphs and doubly stochastic mixing matrices.

A mixing matrix W must be symmetric, doubly stochastic, have a positive
diagonal and respect the graph sparsity. Its spectral gap
lambda_w = max |eig(W - (1/n) 1 1^T)| controls how fast one synchronous
multiplication contracts disagreement between nodes; lambda_w < 1 for any
connected graph, and every step-size condition of the method depends on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TOPOLOGY_KINDS = ("complete", "ring", "path", "star", "balanced-binary-tree", "custom")

_DS_TOL = 1e-12


class GraphValidationError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..n-1."""

    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.n < 1:
            raise GraphValidationError(f"node count must be >= 1, got {self.n}")
        for i, j in self.edges:
            if i == j:
                raise GraphValidationError(f"self-loop at node {i}")
            if not (0 <= i < j < self.n):
                raise GraphValidationError(f"edge ({i},{j}) out of range for n={self.n}")
        comp = _component(self.n, self.edges, start=0)
        if len(comp) != self.n:
            rest = sorted(set(range(self.n)) - comp)
            raise GraphValidationError(
                f"graph is disconnected: nodes {rest} are not reachable from node 0"
            )

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a


def _component(n: int, edges, start: int = 0) -> set[int]:
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return seen


def _norm_edges(pairs) -> frozenset[tuple[int, int]]:
    return frozenset((min(i, j), max(i, j)) for i, j in pairs)


def build_graph(kind: str, n: int, edges=None) -> Graph:
    """Build a named topology, or wrap a custom edge list (kind="custom")."""
    kind = kind.replace("_", "-").lower()
    if kind not in TOPOLOGY_KINDS:
        raise GraphValidationError(f"unknown topology kind {kind!r}, expected one of {TOPOLOGY_KINDS}")
    if n < 1:
        raise GraphValidationError(f"node count must be >= 1, got {n}")
    if kind == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "ring":
        pairs = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    elif kind == "path":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        pairs = [(0, i) for i in range(1, n)]
    elif kind == "balanced-binary-tree":
        pairs = [((i - 1) // 2, i) for i in range(1, n)]
    else:
        if edges is None:
            raise GraphValidationError("custom topology requires an edge list")
        pairs = list(edges)
    return Graph(n=n, edges=_norm_edges(pairs))


def load_edge_list(path) -> Graph:
    """Read a plain-text edge list: first line n, then one 'i j' pair per line."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GraphValidationError(f"{path}: empty edge list file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise GraphValidationError(f"{path}: first line must be the node count") from exc
    pairs = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphValidationError(f"{path}: bad edge line {ln!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    return build_graph("custom", n, pairs)


@dataclass(frozen=True)
class MixingMatrix:
    n: int
    w: np.ndarray
    lambda_w: float
    graph: Graph | None = field(default=None, compare=False)

    def __post_init__(self):
        _validate_mixing(self.w, self.graph)


def _validate_mixing(w: np.ndarray, graph: Graph | None) -> None:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise GraphValidationError(f"mixing matrix must be square, got shape {w.shape}")
    if not np.array_equal(w, w.T):
        raise GraphValidationError("mixing matrix must be symmetric")
    n = w.shape[0]
    rows = w.sum(axis=1)
    cols = w.sum(axis=0)
    if np.max(np.abs(rows - 1.0)) > _DS_TOL or np.max(np.abs(cols - 1.0)) > _DS_TOL:
        raise GraphValidationError("mixing matrix is not doubly stochastic to 1e-12")
    if np.any(np.diag(w) <= 0):
        raise GraphValidationError("mixing matrix needs a strictly positive diagonal")
    if graph is not None:
        allowed = graph.adjacency() + np.eye(n)
        if np.any((allowed == 0) & (w != 0)):
            raise GraphValidationError("mixing matrix has weight off the graph edge set")


def build_mixing_matrix(g: Graph, scheme: str = "metropolis", laziness: float = 0.5) -> MixingMatrix:
    """Metropolis weights on any connected graph, or the lazy uniform matrix
    W = (1-s) I + (s/n) 1 1^T, which is only sparsity-consistent on complete graphs.
    """
    scheme = scheme.replace("_", "-").lower()
    n = g.n
    if scheme == "metropolis":
        deg = g.degrees()
        w = np.zeros((n, n))
        for i, j in g.edges:
            w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
        for i in range(n):
            w[i, i] = 1.0 - w[i].sum()
    elif scheme == "lazy-uniform":
        if not (0.0 < laziness <= 1.0):
            raise GraphValidationError(f"laziness must be in (0, 1], got {laziness}")
        if len(g.edges) != n * (n - 1) // 2:
            raise GraphValidationError("lazy-uniform weights require a complete graph")
        w = (1.0 - laziness) * np.eye(n) + (laziness / n) * np.ones((n, n))
        w = (w + w.T) / 2.0
    else:
        raise GraphValidationError(f"unknown mixing scheme {scheme!r}")
    return MixingMatrix(n=n, w=w, lambda_w=_spectral_gap_of(w), graph=g)


def mixing_from_matrix(w: np.ndarray) -> MixingMatrix:
    """Wrap a user-supplied matrix; validates everything except graph sparsity."""
    w = np.asarray(w, dtype=float)
    return MixingMatrix(n=w.shape[0], w=w, lambda_w=_spectral_gap_of(w), graph=None)


def _spectral_gap_of(w: np.ndarray) -> float:
    n = w.shape[0]
    b = w - np.ones((n, n)) / n
    return float(np.max(np.abs(np.linalg.eigvalsh(b)))) if n > 1 else 0.0


def spectral_gap(w) -> float:
    """Largest-magnitude eigenvalue of W - (1/n) 1 1^T.

    Accepts a MixingMatrix or a raw symmetric doubly stochastic array.
    """
    if isinstance(w, MixingMatrix):
        return w.lambda_w
    w = np.asarray(w, dtype=float)
    if not np.allclose(w, w.T, atol=0, rtol=0):
        raise GraphValidationError("spectral_gap requires a symmetric matrix")
    return _spectral_gap_of(w)


def consensus_contract_check(w: MixingMatrix, x: np.ndarray) -> bool:
    """Check ||(W (x) I) x - J x|| <= lambda_w ||x - J x|| + 1e-12 on a stacked vector."""
    x = np.asarray(x, dtype=float)
    if x.size % w.n != 0:
        raise ValueError(f"stacked vector of size {x.size} does not split into {w.n} blocks")
    blocks = x.reshape(w.n, -1)
    mean = blocks.mean(axis=0)
    lhs = np.linalg.norm(w.w @ blocks - mean)
    rhs = w.lambda_w * np.linalg.norm(blocks - mean)
    return bool(lhs <= rhs + 1e-12)
