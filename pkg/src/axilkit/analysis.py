"""Similarity, clustering and graph views of in-sample AXIL weights."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .axil import AxilMatrix

LINKAGES = ("single", "complete", "average")


@dataclass
class SimilarityMatrix:
    matrix: np.ndarray
    labels: list

    def __post_init__(self):
        S = np.asarray(self.matrix, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"similarity matrix must be square, got {S.shape}")
        if len(self.labels) != S.shape[0]:
            raise ValueError("one label per instance is required")
        self.matrix = S
        self.labels = [str(s) for s in self.labels]


@dataclass
class Dendrogram:
    """Agglomeration history.

    Clusters ``0..N-1`` are the instances; merge ``k`` creates cluster
    ``N + k`` from ``merges[k] = (a, b, height)`` with ``a < b``.
    """

    merges: list
    labels: list
    sizes: list = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return len(self.labels)

    def leaf_order(self) -> list:
        """Instances in left-to-right dendrogram order."""
        n = self.n_leaves
        if n == 1:
            return [0]

        def walk(c, out):
            stack = [c]
            while stack:
                c = stack.pop()
                if c < n:
                    out.append(c)
                else:
                    a, b, _ = self.merges[c - n]
                    stack.append(b)
                    stack.append(a)
            return out

        return walk(n + len(self.merges) - 1, [])

    def cut(self, num_clusters: int) -> np.ndarray:
        """Flat labels after undoing merges until ``num_clusters`` remain.

        Labels are numbered 0.. in order of each cluster's lowest instance.
        """
        n = self.n_leaves
        if not 1 <= num_clusters <= n:
            raise ValueError(f"num_clusters must lie in [1, {n}]")
        parent = list(range(n + len(self.merges)))

        def find(c):
            while parent[c] != c:
                parent[c] = parent[parent[c]]
                c = parent[c]
            return c

        for k, (a, b, _) in enumerate(self.merges[: n - num_clusters]):
            parent[find(a)] = n + k
            parent[find(b)] = n + k
        roots = [find(i) for i in range(n)]
        relabel: dict = {}
        return np.array([relabel.setdefault(r, len(relabel)) for r in roots])

    def to_newick(self) -> str:
        """Newick string; branch lengths are height differences."""
        n = self.n_leaves
        heights = [0.0] * n + [h for _, _, h in self.merges]

        def node(c):
            if c < n:
                return _newick_label(self.labels[c])
            a, b, _ = self.merges[c - n]
            return f"({edge(a, c)},{edge(b, c)})"

        def edge(child, par):
            return f"{node(child)}:{heights[par] - heights[child]:.10g}"

        if n == 1:
            return _newick_label(self.labels[0]) + ";"
        return node(n + len(self.merges) - 1) + ";"


_NEWICK_SAFE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _newick_label(label: str) -> str:
    if _NEWICK_SAFE.match(label):
        return label
    return "'" + label.replace("'", "''") + "'"


@dataclass
class InstanceGraph:
    labels: list
    edges: list  # (i, j, weight) with i < j

    def adjacency(self) -> np.ndarray:
        n = len(self.labels)
        A = np.zeros((n, n))
        for i, j, w in self.edges:
            A[i, j] = A[j, i] = w
        return A

    def to_networkx(self):
        import networkx as nx
        g = nx.Graph()
        for i, label in enumerate(self.labels):
            g.add_node(i, label=label)
        g.add_weighted_edges_from(self.edges)
        return g

    def to_dot(self) -> str:
        lines = ["graph axil {"]
        for i, label in enumerate(self.labels):
            lines.append(f'  n{i} [label="{_dot_escape(label)}"];')
        for i, j, w in self.edges:
            lines.append(f'  n{i} -- n{j} [weight="{w!r}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_graphml(self) -> str:
        lines = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
            '  <key id="label" for="node" attr.name="label" attr.type="string"/>',
            '  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>',
            '  <graph id="axil" edgedefault="undirected">',
        ]
        for i, label in enumerate(self.labels):
            lines.append(f'    <node id="n{i}"><data key="label">'
                         f'{escape(label)}</data></node>')
        for i, j, w in self.edges:
            lines.append(f'    <edge source="n{i}" target="n{j}">'
                         f'<data key="weight">{w!r}</data></edge>')
        lines += ["  </graph>", "</graphml>"]
        return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def symmetrize(K) -> SimilarityMatrix:
    """``(K + K^T) / 2`` of a square (in-sample) weight matrix."""
    if isinstance(K, AxilMatrix):
        W, labels = K.weights, K.train_labels
    else:
        W, labels = np.asarray(K, dtype=np.float64), None
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"symmetrize needs a square matrix, got {W.shape}")
    if labels is None:
        labels = [str(i) for i in range(W.shape[0])]
    return SimilarityMatrix((W + W.T) / 2.0, list(labels))


def _off_diagonal(S):
    return S[~np.eye(S.shape[0], dtype=bool)]


def to_dissimilarity(S: SimilarityMatrix) -> np.ndarray:
    """``max(S) - S`` with the maximum over off-diagonal entries.

    The diagonal is set to zero. AXIL weights can be negative and exceed 1,
    so ``1 - S`` would not be guaranteed non-negative.
    """
    M = S.matrix
    off = _off_diagonal(M)
    top = off.max() if off.size else 0.0
    D = top - M
    np.fill_diagonal(D, 0.0)
    return D


def hac_cluster(D, linkage: str = "average", num_clusters: int = 1,
                labels: Optional[Sequence[str]] = None):
    """Agglomerative clustering with Lance-Williams distance updates.

    At each step the closest pair of active clusters is merged; exact ties go
    to the lexicographically smallest ``(a, b)`` pair of cluster ids.
    Returns ``(dendrogram, flat_labels)``.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 1:
        raise ValueError("dissimilarity must be a non-empty square matrix")
    if not np.all(np.isfinite(D)):
        raise ValueError("dissimilarity contains non-finite values")
    n = D.shape[0]
    if not 1 <= num_clusters <= n:
        raise ValueError(f"num_clusters must lie in [1, {n}]")
    labels = [str(i) for i in range(n)] if labels is None else [str(s) for s in labels]

    dist = D.copy()
    np.fill_diagonal(dist, np.inf)
    # slot k of the working matrix currently holds cluster ids[k]
    ids = list(range(n))
    sizes = [1] * n
    alive = np.ones(n, dtype=bool)
    merges, merge_sizes = [], []
    for step in range(n - 1):
        sub = np.where(alive[:, None] & alive[None, :], dist, np.inf)
        best = sub.min()
        cand = np.argwhere(sub == best)
        a_slot, b_slot = min(
            ((p, q) for p, q in cand if p != q),
            key=lambda pq: tuple(sorted((ids[pq[0]], ids[pq[1]]))),
        )
        if ids[a_slot] > ids[b_slot]:
            a_slot, b_slot = b_slot, a_slot
        na, nb = sizes[a_slot], sizes[b_slot]
        da, db = dist[a_slot], dist[b_slot]
        if linkage == "single":
            new = np.minimum(da, db)
        elif linkage == "complete":
            new = np.maximum(da, db)
        else:
            new = (na * da + nb * db) / (na + nb)
        merges.append((ids[a_slot], ids[b_slot], float(best)))
        merge_sizes.append(na + nb)
        dist[a_slot, :] = new
        dist[:, a_slot] = new
        dist[a_slot, a_slot] = np.inf
        alive[b_slot] = False
        dist[b_slot, :] = np.inf
        dist[:, b_slot] = np.inf
        ids[a_slot] = n + step
        sizes[a_slot] = na + nb
    tree = Dendrogram(merges, labels, merge_sizes)
    return tree, tree.cut(num_clusters)


def to_graph(S: SimilarityMatrix, cutoff: float) -> InstanceGraph:
    """Undirected graph with an edge wherever off-diagonal ``S >= cutoff``."""
    M = S.matrix
    i, j = np.nonzero(np.triu(M >= cutoff, k=1))
    edges = [(int(a), int(b), float(M[a, b])) for a, b in zip(i, j)]
    return InstanceGraph(labels=list(S.labels), edges=edges)


__all__ = [
    "SimilarityMatrix", "Dendrogram", "InstanceGraph", "symmetrize",
    "to_dissimilarity", "hac_cluster", "to_graph", "LINKAGES",
]
