"""Pattern discovery: bottom-up average-linkage clustering with a
Davies-Bouldin cut tuner.

The dendrogram is exact (Lance-Williams updates over a full distance matrix)
and deterministic: equal-distance merge candidates are ordered by the pair of
smallest leaf indices they contain. Memory is O(n^2) in the tower count,
which is fine at city scale (n^2 doubles at ~10k towers is under a gigabyte).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .vectorize import TrafficVector


class ClusterError(ValueError):
    pass


class Merge(NamedTuple):
    node_a: int
    node_b: int
    height: float
    size: int


@dataclass(slots=True)
class Dendrogram:
    """Merge history over ``n_leaves`` inputs.

    Leaves are numbered 0..n-1 in input order; merge i creates node
    n_leaves + i. Heights are non-decreasing (average linkage is monotone).
    """

    n_leaves: int
    merges: list[Merge]
    leaf_ids: list[str]

    def cut(self, r: int) -> np.ndarray:
        """Labels 1..r after performing the first n-r merges. Clusters are
        numbered by their smallest leaf index."""
        if not 1 <= r <= self.n_leaves:
            raise ClusterError(f"cannot cut {self.n_leaves} leaves into {r} clusters")
        parent = list(range(self.n_leaves + len(self.merges)))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for idx in range(self.n_leaves - r):
            m = self.merges[idx]
            node = self.n_leaves + idx
            parent[find(m.node_a)] = node
            parent[find(m.node_b)] = node
        roots: dict[int, int] = {}
        labels = np.zeros(self.n_leaves, dtype=int)
        for leaf in range(self.n_leaves):
            root = find(leaf)
            if root not in roots:
                roots[root] = len(roots) + 1
            labels[leaf] = roots[root]
        return labels


@dataclass(slots=True)
class ClusterModel:
    """Result of cutting the dendrogram: assignments, centroids and the DBI
    achieved at the chosen cut."""

    assignments: dict[str, int]
    centroids: np.ndarray  # (r, n) rows indexed by cluster-1
    sizes: list[int]
    cut_threshold: float
    dbi: float
    r: int


class DbiTracePoint(NamedTuple):
    r: int
    cut_height: float
    dbi: float


def _pairwise_distances(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    dist = np.zeros((n, n))
    for i in range(n - 1):
        d = np.linalg.norm(matrix[i + 1 :] - matrix[i], axis=1)
        dist[i, i + 1 :] = d
        dist[i + 1 :, i] = d
    return dist


def _check_vectors(vectors: Sequence[TrafficVector]) -> np.ndarray:
    if len(vectors) < 2:
        raise ClusterError(f"clustering needs at least 2 vectors, got {len(vectors)}")
    bad = [v.tower_id for v in vectors if v.degenerate]
    if bad:
        raise ClusterError(
            f"degenerate vectors must be excluded before clustering: {bad[:5]}"
        )
    n = vectors[0].n
    if any(v.n != n for v in vectors):
        raise ClusterError("vectors have mixed lengths")
    return np.stack([v.values for v in vectors])


def hac_average_linkage(vectors: Sequence[TrafficVector]) -> Dendrogram:
    """Exact average-linkage agglomeration under Euclidean distance.

    Ties between equally close cluster pairs are broken by the
    lexicographically smallest (min leaf index, max leaf index) of the two
    clusters' smallest-leaf representatives, making the merge sequence
    deterministic and order-independent.
    """
    matrix = _check_vectors(vectors)
    n = matrix.shape[0]
    dist = _pairwise_distances(matrix)
    np.fill_diagonal(dist, np.inf)

    active = np.ones(n, dtype=bool)
    sizes = np.ones(n, dtype=int)
    min_leaf = np.arange(n)
    node_of_slot = np.arange(n)
    merges: list[Merge] = []

    for step in range(n - 1):
        d_min = dist.min()
        ties = np.argwhere(dist == d_min)
        best = None
        for i, j in ties:
            if i >= j:
                continue
            key = (min(min_leaf[i], min_leaf[j]), max(min_leaf[i], min_leaf[j]))
            if best is None or key < best[0]:
                best = (key, int(i), int(j))
        _, i, j = best

        node = n + step
        merges.append(
            Merge(
                min(node_of_slot[i], node_of_slot[j]),
                max(node_of_slot[i], node_of_slot[j]),
                float(d_min),
                int(sizes[i] + sizes[j]),
            )
        )
        # Lance-Williams update for average linkage: the merged cluster's
        # distance to k is the size-weighted mean of the parts' distances.
        others = active.copy()
        others[i] = others[j] = False
        new_d = (sizes[i] * dist[i, others] + sizes[j] * dist[j, others]) / (
            sizes[i] + sizes[j]
        )
        dist[i, others] = new_d
        dist[others, i] = new_d
        # retire slot j entirely
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        min_leaf[i] = min(min_leaf[i], min_leaf[j])
        node_of_slot[i] = node

    return Dendrogram(n, merges, [v.tower_id for v in vectors])


def davies_bouldin_from_labels(matrix: np.ndarray, labels: np.ndarray) -> float:
    """DBI: mean over clusters of the worst (S_i + S_j) / M_ij ratio, where
    S is the mean member-to-centroid distance and M the centroid distance."""
    cluster_ids = np.unique(labels)
    r = cluster_ids.size
    if r < 2:
        raise ClusterError(f"Davies-Bouldin index needs >= 2 clusters, got {r}")
    centroids = np.stack([matrix[labels == c].mean(axis=0) for c in cluster_ids])
    scatter = np.array(
        [
            np.linalg.norm(matrix[labels == c] - centroids[idx], axis=1).mean()
            for idx, c in enumerate(cluster_ids)
        ]
    )
    total = 0.0
    for i in range(r):
        worst = -np.inf
        for j in range(r):
            if i == j:
                continue
            m_ij = float(np.linalg.norm(centroids[i] - centroids[j]))
            if m_ij == 0.0:
                raise ClusterError(
                    f"coincident centroids for clusters {cluster_ids[i]} and "
                    f"{cluster_ids[j]}: separation is zero"
                )
            worst = max(worst, (scatter[i] + scatter[j]) / m_ij)
        total += worst
    return total / r


def davies_bouldin(model: ClusterModel, vectors: Sequence[TrafficVector]) -> float:
    matrix = _check_vectors(vectors)
    labels = np.array([model.assignments[v.tower_id] for v in vectors])
    return davies_bouldin_from_labels(matrix, labels)


def build_model(
    dendrogram: Dendrogram, vectors: Sequence[TrafficVector], r: int, cut_threshold: float
) -> ClusterModel:
    matrix = _check_vectors(vectors)
    labels = dendrogram.cut(r)
    centroids = np.stack([matrix[labels == c].mean(axis=0) for c in range(1, r + 1)])
    sizes = [int(np.sum(labels == c)) for c in range(1, r + 1)]
    dbi = davies_bouldin_from_labels(matrix, labels)
    assignments = {tower_id: int(lbl) for tower_id, lbl in zip(dendrogram.leaf_ids, labels)}
    return ClusterModel(assignments, centroids, sizes, cut_threshold, dbi, r)


def tune_cut(
    dendrogram: Dendrogram,
    vectors: Sequence[TrafficVector],
    r_min: int = 2,
    r_max: int = 15,
) -> tuple[ClusterModel, list[DbiTracePoint]]:
    """Evaluate the DBI at every cut producing r_min..r_max clusters and keep
    the minimizer (ties go to the smaller R). The cut threshold reported for
    R clusters is the height of the first merge NOT performed."""
    if dendrogram.n_leaves < 3:
        raise ClusterError("cut tuning needs a dendrogram over >= 3 leaves")
    matrix = _check_vectors(vectors)
    r_hi = min(r_max, dendrogram.n_leaves)
    if r_min < 2 or r_min > r_hi:
        raise ClusterError(f"invalid cluster range [{r_min}, {r_max}]")
    trace: list[DbiTracePoint] = []
    for r in range(r_min, r_hi + 1):
        labels = dendrogram.cut(r)
        height = dendrogram.merges[dendrogram.n_leaves - r].height
        trace.append(DbiTracePoint(r, height, davies_bouldin_from_labels(matrix, labels)))
    best = min(trace, key=lambda p: (p.dbi, p.r))
    model = build_model(dendrogram, vectors, best.r, best.cut_height)
    return model, trace


@dataclass(slots=True)
class DistanceCdf:
    """Per-cluster empirical distribution of member-to-centroid distance."""

    distances: dict[int, np.ndarray] = field(default_factory=dict)

    def quantile(self, cluster: int, q: float) -> float:
        d = self.distances[cluster]
        if not 0.0 <= q <= 1.0:
            raise ClusterError(f"quantile out of range: {q}")
        # inverted CDF: smallest value whose empirical CDF reaches q
        idx = max(0, int(np.ceil(q * d.size)) - 1)
        return float(d[idx])


def distance_cdf(model: ClusterModel, vectors: Sequence[TrafficVector]) -> DistanceCdf:
    matrix = _check_vectors(vectors)
    labels = np.array([model.assignments[v.tower_id] for v in vectors])
    cdf = DistanceCdf()
    for c in range(1, model.r + 1):
        members = matrix[labels == c]
        d = np.linalg.norm(members - model.centroids[c - 1], axis=1)
        cdf.distances[c] = np.sort(d)
    return cdf


def cluster_shares(model: ClusterModel) -> dict[int, float]:
    total = sum(model.sizes)
    return {c + 1: 100.0 * size / total for c, size in enumerate(model.sizes)}


def fit_vectors(
    vectors: Sequence[TrafficVector], r_min: int = 2, r_max: int = 15
) -> tuple[ClusterModel, list[DbiTracePoint], list[str]]:
    """Cluster non-degenerate vectors (sorted by tower id for determinism);
    returns the tuned model, the DBI trace, and excluded tower ids."""
    excluded = sorted(v.tower_id for v in vectors if v.degenerate)
    usable = sorted((v for v in vectors if not v.degenerate), key=lambda v: v.tower_id)
    dendrogram = hac_average_linkage(usable)
    model, trace = tune_cut(dendrogram, usable, r_min, r_max)
    return model, trace, excluded


def write_assignments(path: str | Path, model: ClusterModel) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["tower_id", "cluster"])
        for tower_id in sorted(model.assignments):
            writer.writerow([tower_id, model.assignments[tower_id]])
    return path


def read_assignments(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["tower_id", "cluster"]:
            raise ClusterError(f"bad assignments header: {header}")
        return {row[0]: int(row[1]) for row in reader}


def write_centroids(path: str | Path, model: ClusterModel) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cluster", "size"] + [f"v{i}" for i in range(model.centroids.shape[1])])
        for c in range(model.r):
            writer.writerow(
                [c + 1, model.sizes[c]] + [repr(float(x)) for x in model.centroids[c]]
            )
    return path


def write_dbi_trace(path: str | Path, trace: Sequence[DbiTracePoint]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["R", "cut_height", "dbi"])
        for point in trace:
            writer.writerow([point.r, repr(point.cut_height), repr(point.dbi)])
    return path


def write_distance_cdf(path: str | Path, cdf: DistanceCdf) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cluster", "rank", "distance"])
        for cluster in sorted(cdf.distances):
            for rank, d in enumerate(cdf.distances[cluster], start=1):
                writer.writerow([cluster, rank, repr(float(d))])
    return path
