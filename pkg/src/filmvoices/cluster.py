"""Group speech-segment embeddings into speaker identities.

Average-linkage hierarchical agglomeration on cosine distance.  The
linkage is fixed (not configurable) and merge ties are broken toward the
smallest (i, j) slot pair, where a cluster's slot is the smallest original
record index among its members, so results are reproducible across
platforms and input orderings.

Cluster distances are maintained with the Lance-Williams update for
average linkage, d(k, i+j) = (n_i d(k,i) + n_j d(k,j)) / (n_i + n_j),
which keeps a full merge pass near O(N^2); a feature film yields at most
a few thousand speech segments, so no fancier structure is warranted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Annotation, SpeakerTurn
from .ioformats import EmbeddingRecord


@dataclass(frozen=True)
class ClusterConfig:
    """Stopping rule: distance threshold or a fixed cluster count."""

    mode: str
    tau: float | None = None
    k: int | None = None

    def __post_init__(self) -> None:
        if self.mode == "threshold":
            if self.tau is None or not 0.0 < self.tau < 2.0:
                raise ValueError(f"tau must be in (0, 2), got {self.tau}")
        elif self.mode == "fixed_k":
            if self.k is None or self.k < 1:
                raise ValueError(f"k must be >= 1, got {self.k}")
        else:
            raise ValueError(f"unknown cluster mode {self.mode!r}")

    @classmethod
    def threshold(cls, tau: float) -> "ClusterConfig":
        return cls(mode="threshold", tau=tau)

    @classmethod
    def fixed_k(cls, k: int) -> "ClusterConfig":
        return cls(mode="fixed_k", k=k)


@dataclass(frozen=True)
class ClusterResult:
    """Cluster labels aligned with input record order.

    Labels are contiguous integers 0..C-1, numbered by each cluster's
    earliest record index.  ``merge_distances`` is the sequence of
    average-linkage distances at which merges happened, in merge order.
    """

    labels: tuple[int, ...]
    centroids: tuple[tuple[float, ...], ...]
    merge_distances: tuple[float, ...] = ()

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance undefined for zero-norm vector")
    return float(np.clip(1.0 - float(np.dot(u, v)) / (nu * nv), 0.0, 2.0))


def _pairwise_cosine(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(
            f"zero-norm embedding at record {int(np.argmin(norms))}"
        )
    unit = vectors / norms[:, None]
    return np.clip(1.0 - unit @ unit.T, 0.0, 2.0)


def agglomerate(records: list[EmbeddingRecord], cfg: ClusterConfig) -> ClusterResult:
    """Agglomerate embedding records into clusters under ``cfg``.

    Threshold mode keeps merging while the minimum pairwise cluster
    distance is <= tau; fixed_k mode merges down to exactly min(k, N)
    clusters.
    """
    if not records:
        raise ValueError("agglomerate needs at least one record")
    dims = {len(r.vector) for r in records}
    if len(dims) != 1:
        raise ValueError(f"records have mixed dimensions: {sorted(dims)}")
    vectors = np.asarray([r.vector for r in records], dtype=float)
    n = len(records)
    target = min(cfg.k, n) if cfg.mode == "fixed_k" else 1

    if n == 1:
        return ClusterResult(labels=(0,), centroids=(tuple(vectors[0]),))

    dist = _pairwise_cosine(vectors)
    np.fill_diagonal(dist, np.inf)
    active = np.ones(n, dtype=bool)
    size = np.ones(n, dtype=np.int64)
    members: list[list[int]] = [[i] for i in range(n)]

    # Per-slot nearest neighbor over the upper triangle: nn_idx[i] is the
    # smallest j > i minimizing dist[i, j].  Inactive rows/columns hold inf
    # so argmin scans need no separate mask.
    nn_dist = np.full(n, np.inf)
    nn_idx = np.full(n, -1, dtype=np.int64)

    def recompute_nn(i: int) -> None:
        row = dist[i, i + 1 :]
        if row.size == 0 or not np.isfinite(row).any():
            nn_dist[i], nn_idx[i] = np.inf, -1
        else:
            j = int(np.argmin(row))
            nn_dist[i], nn_idx[i] = row[j], i + 1 + j

    for i in range(n):
        recompute_nn(i)

    n_active = n
    merge_distances: list[float] = []
    while n_active > target:
        i = int(np.argmin(nn_dist))
        d = float(nn_dist[i])
        if not np.isfinite(d):
            break
        if cfg.mode == "threshold" and d > cfg.tau:
            break
        j = int(nn_idx[i])

        merged_row = (size[i] * dist[i, :] + size[j] * dist[j, :]) / (
            size[i] + size[j]
        )
        dist[i, :] = merged_row
        dist[:, i] = merged_row
        dist[i, i] = np.inf
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        size[i] += size[j]
        members[i].extend(members[j])
        active[j] = False
        nn_dist[j], nn_idx[j] = np.inf, -1
        n_active -= 1
        merge_distances.append(d)

        recompute_nn(i)
        stale = active & ((nn_idx == i) | (nn_idx == j))
        stale[i] = False
        for k in np.nonzero(stale)[0]:
            recompute_nn(int(k))
        # Rows before i may gain a better (or equal, smaller-index) neighbor.
        col = dist[:, i]
        improved = active.copy()
        improved[i:] = False
        improved &= (col < nn_dist) | ((col == nn_dist) & (i < nn_idx))
        nn_dist[improved] = col[improved]
        nn_idx[improved] = i

    slots = sorted(int(s) for s in np.nonzero(active)[0])
    labels = [0] * n
    centroids = []
    for label, slot in enumerate(slots):
        for member in members[slot]:
            labels[member] = label
        centroids.append(tuple(vectors[members[slot]].mean(axis=0)))
    return ClusterResult(
        labels=tuple(labels),
        centroids=tuple(centroids),
        merge_distances=tuple(merge_distances),
    )


def to_annotation(
    records: list[EmbeddingRecord], result: ClusterResult, recording_id: str
) -> Annotation:
    """Turn labeled records into an Annotation with speakers ``spk{label}``."""
    if len(records) != len(result.labels):
        raise ValueError(
            f"{len(result.labels)} labels for {len(records)} records"
        )
    return Annotation(
        recording_id,
        tuple(
            SpeakerTurn(record.interval, f"spk{label}")
            for record, label in zip(records, result.labels)
        ),
    )
