"""Cluster-consensus reward over sentence embeddings.

Two thresholded cosine terms are mixed convexly:

* pairwise term: rescaled cosine between a candidate and the clean
  reference, clamped at a floor ``tau``;
* consensus term: rescaled cosine between a candidate and the centroid
  of the largest dense cluster among its sibling candidates, clamped at
  ``beta``.  Clusters come from DBSCAN over the distance 1 - cosine.

Both terms live in [0, 1], so the mixed reward does too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedder import NgramEncoder, cosine


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    tau: float = 0.70
    beta: float = 0.75
    dbscan_radius: float = 0.10
    min_pts: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")
        if self.dbscan_radius <= 0.0:
            raise ValueError("dbscan_radius must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    centroid: np.ndarray


@dataclass(frozen=True)
class RewardBreakdown:
    r_pair: float
    r_cons: float
    reward: float


def _clamped_rescale(cos_val: float, floor: float) -> float:
    return max(0.0, (cos_val - floor) / (1.0 - floor))


def _centroid(vectors: Sequence[np.ndarray], members: Sequence[int]) -> np.ndarray:
    mean = np.mean([vectors[i] for i in members], axis=0)
    norm = np.linalg.norm(mean)
    if norm > 0.0:
        mean = mean / norm
    return mean


def dbscan(
    vectors: Sequence[np.ndarray], radius: float, min_pts: int
) -> list[Cluster]:
    """DBSCAN over d(u, v) = 1 - cosine(u, v), returning a full partition.

    A core point has at least ``min_pts`` neighbors within ``radius``
    (itself included).  Clusters are the connected components of core
    points; a non-core point with a core neighbor joins the cluster of
    its lowest-indexed core neighbor; remaining noise points become
    singleton clusters so the output always partitions the indices.

    Note zero vectors sit at distance 1 from everything, themselves
    included, so degenerate embeddings isolate as singletons.
    """
    if len(vectors) == 0:
        raise ValueError("dbscan requires at least one vector")
    n = len(vectors)
    dims = {np.asarray(v).shape for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"mixed vector shapes: {sorted(dims)}")

    matrix = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    norms = np.linalg.norm(matrix, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    # Zero vectors get cosine 0 to everything (their dot products vanish),
    # hence distance 1 even to other zero vectors.
    sims = (matrix @ matrix.T) / np.outer(safe, safe)
    within = (1.0 - sims) <= radius
    neighbors = [np.flatnonzero(within[i]).tolist() for i in range(n)]
    core = [len(neighbors[i]) >= min_pts for i in range(n)]

    labels = [-1] * n
    next_label = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = next_label
        frontier = [i]
        while frontier:
            p = frontier.pop()
            for q in neighbors[p]:
                if core[q] and labels[q] == -1:
                    labels[q] = next_label
                    frontier.append(q)
        next_label += 1

    for i in range(n):
        if labels[i] != -1 or core[i]:
            continue
        core_neighbors = [j for j in neighbors[i] if core[j]]
        if core_neighbors:
            labels[i] = labels[min(core_neighbors)]

    clusters: dict[int, list[int]] = {}
    for i in range(n):
        if labels[i] == -1:
            labels[i] = next_label
            next_label += 1
        clusters.setdefault(labels[i], []).append(i)

    return [
        Cluster(members=tuple(sorted(members)), centroid=_centroid(vectors, members))
        for members in clusters.values()
    ]


def _mean_pairwise_cosine(vectors: Sequence[np.ndarray], members: Sequence[int]) -> float:
    # Singletons count as perfectly self-consistent.
    if len(members) < 2:
        return 1.0
    total = 0.0
    count = 0
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            total += cosine(vectors[members[a]], vectors[members[b]])
            count += 1
    return total / count


def largest_cluster(
    clusters: Sequence[Cluster], vectors: Sequence[np.ndarray]
) -> Cluster:
    """Cluster with most members; ties break toward the tightest consensus.

    Equal sizes are ordered by higher mean intra-cluster cosine, then by
    lower smallest member index, making the choice deterministic.
    """
    if not clusters:
        raise ValueError("no clusters given")
    best_size = max(len(c.members) for c in clusters)
    tied = [c for c in clusters if len(c.members) == best_size]
    if len(tied) == 1:
        return tied[0]
    return max(
        tied,
        key=lambda c: (_mean_pairwise_cosine(vectors, c.members), -min(c.members)),
    )


def consensus_centroid(
    vectors: Sequence[np.ndarray], cfg: RewardConfig
) -> np.ndarray:
    clusters = dbscan(vectors, cfg.dbscan_radius, cfg.min_pts)
    return largest_cluster(clusters, vectors).centroid


def rewards_from_vectors(
    cand_vectors: Sequence[np.ndarray], ref_vector: np.ndarray, cfg: RewardConfig
) -> list[RewardBreakdown]:
    """Score every candidate embedding against the reference embedding."""
    centroid = consensus_centroid(cand_vectors, cfg)
    out = []
    for v in cand_vectors:
        r_pair = _clamped_rescale(cosine(v, ref_vector), cfg.tau)
        r_cons = _clamped_rescale(cosine(v, centroid), cfg.beta)
        out.append(
            RewardBreakdown(
                r_pair=r_pair,
                r_cons=r_cons,
                reward=cfg.alpha * r_pair + (1.0 - cfg.alpha) * r_cons,
            )
        )
    return out


def pairwise_reward(
    cand: str, ref: str, cfg: RewardConfig, encoder: NgramEncoder
) -> float:
    return _clamped_rescale(cosine(encoder.encode(cand), encoder.encode(ref)), cfg.tau)


def consensus_reward(
    k: int, candidates: Sequence[str], cfg: RewardConfig, encoder: NgramEncoder
) -> float:
    if not 0 <= k < len(candidates):
        raise ValueError(f"candidate index {k} out of range")
    vectors = [encoder.encode(c) for c in candidates]
    centroid = consensus_centroid(vectors, cfg)
    return _clamped_rescale(cosine(vectors[k], centroid), cfg.beta)


def final_reward(
    k: int,
    candidates: Sequence[str],
    ref: str,
    cfg: RewardConfig,
    encoder: NgramEncoder,
) -> float:
    return score_candidates(candidates, ref, cfg, encoder)[k].reward


def score_candidates(
    candidates: Sequence[str], ref: str, cfg: RewardConfig, encoder: NgramEncoder
) -> list[RewardBreakdown]:
    """Itemized pairwise/consensus/final rewards for a sibling group."""
    if not candidates:
        raise ValueError("need at least one candidate")
    vectors = [encoder.encode(c) for c in candidates]
    return rewards_from_vectors(vectors, encoder.encode(ref), cfg)
