"""Air-node-to-satellite assignment policies.

CNASA works per partition: average device class distributions up to air
nodes, k-means them into homogeneous groups, round-robin one member of every
group into each cluster, then match clusters to satellites by minimum total
model delivery time. GDO keeps every air node on its access satellite; CDO is
CNASA run on a single global partition.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .coverage import CoverageMap
from .errors import ConfigurationError, InputError
from .partition import PartitionSet
from .topology import NetworkTopology

# lexicographic tie canonicalization solves O(n^2) sub-problems; beyond this
# size the solver's optimum is returned as-is
_CANONICAL_MAX_N = 64

DIST_TOL = 1e-9


@dataclass(frozen=True)
class ClassDistribution:
    """Label distribution of one data holder, with its sample count."""

    probs: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if (probs < 0).any():
            raise InputError("class distribution entries must be >= 0")
        if self.sample_count < 0:
            raise InputError("sample_count must be >= 0")
        if self.sample_count > 0 and abs(probs.sum() - 1.0) > DIST_TOL:
            raise InputError(f"class distribution must have unit L1 norm, "
                             f"got {probs.sum()!r}")


@dataclass(frozen=True)
class AssignmentMap:
    """Total map air node -> satellite, with relay hop counts."""

    f: dict[int, int]
    hops: dict[int, int]
    max_access_cell: int = 1   # busiest access cell, for uplink bandwidth sharing
    max_assigned: int = 1      # busiest aggregation satellite
    warnings: tuple[str, ...] = ()

    def relay_hops(self) -> int:
        return max(self.hops.values(), default=0)


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[tuple[int, ...], ...]


def air_class_distribution(device_dists: list[ClassDistribution]) -> ClassDistribution:
    """Sample-size-weighted average of the device distributions."""
    if not device_dists:
        raise InputError("need at least one device distribution")
    total = sum(d.sample_count for d in device_dists)
    if total == 0:
        raise InputError("all device sample counts are zero; "
                         "air class distribution undefined")
    acc = np.zeros_like(device_dists[0].probs, dtype=float)
    for d in device_dists:
        acc += d.sample_count * d.probs
    return ClassDistribution(probs=acc / total, sample_count=total)


def _seed_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """First center drawn from rng, the rest greedy farthest-point."""
    n = points.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    while len(centers) < k:
        nxt = int(np.argmax(d2))   # argmax takes the lowest index on ties
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[centers].copy()


def kmeans(vectors: list[ClassDistribution] | np.ndarray, k: int,
           rng: np.random.Generator, max_iter: int = 100,
           tol: float = 1e-6) -> np.ndarray:
    """Lloyd's iteration on the probability vectors; returns group labels."""
    if isinstance(vectors, np.ndarray):
        points = np.asarray(vectors, dtype=float)
    else:
        points = np.array([v.probs for v in vectors], dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in [1, {n}], got {k}")
    centers = _seed_centers(points, k, rng)
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)   # lowest center index on ties
        # repair empty groups by stealing the point farthest from its center,
        # never re-stealing within one pass
        stolen: set[int] = set()
        for c in range(k):
            if not (labels == c).any():
                own = d2[np.arange(n), labels].copy()
                own[list(stolen)] = -1.0
                steal = int(np.argmax(own))
                stolen.add(steal)
                labels[steal] = c
                centers[c] = points[steal]
        moved = 0.0
        for c in range(k):
            member_mask = labels == c
            if not member_mask.any():
                continue
            new_center = points[member_mask].mean(axis=0)
            moved = max(moved, float(np.linalg.norm(new_center - centers[c])))
            centers[c] = new_center
        if moved < tol:
            break
    return labels


def build_clusters(groups: list[list[int]], n_geo: int,
                   rng: np.random.Generator) -> ClusterSet:
    """Round-robin draw: every cluster takes one member of every group.

    Draws are uniform without replacement. An exhausted group is backfilled
    from the largest remaining one (lowest index on ties). Leftovers are dealt
    one each to the smallest clusters so sizes stay within one of each other.
    """
    pools = [list(g) for g in groups]
    clusters: list[list[int]] = [[] for _ in range(n_geo)]

    def draw(pool: list[int]) -> int:
        return pool.pop(int(rng.integers(len(pool))))

    def largest_pool() -> list[int] | None:
        best = None
        for pool in pools:
            if pool and (best is None or len(pool) > len(best)):
                best = pool
        return best

    for cluster in clusters:
        for pool in pools:
            if pool:
                cluster.append(draw(pool))
            else:
                fallback = largest_pool()
                if fallback is not None:
                    cluster.append(draw(fallback))
    while any(pools):
        target = min(clusters, key=len)
        target.append(draw(largest_pool()))
    return ClusterSet(clusters=tuple(tuple(c) for c in clusters))


def _matching_total(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def min_cost_matching(cost: np.ndarray) -> tuple[int, ...]:
    """Optimal square assignment; lexicographically smallest among ties.

    Solved with scipy's modified Jonker-Volgenant implementation, then
    canonicalized row by row so equal-cost optima resolve deterministically.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InputError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix entries must be finite")
    n = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    if n > _CANONICAL_MAX_N:
        return tuple(int(c) for c in cols[np.argsort(rows)])
    total = float(cost[rows, cols].sum())
    tol = 1e-12 * max(1.0, abs(total))
    perm: list[int] = []
    free = list(range(n))
    remaining = total
    for i in range(n):
        for c in free:
            rest_rows = list(range(i + 1, n))
            rest_cols = [x for x in free if x != c]
            sub = _matching_total(cost[np.ix_(rest_rows, rest_cols)]) if rest_rows else 0.0
            if cost[i, c] + sub <= remaining + tol:
                perm.append(c)
                free.remove(c)
                remaining = sub
                break
    return tuple(perm)


_PERM_CACHE: dict[int, np.ndarray] = {}


def brute_force_matching(cost: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Exhaustive oracle over all n! permutations; usable for n <= 8."""
    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))))
    perms = _PERM_CACHE[n]
    totals = cost[np.arange(n)[None, :], perms].sum(axis=1)
    best = int(np.argmin(totals))
    return float(totals[best]), tuple(int(c) for c in perms[best])


def _assignment_stats(f: dict[int, int], coverage: CoverageMap) -> tuple[int, int]:
    access_counts: dict[int, int] = {}
    for sat in coverage.access.values():
        access_counts[sat] = access_counts.get(sat, 0) + 1
    assigned_counts: dict[int, int] = {}
    for sat in f.values():
        assigned_counts[sat] = assigned_counts.get(sat, 0) + 1
    max_access = max(access_counts.values(), default=1)
    max_assigned = max(assigned_counts.values(), default=1)
    return max_access, max_assigned


def gdo(coverage: CoverageMap) -> AssignmentMap:
    """Geographic-distance-only baseline: every air node keeps its access satellite."""
    f = dict(coverage.access)
    hops = {air: 0 for air in f}
    max_access, max_assigned = _assignment_stats(f, coverage)
    return AssignmentMap(f=f, hops=hops, max_access_cell=max_access,
                         max_assigned=max_assigned)


def cnasa(topology: NetworkTopology, coverage: CoverageMap,
          partition_set: PartitionSet,
          device_dists: list[ClassDistribution], n_geo: int,
          rng: np.random.Generator, timecost_model) -> AssignmentMap:
    """Partition-wise cluster-and-match assignment.

    ``timecost_model`` supplies delivery_time(air_id, target_sat) built on the
    hop matrix; see timecost.DeliveryTimeModel. Each partition draws from its
    own child rng, so per-part work is independent of processing order.
    """
    if len(partition_set.parts) != len(partition_set.air_parts):
        raise ConfigurationError("partition set lacks air parts; "
                                 "run air_nodes_to_parts first")
    if partition_set.n_geo != n_geo:
        raise ConfigurationError(
            f"partition set was built with n_geo={partition_set.n_geo}, "
            f"assignment requested n_geo={n_geo}")
    air_devices: dict[int, list[int]] = {a.id: list(a.device_ids)
                                         for a in topology.air_nodes}
    f: dict[int, int] = {}
    hops: dict[int, int] = {}
    warnings: list[str] = []
    part_rngs = rng.spawn(len(partition_set.parts))
    for part_idx, (sats, airs) in enumerate(
            zip(partition_set.parts, partition_set.air_parts)):
        part_rng = part_rngs[part_idx]
        sats = sorted(sats)
        airs = sorted(airs)
        if not airs:
            warnings.append(f"partition {part_idx} has no air nodes; skipped")
            continue
        air_dists = [
            air_class_distribution([device_dists[d] for d in air_devices[a]])
            for a in airs
        ]
        n_clusters = len(sats)
        k = max(1, len(airs) // n_clusters)
        labels = kmeans(air_dists, k, part_rng)
        groups = [[airs[i] for i in range(len(airs)) if labels[i] == g]
                  for g in range(k)]
        clusters = build_clusters(groups, n_clusters, part_rng).clusters
        cost = np.zeros((n_clusters, n_clusters))
        for ci, cluster in enumerate(clusters):
            for si, sat in enumerate(sats):
                cost[ci, si] = sum(
                    timecost_model.delivery_time(a, sat) for a in cluster)
        perm = min_cost_matching(cost)
        for ci, cluster in enumerate(clusters):
            sat = sats[perm[ci]]
            for a in cluster:
                f[a] = sat
                hops[a] = int(timecost_model.hops[coverage.access[a], sat])
    max_access, max_assigned = _assignment_stats(f, coverage)
    return AssignmentMap(f=f, hops=hops, max_access_cell=max_access,
                         max_assigned=max_assigned, warnings=tuple(warnings))


def cdo(topology: NetworkTopology, coverage: CoverageMap,
        device_dists: list[ClassDistribution], rng: np.random.Generator,
        timecost_model) -> AssignmentMap:
    """Class-distribution-only baseline: CNASA over one global partition."""
    all_sats = tuple(s.id for s in topology.satellites)
    all_airs = tuple(a.id for a in topology.air_nodes)
    pset = PartitionSet(parts=(all_sats,), air_parts=(all_airs,),
                        n_geo=topology.n_satellites)
    return cnasa(topology, coverage, pset, device_dists,
                 topology.n_satellites, rng, timecost_model)
