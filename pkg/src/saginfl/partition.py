"""Communication-bounded satellite partitions and the air nodes they own.

Single-orbit constellations are cut into contiguous arcs of n_geo slots.
Multi-orbit ISL graphs are partitioned greedily: each iteration recomputes
all-pairs hop distances on the residual graph, seeds a sub-graph from a
randomly picked satellite, and grows it breadth-first. A candidate joins only
if its distance to every current member stays below n_geo both on the
residual graph and within the induced sub-graph, so every emitted part
certifies induced-sub-graph diameter < n_geo.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .coverage import CoverageMap, compute_coverage
from .errors import ConfigurationError
from .topology import IslGraph, NetworkTopology, _hop_matrix


@dataclass(frozen=True)
class PartitionSet:
    parts: tuple[tuple[int, ...], ...]        # satellite ids per part
    air_parts: tuple[tuple[int, ...], ...]    # air node ids, parallel to parts
    n_geo: int

    def part_of(self) -> dict[int, int]:
        out = {}
        for idx, part in enumerate(self.parts):
            for sat in part:
                out[sat] = idx
        return out


def arc_partition(topology: NetworkTopology, n_geo: int,
                  coverage: CoverageMap | None = None) -> PartitionSet:
    """Cut a single orbit into ceil(N_S/n_geo) arcs of consecutive slots.

    Arcs start at slot 0; the last arc is short when N_S mod n_geo != 0. Air
    nodes follow their access satellite into its arc.
    """
    if topology.n_planes != 1:
        raise ConfigurationError("arc_partition requires a single-orbit topology")
    n_sats = topology.n_satellites
    if not 1 <= n_geo <= n_sats:
        raise ConfigurationError(
            f"n_geo must be in [1, {n_sats}], got {n_geo}")
    order = sorted(topology.satellites, key=lambda s: s.slot_index)
    ids = [s.id for s in order]
    parts = tuple(
        tuple(ids[i:i + n_geo]) for i in range(0, n_sats, n_geo)
    )
    if coverage is None:
        coverage = compute_coverage(topology)
    air_parts = air_nodes_to_parts(coverage, parts)
    return PartitionSet(parts=parts, air_parts=air_parts, n_geo=n_geo)


def _induced_distance_ok(candidate: int, members: set[int],
                         adj: np.ndarray, n_geo: int) -> bool:
    """BFS from candidate inside members|{candidate}; all members < n_geo away."""
    allowed = members | {candidate}
    dist = {candidate: 0}
    queue = deque([candidate])
    while queue:
        u = queue.popleft()
        if dist[u] + 1 >= n_geo:
            continue
        for v in np.flatnonzero(adj[u]):
            v = int(v)
            if v in allowed and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return all(m in dist for m in members)


def graph_partition(graph: IslGraph, n_geo: int,
                    rng: np.random.Generator) -> PartitionSet:
    """Greedy diameter-bounded partition of the ISL graph.

    Deterministic for a fixed rng seed. Air parts are left empty; attach them
    with air_nodes_to_parts once a coverage map exists.
    """
    if n_geo < 1:
        raise ConfigurationError(f"n_geo must be >= 1, got {n_geo}")
    n = len(graph.nodes)
    full_adj = graph.adjacency()
    alive = np.ones(n, dtype=bool)
    parts: list[tuple[int, ...]] = []
    while alive.any():
        # residual graph for this iteration
        adj = full_adj & alive[:, None] & alive[None, :]
        dist = _hop_matrix(adj)
        dist[:, ~alive] = -1
        candidates = np.flatnonzero(alive)
        seed = int(candidates[rng.integers(len(candidates))])
        members: list[int] = [seed]
        member_set = {seed}
        i = 0
        while i < len(members):
            u = members[i]
            for v in np.flatnonzero(adj[u]):
                v = int(v)
                if v in member_set:
                    continue
                res = dist[v, members]
                if np.any(res < 0) or np.any(res >= n_geo):
                    continue
                if not _induced_distance_ok(v, member_set, adj, n_geo):
                    continue
                members.append(v)
                member_set.add(v)
            i += 1
        parts.append(tuple(sorted(member_set)))
        alive[list(member_set)] = False
    return PartitionSet(parts=tuple(parts), air_parts=(), n_geo=n_geo)


def air_nodes_to_parts(coverage: CoverageMap,
                       parts: tuple[tuple[int, ...], ...],
                       ) -> tuple[tuple[int, ...], ...]:
    """Each air node joins the part holding its access satellite."""
    part_of: dict[int, int] = {}
    for idx, part in enumerate(parts):
        for sat in part:
            part_of[sat] = idx
    air_parts: list[list[int]] = [[] for _ in parts]
    for air_id in sorted(coverage.access):
        air_parts[part_of[coverage.access[air_id]]].append(air_id)
    return tuple(tuple(ap) for ap in air_parts)


def with_air_parts(pset: PartitionSet, coverage: CoverageMap) -> PartitionSet:
    return replace(pset, air_parts=air_nodes_to_parts(coverage, pset.parts))


def induced_diameter(part: tuple[int, ...], graph: IslGraph) -> int:
    """Hop diameter of the sub-graph induced by ``part`` (-1 if disconnected)."""
    idx = {sat: i for i, sat in enumerate(part)}
    k = len(part)
    adj = np.zeros((k, k), dtype=bool)
    for a, b in graph.edges:
        if a in idx and b in idx:
            adj[idx[a], idx[b]] = True
            adj[idx[b], idx[a]] = True
    dist = _hop_matrix(adj)
    if (dist < 0).any():
        return -1
    return int(dist.max())
