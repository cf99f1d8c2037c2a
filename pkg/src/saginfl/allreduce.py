"""Inter-satellite model synchronization by chunked Ring Allreduce.

The collective is simulated as a deterministic step-synchronous loop: in each
step every participant sends one chunk to its ring successor, and all sends
of a step land simultaneously. Scatter-reduce accumulates, allgather
overwrites. The multi-orbit variant runs three phases: intra-orbit reduce,
inter-orbit reduce over one representative per orbit, and intra-orbit
distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TopologyError
from .topology import IslGraph

WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class ModelVector:
    """Flat parameter vector plus its share of the global data."""

    params: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.params)):
            raise InputError("model parameters must be finite")
        if self.weight < 0:
            raise InputError(f"model weight must be >= 0, got {self.weight}")


@dataclass
class CommLog:
    """Exact communication accounting for one synchronization."""

    chunks_sent: dict[int, int] = field(default_factory=dict)
    chunks_received: dict[int, int] = field(default_factory=dict)
    params_sent: dict[int, int] = field(default_factory=dict)
    params_received: dict[int, int] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)
    transfers: list[tuple[str, int, int, int, int]] = field(default_factory=list)
    record_transfers: bool = True

    def note(self, phase: str, step: int, src: int, dst: int, n_params: int) -> None:
        self.chunks_sent[src] = self.chunks_sent.get(src, 0) + 1
        self.chunks_received[dst] = self.chunks_received.get(dst, 0) + 1
        self.params_sent[src] = self.params_sent.get(src, 0) + n_params
        self.params_received[dst] = self.params_received.get(dst, 0) + n_params
        if self.record_transfers:
            self.transfers.append((phase, step, src, dst, n_params))

    def note_ring_step(self, phase: str, step: int, ids: list[int],
                       chunk_params: int) -> None:
        """One synchronous ring step: every participant sends one chunk."""
        n = len(ids)
        for k in range(n):
            self.note(phase, step, ids[k], ids[(k + 1) % n], chunk_params)
        self.bump_phase(phase)

    def bump_phase(self, phase: str) -> None:
        self.steps[phase] = self.steps.get(phase, 0) + 1

    def total_sent(self) -> int:
        return sum(self.params_sent.values())

    def total_received(self) -> int:
        return sum(self.params_received.values())


def chunk_model(params: np.ndarray, n: int) -> list[np.ndarray]:
    """Split into n chunks of ceil(M/n) entries, zero-padding the last."""
    if n < 1:
        raise InputError(f"chunk count must be >= 1, got {n}")
    params = np.asarray(params, dtype=float)
    m = params.shape[0]
    size = max(1, math.ceil(m / n))
    padded = np.zeros(size * n, dtype=float)
    padded[:m] = params
    return [padded[i * size:(i + 1) * size].copy() for i in range(n)]


def stitch_chunks(chunks: list[np.ndarray], m: int) -> np.ndarray:
    """Inverse of chunk_model: concatenate and drop padding."""
    return np.concatenate(chunks)[:m]


def _ring_reduce_sum(vectors: list[np.ndarray], ids: list[int], log: CommLog,
                     phase_prefix: str = "") -> list[np.ndarray]:
    """Chunked ring allreduce computing the element-wise sum of ``vectors``.

    Returns one array per participant; all entries are bit-identical. The
    caller is responsible for any weighting (fold it into the inputs). All
    sends of a step land simultaneously: payloads are snapshotted before any
    receive is applied.
    """
    n = len(vectors)
    m = vectors[0].shape[0]
    if n == 1:
        return [vectors[0].copy()]
    size = max(1, math.ceil(m / n))
    chunks = np.zeros((n, n, size))
    for k, v in enumerate(vectors):
        chunks[k].reshape(-1)[:m] = v

    ks = np.arange(n)
    dst = (ks + 1) % n
    scatter = f"{phase_prefix}scatter"
    gather = f"{phase_prefix}gather"
    for step in range(n - 1):
        idx = (ks - step) % n
        payload = chunks[ks, idx, :].copy()
        chunks[dst, idx, :] += payload
        log.note_ring_step(scatter, step, ids, size)
    for step in range(n - 1):
        idx = (ks + 1 - step) % n
        payload = chunks[ks, idx, :].copy()
        chunks[dst, idx, :] = payload
        log.note_ring_step(gather, step, ids, size)
    return [chunks[k].reshape(-1)[:m].copy() for k in range(n)]


def _check_models(models: list[ModelVector]) -> int:
    if not models:
        raise InputError("need at least one participant")
    m = models[0].params.shape[0]
    for mv in models:
        if mv.params.shape != (m,):
            raise InputError(
                f"model length mismatch: {mv.params.shape} vs ({m},)")
    total = sum(mv.weight for mv in models)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise InputError(f"participant weights must sum to 1, got {total!r}")
    return m


def ring_allreduce_states(models: list[ModelVector], ids: list[int] | None = None,
                          record_transfers: bool = True,
                          ) -> tuple[list[np.ndarray], CommLog]:
    """Run the collective and return every participant's final vector."""
    m = _check_models(models)
    n = len(models)
    ids = list(range(n)) if ids is None else list(ids)
    log = CommLog(record_transfers=record_transfers)
    if n == 1:
        return [models[0].params * models[0].weight], log
    scaled = [mv.params * mv.weight for mv in models]
    states = _ring_reduce_sum(scaled, ids, log)
    return states, log


def ring_allreduce(models: list[ModelVector], ids: list[int] | None = None,
                   record_transfers: bool = True) -> tuple[ModelVector, CommLog]:
    """Weighted-average synchronization over one ring.

    Each participant's vector is pre-scaled by its weight, so the chunked
    sum-reduce yields the weighted average in a single pass. All participants
    finish with bit-identical copies; the returned model carries weight 1.
    """
    states, log = ring_allreduce_states(models, ids, record_transfers)
    return ModelVector(params=states[0], weight=1.0), log


def _orbit_representatives(graph: IslGraph) -> list[int]:
    incident: set[int] = set()
    for (a, b), kind in zip(graph.edges, graph.kinds):
        if kind == "inter":
            incident.add(a)
            incident.add(b)
    reps = []
    for orbit in graph.orbits:
        members = [s for s in orbit if s in incident]
        if not members:
            raise TopologyError(
                f"orbit {list(orbit)} has no inter-orbit edge; cannot synchronize")
        reps.append(min(members))
    return reps


def multi_orbit_sync_states(orbit_models: list[list[ModelVector]], graph: IslGraph,
                            record_transfers: bool = True,
                            ) -> tuple[dict[int, np.ndarray], CommLog]:
    """Three-phase synchronization; returns each satellite's final vector.

    Phase 1 reduces within every orbit (weights pre-scaled globally), phase 2
    rings over one representative per orbit (the lowest-id satellite on an
    inter-orbit edge, ordered by orbit index), and phase 3 redistributes
    within each orbit as a ring allreduce in which non-representatives
    contribute zero vectors, i.e. they only ever replace received chunks.
    """
    if len(orbit_models) != len(graph.orbits):
        raise InputError("one model list per orbit is required")
    flat = [mv for orbit in orbit_models for mv in orbit]
    m = _check_models(flat)
    for j, orbit in enumerate(orbit_models):
        if not orbit:
            raise InputError(f"orbit {j} has no participants")
        if len(orbit) != len(graph.orbits[j]):
            raise InputError(f"orbit {j}: {len(orbit)} models for "
                             f"{len(graph.orbits[j])} satellites")

    log = CommLog(record_transfers=record_transfers)
    if len(orbit_models) == 1:
        ids = list(graph.orbits[0])
        scaled = [mv.params * mv.weight for mv in orbit_models[0]]
        if len(scaled) == 1:
            return {ids[0]: scaled[0]}, log
        states = _ring_reduce_sum(scaled, ids, log)
        return dict(zip(ids, states)), log

    # phase 1: per-orbit partial sums of globally weighted vectors
    orbit_sums: list[np.ndarray] = []
    for j, orbit in enumerate(orbit_models):
        ids = list(graph.orbits[j])
        scaled = [mv.params * mv.weight for mv in orbit]
        states = _ring_reduce_sum(scaled, ids, log, phase_prefix="phase1-") \
            if len(scaled) > 1 else [scaled[0].copy()]
        orbit_sums.append(states[0])

    # phase 2: ring over representatives, one per orbit
    reps = _orbit_representatives(graph)
    rep_states = _ring_reduce_sum(orbit_sums, reps, log, phase_prefix="phase2-") \
        if len(reps) > 1 else [orbit_sums[0]]
    global_vec = rep_states[0]

    # phase 3: intra-orbit distribution; non-representatives hold zeros so the
    # reduce degenerates to chunk replacement
    result: dict[int, np.ndarray] = {}
    for j, orbit in enumerate(graph.orbits):
        ids = list(orbit)
        if len(ids) == 1:
            result[ids[0]] = global_vec.copy()
            continue
        rep = reps[j]
        vectors = [global_vec.copy() if s == rep else np.zeros_like(global_vec)
                   for s in ids]
        states = _ring_reduce_sum(vectors, ids, log, phase_prefix="phase3-")
        for s, vec in zip(ids, states):
            result[s] = vec
    return result, log


def multi_orbit_sync(orbit_models: list[list[ModelVector]], graph: IslGraph,
                     record_transfers: bool = True) -> tuple[ModelVector, CommLog]:
    """Weighted-average synchronization across a multi-orbit constellation."""
    states, log = multi_orbit_sync_states(orbit_models, graph, record_transfers)
    first = states[min(states)]
    return ModelVector(params=first, weight=1.0), log


def traffic_per_node(log: CommLog, m: int, n: int) -> int:
    """Measured parameters sent per satellite; uniform across the ring."""
    if n == 1 or not log.params_sent:
        return 0
    values = set(log.params_sent.values())
    if len(values) != 1:
        raise InputError(f"non-uniform per-node traffic: {sorted(values)}")
    return values.pop()


def ring_traffic_per_node(n: int, m: int) -> int:
    """Closed-form chunked ring traffic per node: 2(n-1)*ceil(m/n)."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if n == 1:
        return 0
    return 2 * (n - 1) * math.ceil(m / n)


def ring_traffic_analytic(n: int, m: float) -> float:
    """Idealized (unpadded) ring traffic per node: 2(n-1)*m/n."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if n == 1:
        return 0.0
    return 2.0 * (n - 1) * m / n


def gossip_traffic(n: int, m: float) -> float:
    """Per-node gossip traffic n*log2(n)*m; the protocol is costed, not simulated."""
    if n < 2:
        raise InputError(f"gossip needs n >= 2, got {n}")
    return n * math.log2(n) * m
