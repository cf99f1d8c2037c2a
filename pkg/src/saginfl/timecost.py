"""End-to-end delay and per-round time accounting.

Per global round the total cost splits into communication (device uplink, air
uplink with relay forwarding, satellite downlink broadcast), computation
(local training plus two aggregation stages), and inter-satellite
synchronization. Bandwidth is equal-split among simultaneous transmitters:
a satellite's uplink capacity over the air nodes in its access cell, an air
node's over its devices. The broadcast downlink is a single transmitter and
is not split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .assignment import AssignmentMap
from .coverage import CoverageMap
from .errors import ConfigurationError, InputError
from .topology import LinkParams


@dataclass(frozen=True)
class TimeParams:
    links: dict[str, LinkParams]       # keys SG, GA, AS, SS
    flops_model: float                 # FLOPs per sample, forward + backward
    flops_device: float                # FLOPS available on a device
    flops_air: float
    flops_satellite: float
    samples_per_epoch: int
    epochs_per_local_round: int
    model_bits: int
    model_params: int
    tau1: int
    tau2: int
    devices_per_air: int

    def __post_init__(self) -> None:
        for key in ("SG", "GA", "AS", "SS"):
            if key not in self.links:
                raise ConfigurationError(f"missing link parameters for {key}")
        for name in ("flops_model", "flops_device", "flops_air",
                     "flops_satellite"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("samples_per_epoch", "epochs_per_local_round",
                     "model_bits", "model_params", "devices_per_air"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.tau1 < 1 or self.tau2 < 1:
            raise ConfigurationError("tau1 and tau2 must be >= 1")


@dataclass(frozen=True)
class TimeBreakdown:
    t_comm: float
    t_comp: float
    t_sync: float
    t_total: float
    n_ss: int

    @classmethod
    def build(cls, t_comm: float, t_comp: float, t_sync: float,
              n_ss: int) -> "TimeBreakdown":
        return cls(t_comm=t_comm, t_comp=t_comp, t_sync=t_sync,
                   t_total=t_comm + t_comp + t_sync, n_ss=n_ss)


def trans_delay(bits: float, link: LinkParams) -> float:
    """Transmission delay of a payload over one link.

    Rate mode divides by the configured rate; Shannon mode by the capacity
    rain_ratio * bandwidth * log2(1 + power*|fading|^2 / noise).
    """
    if bits <= 0:
        raise InputError(f"payload must be positive, got {bits}")
    if link.rate_bps is not None:
        return bits / link.rate_bps
    snr = link.power_w * link.fading_gain ** 2 / link.noise_power
    capacity = link.rain_ratio * link.bandwidth_hz * math.log2(1.0 + snr)
    if capacity <= 0:
        raise InputError(f"link {link.link_class} has zero capacity")
    return bits / capacity


def end_to_end(bits: float, link: LinkParams) -> float:
    """Transmission plus propagation delay."""
    return trans_delay(bits, link) + link.prop_delay_s


def _shared(link: LinkParams, n_users: int) -> LinkParams:
    """Equal-split of the link's capacity among simultaneous transmitters."""
    if n_users <= 1:
        return link
    if link.rate_bps is not None:
        return replace(link, rate_bps=link.rate_bps / n_users)
    return replace(link, bandwidth_hz=link.bandwidth_hz / n_users)


def relay_hops(assignment: AssignmentMap) -> int:
    """Worst-case model forwarding count over relay satellites."""
    return assignment.relay_hops()


def comm_time(assignment: AssignmentMap, params: TimeParams,
              model_bits: int) -> float:
    """Communication time of one global round.

    tau2 * (T_SG + T_GA + T_AS + N_SS * T_SS) with worst-case per-class
    delays: the device and air uplinks see their bandwidth equal-split among
    the busiest cell's transmitters.
    """
    t_sg = end_to_end(model_bits, params.links["SG"])
    t_ga = end_to_end(model_bits, _shared(params.links["GA"],
                                          params.devices_per_air))
    t_as = end_to_end(model_bits, _shared(params.links["AS"],
                                          assignment.max_access_cell))
    t_ss = end_to_end(model_bits, params.links["SS"])
    n_ss = relay_hops(assignment)
    return params.tau2 * (t_sg + t_ga + t_as + n_ss * t_ss)


def comp_time(params: TimeParams, airs_per_satellite: int) -> float:
    """Computation time of one global round.

    tau2 * (tau1 * T_train + T_agg_air + T_agg_satellite); training cost is
    FLOPs * samples * epochs / device FLOPS, aggregation cost is
    params * received models / aggregator FLOPS.
    """
    t_train = (params.flops_model * params.samples_per_epoch
               * params.epochs_per_local_round) / params.flops_device
    t_agg_air = params.model_params * params.devices_per_air / params.flops_air
    t_agg_sat = params.model_params * airs_per_satellite / params.flops_satellite
    return params.tau2 * (params.tau1 * t_train + t_agg_air + t_agg_sat)


def _ring_sync_time(n: int, params: TimeParams, model_bits: int) -> float:
    if n <= 1:
        return 0.0
    ss = params.links["SS"]
    t_trans = trans_delay(model_bits, ss)
    return 2.0 * (n - 1) * (t_trans / n + ss.prop_delay_s
                            + params.model_params / (n * params.flops_satellite))


def sync_time(n_sats: int, params: TimeParams, model_bits: int) -> float:
    """Ring allreduce synchronization time: 2(N-1)(T_trans/N + T_prop + M/(N*FLOPS))."""
    if n_sats < 1:
        raise InputError(f"n_sats must be >= 1, got {n_sats}")
    return _ring_sync_time(n_sats, params, model_bits)


def sync_time_multi_orbit(orbit_sizes: list[int], params: TimeParams,
                          model_bits: int) -> float:
    """Three sequential phases; intra-orbit phases run in parallel across orbits."""
    if not orbit_sizes or any(n < 1 for n in orbit_sizes):
        raise InputError(f"invalid orbit sizes {orbit_sizes}")
    if len(orbit_sizes) == 1:
        return _ring_sync_time(orbit_sizes[0], params, model_bits)
    intra = max(_ring_sync_time(n, params, model_bits) for n in orbit_sizes)
    inter = _ring_sync_time(len(orbit_sizes), params, model_bits)
    return intra + inter + intra


def gossip_sync_time(n_sats: int, params: TimeParams, model_bits: int) -> float:
    """Analytic gossip cost: N*log2(N) full-model deliveries per satellite."""
    if n_sats < 2:
        raise InputError(f"gossip needs n_sats >= 2, got {n_sats}")
    ss = params.links["SS"]
    cycles = n_sats * math.log2(n_sats)
    per_cycle = (trans_delay(model_bits, ss) + ss.prop_delay_s
                 + params.model_params / params.flops_satellite)
    return cycles * per_cycle


def total_time(breakdowns: list[TimeBreakdown]) -> float:
    return sum(b.t_total for b in breakdowns)


@dataclass(frozen=True)
class DeliveryTimeModel:
    """Model delivery time from an air node to a target satellite.

    One model upload over the air-satellite link plus one inter-satellite
    forward per hop separating the access satellite from the target.
    """

    hops: np.ndarray
    access: dict[int, int]
    t_as_s: float
    t_ss_s: float

    def delivery_time(self, air_id: int, target_sat: int) -> float:
        src = self.access[air_id]
        return self.t_as_s + int(self.hops[src, target_sat]) * self.t_ss_s


def make_delivery_model(hops: np.ndarray, coverage: CoverageMap,
                        params: TimeParams, model_bits: int) -> DeliveryTimeModel:
    return DeliveryTimeModel(
        hops=hops,
        access=dict(coverage.access),
        t_as_s=end_to_end(model_bits, params.links["AS"]),
        t_ss_s=end_to_end(model_bits, params.links["SS"]),
    )
