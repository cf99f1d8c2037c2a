"""Constellation topologies: satellites, air nodes, ground devices, and the ISL graph.

Geometry is a static snapshot on a spherical Earth. Satellites sit on circular
orbits; air nodes hover at fixed geographic positions; every ground device is
owned by exactly one air node. The inter-satellite link (ISL) graph has one
cycle of intra-orbit edges per plane plus inter-orbit edges placed at the two
intersection regions of every plane pair.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, TopologyError

EARTH_RADIUS_KM = 6371.0
# standard gravitational parameter of Earth, km^3/s^2
EARTH_MU_KM3_S2 = 398600.4418

AIR_ALTITUDE_M = 100.0

LINK_CLASSES = ("SG", "GA", "AS", "SS")


@dataclass(frozen=True)
class LinkParams:
    """Delay model for one link class.

    Rate mode uses ``rate_bps`` directly. Shannon mode derives the rate from
    bandwidth, transmit power, fading gain, noise power, and the rain
    attenuation ratio (1.0 = no rain).
    """

    link_class: str
    rate_bps: float | None = None
    prop_delay_s: float = 0.0
    bandwidth_hz: float | None = None
    power_w: float | None = None
    fading_gain: float | None = None
    noise_power: float | None = None
    rain_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.link_class not in LINK_CLASSES:
            raise ConfigurationError(f"unknown link class {self.link_class!r}")
        if self.rate_bps is None and self.bandwidth_hz is None:
            raise ConfigurationError(
                f"link {self.link_class}: need rate_bps or shannon parameters")
        if self.rate_bps is not None and self.rate_bps <= 0:
            raise ConfigurationError(f"link {self.link_class}: rate_bps must be > 0")
        if self.prop_delay_s < 0:
            raise ConfigurationError(f"link {self.link_class}: prop_delay_s must be >= 0")
        if not 0.0 < self.rain_ratio <= 1.0:
            raise ConfigurationError(f"link {self.link_class}: rain_ratio must be in (0, 1]")


@dataclass(frozen=True)
class SatelliteSpec:
    id: int
    orbit_index: int
    slot_index: int
    altitude_km: float
    phase_deg: float          # angular position along the orbit plane
    inclination_deg: float
    raan_deg: float = 0.0     # right ascension of the plane's ascending node


@dataclass(frozen=True)
class AirNodeSpec:
    id: int
    latitude_deg: float
    longitude_deg: float
    altitude_m: float
    device_ids: tuple[int, ...]


@dataclass(frozen=True)
class IslGraph:
    """Inter-satellite link graph with edge kinds and per-orbit membership."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]            # sorted id pairs, deduplicated
    kinds: tuple[str, ...]                        # 'intra' | 'inter', parallel to edges
    orbits: tuple[tuple[int, ...], ...]           # satellite ids per plane, ring order

    def adjacency(self) -> np.ndarray:
        """Boolean adjacency matrix indexed by satellite id."""
        n = len(self.nodes)
        adj = np.zeros((n, n), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = True
            adj[b, a] = True
        return adj

    def neighbors(self, node: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)


@dataclass(frozen=True)
class NetworkTopology:
    kind: str                                     # 'single' | 'walker'
    satellites: tuple[SatelliteSpec, ...]
    air_nodes: tuple[AirNodeSpec, ...]
    links: dict[str, LinkParams] = field(default_factory=dict)
    n_planes: int = 1
    sats_per_plane: int = 0

    @property
    def n_satellites(self) -> int:
        return len(self.satellites)

    @property
    def n_air_nodes(self) -> int:
        return len(self.air_nodes)

    @property
    def n_devices(self) -> int:
        return sum(len(a.device_ids) for a in self.air_nodes)

    def air_of_device(self) -> dict[int, int]:
        owner: dict[int, int] = {}
        for air in self.air_nodes:
            for dev in air.device_ids:
                if dev in owner:
                    raise TopologyError(f"device {dev} owned by two air nodes")
                owner[dev] = air.id
        return owner


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _latlon_to_unit(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    return np.array([
        math.cos(lat) * math.cos(lon),
        math.cos(lat) * math.sin(lon),
        math.sin(lat),
    ])


def great_circle_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Central angle (radians) between two unit vectors; robust near 0 and pi."""
    return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))


def orbital_period_s(altitude_km: float) -> float:
    a = EARTH_RADIUS_KM + altitude_km
    return 2.0 * math.pi * math.sqrt(a ** 3 / EARTH_MU_KM3_S2)


def _plane_normal(raan_deg: float, inclination_deg: float) -> np.ndarray:
    raan = math.radians(raan_deg)
    inc = math.radians(inclination_deg)
    return np.array([
        math.sin(raan) * math.sin(inc),
        -math.cos(raan) * math.sin(inc),
        math.cos(inc),
    ])


def satellite_unit_position(sat: SatelliteSpec, epoch_s: float = 0.0) -> np.ndarray:
    """Unit position vector of a satellite at the snapshot epoch."""
    period = orbital_period_s(sat.altitude_km)
    u = math.radians(sat.phase_deg + 360.0 * (epoch_s / period))
    raan = math.radians(sat.raan_deg)
    inc = math.radians(sat.inclination_deg)
    x = math.cos(raan) * math.cos(u) - math.sin(raan) * math.sin(u) * math.cos(inc)
    y = math.sin(raan) * math.cos(u) + math.cos(raan) * math.sin(u) * math.cos(inc)
    z = math.sin(u) * math.sin(inc)
    return np.array([x, y, z])


def satellite_unit_positions(topology: NetworkTopology, epoch_s: float = 0.0) -> np.ndarray:
    return np.array([satellite_unit_position(s, epoch_s) for s in topology.satellites])


def air_unit_positions(topology: NetworkTopology) -> np.ndarray:
    return np.array([
        _latlon_to_unit(a.latitude_deg, a.longitude_deg) for a in topology.air_nodes
    ])


def _make_air_nodes(positions: list[tuple[float, float]], altitude_m: float,
                    devices_per_air: int) -> tuple[AirNodeSpec, ...]:
    airs = []
    next_dev = 0
    for i, (lat, lon) in enumerate(positions):
        ids = tuple(range(next_dev, next_dev + devices_per_air))
        next_dev += devices_per_air
        airs.append(AirNodeSpec(
            id=i, latitude_deg=lat, longitude_deg=lon,
            altitude_m=altitude_m, device_ids=ids,
        ))
    return tuple(airs)


def build_single_orbit(n_sats: int, altitude_km: float, n_air: int,
                       devices_per_air: int,
                       link_params: dict[str, LinkParams] | None = None,
                       air_altitude_m: float = AIR_ALTITUDE_M) -> NetworkTopology:
    """Equatorial ring of satellites with evenly spaced air nodes below.

    Satellites occupy phases k*360/n_sats on the equatorial orbit; air nodes
    sit on the equator at longitudes k*360/n_air. IDs are dense from 0.
    """
    if n_sats < 1:
        raise ConfigurationError(f"n_sats must be >= 1, got {n_sats}")
    if n_air < 1:
        raise ConfigurationError(f"n_air must be >= 1, got {n_air}")
    if devices_per_air < 1:
        raise ConfigurationError(f"devices_per_air must be >= 1, got {devices_per_air}")
    if altitude_km <= 0:
        raise ConfigurationError(f"altitude_km must be > 0, got {altitude_km}")

    sats = tuple(
        SatelliteSpec(id=k, orbit_index=0, slot_index=k, altitude_km=altitude_km,
                      phase_deg=k * 360.0 / n_sats, inclination_deg=0.0, raan_deg=0.0)
        for k in range(n_sats)
    )
    air_pos = [(0.0, k * 360.0 / n_air) for k in range(n_air)]
    airs = _make_air_nodes(air_pos, air_altitude_m, devices_per_air)
    return NetworkTopology(kind="single", satellites=sats, air_nodes=airs,
                           links=dict(link_params or {}),
                           n_planes=1, sats_per_plane=n_sats)


def build_walker(n_planes: int, sats_per_plane: int, inclination_deg: float,
                 altitude_km: float, air_per_cell: int, devices_per_air: int,
                 link_params: dict[str, LinkParams] | None = None,
                 air_altitude_m: float = AIR_ALTITUDE_M) -> NetworkTopology:
    """Walker constellation with air nodes at the snapshot sub-satellite points.

    Planes are spread evenly in right ascension over 360 degrees with zero
    inter-plane phasing. Each logical satellite cell receives ``air_per_cell``
    air nodes, offset slightly in longitude so positions stay distinct.
    """
    if n_planes < 2:
        raise ConfigurationError(f"n_planes must be >= 2, got {n_planes}")
    if sats_per_plane < 3:
        raise ConfigurationError(f"sats_per_plane must be >= 3, got {sats_per_plane}")
    if not 0.0 < inclination_deg < 180.0:
        raise ConfigurationError(
            f"inclination_deg must be in (0, 180), got {inclination_deg}")
    if air_per_cell < 1:
        raise ConfigurationError(f"air_per_cell must be >= 1, got {air_per_cell}")
    if devices_per_air < 1:
        raise ConfigurationError(f"devices_per_air must be >= 1, got {devices_per_air}")
    if altitude_km <= 0:
        raise ConfigurationError(f"altitude_km must be > 0, got {altitude_km}")

    sats = []
    for p in range(n_planes):
        raan = p * 360.0 / n_planes
        for s in range(sats_per_plane):
            sats.append(SatelliteSpec(
                id=p * sats_per_plane + s, orbit_index=p, slot_index=s,
                altitude_km=altitude_km, phase_deg=s * 360.0 / sats_per_plane,
                inclination_deg=inclination_deg, raan_deg=raan,
            ))

    air_pos = []
    for sat in sats:
        u = satellite_unit_position(sat)
        lat = math.degrees(math.asin(np.clip(u[2], -1.0, 1.0)))
        lon = math.degrees(math.atan2(u[1], u[0]))
        for a in range(air_per_cell):
            # spread cell members over a small longitude band around the
            # sub-satellite point so air positions are distinct
            offset = (a - (air_per_cell - 1) / 2.0) * 0.5
            air_pos.append((lat, (lon + offset) % 360.0))
    airs = _make_air_nodes(air_pos, air_altitude_m, devices_per_air)
    return NetworkTopology(kind="walker", satellites=tuple(sats), air_nodes=airs,
                           links=dict(link_params or {}),
                           n_planes=n_planes, sats_per_plane=sats_per_plane)


def _intra_orbit_edges(topology: NetworkTopology) -> list[tuple[int, int]]:
    edges = []
    for p in range(topology.n_planes):
        ring = [s.id for s in topology.satellites if s.orbit_index == p]
        ring.sort(key=lambda i: topology.satellites[i].slot_index)
        n = len(ring)
        if n < 2:
            continue
        if n == 2:
            edges.append(tuple(sorted((ring[0], ring[1]))))
            continue
        for k in range(n):
            a, b = ring[k], ring[(k + 1) % n]
            edges.append(tuple(sorted((a, b))))
    return edges


def _nearest_sat(ids: list[int], positions: np.ndarray, point: np.ndarray) -> int:
    best = ids[0]
    best_ang = great_circle_angle(positions[best], point)
    for i in ids[1:]:
        ang = great_circle_angle(positions[i], point)
        if ang < best_ang - 1e-12 or (abs(ang - best_ang) <= 1e-12 and i < best):
            best, best_ang = i, ang
    return best


def _inter_orbit_edges(topology: NetworkTopology,
                       positions: np.ndarray) -> list[tuple[int, int]]:
    by_plane: dict[int, list[int]] = {}
    for s in topology.satellites:
        by_plane.setdefault(s.orbit_index, []).append(s.id)
    planes = sorted(by_plane)
    edges: set[tuple[int, int]] = set()
    for pi in range(len(planes)):
        for pj in range(pi + 1, len(planes)):
            ids_i = by_plane[planes[pi]]
            ids_j = by_plane[planes[pj]]
            rep_i = topology.satellites[ids_i[0]]
            rep_j = topology.satellites[ids_j[0]]
            n_i = _plane_normal(rep_i.raan_deg, rep_i.inclination_deg)
            n_j = _plane_normal(rep_j.raan_deg, rep_j.inclination_deg)
            cross = np.cross(n_i, n_j)
            norm = float(np.linalg.norm(cross))
            if norm > 1e-9:
                regions = [_unit(cross), -_unit(cross)]
            else:
                # coincident planes: anchor the two regions on the globally
                # closest cross-plane pair and its antipode
                best = None
                for a in ids_i:
                    for b in ids_j:
                        ang = great_circle_angle(positions[a], positions[b])
                        key = (ang, a, b)
                        if best is None or key < best:
                            best = key
                mid = _unit(positions[best[1]] + positions[best[2]])
                regions = [mid, -mid]
            for region in regions:
                a = _nearest_sat(ids_i, positions, region)
                b = _nearest_sat(ids_j, positions, region)
                edges.add(tuple(sorted((a, b))))
    return sorted(edges)


def derive_isl_graph(topology: NetworkTopology, snapshot_epoch: float = 0.0) -> IslGraph:
    """Freeze the ISL graph at one epoch.

    Intra-orbit edges form one cycle per plane. For every plane pair, one
    inter-orbit edge is placed per orbit-intersection region (two regions per
    pair), joining the satellites nearest that region; ties break to the
    lowest satellite id.
    """
    positions = satellite_unit_positions(topology, snapshot_epoch)
    intra = _intra_orbit_edges(topology)
    inter = _inter_orbit_edges(topology, positions) if topology.n_planes > 1 else []
    edges = []
    kinds = []
    seen = set()
    for e in intra:
        if e not in seen:
            seen.add(e)
            edges.append(e)
            kinds.append("intra")
    for e in inter:
        if e not in seen:
            seen.add(e)
            edges.append(e)
            kinds.append("inter")
    orbits = []
    for p in range(topology.n_planes):
        ring = sorted((s.id for s in topology.satellites if s.orbit_index == p),
                      key=lambda i: topology.satellites[i].slot_index)
        orbits.append(tuple(ring))
    return IslGraph(
        nodes=tuple(s.id for s in topology.satellites),
        edges=tuple(edges),
        kinds=tuple(kinds),
        orbits=tuple(orbits),
    )


def _hop_matrix(adj: np.ndarray) -> np.ndarray:
    """All-pairs hop counts by synchronous level expansion; -1 if unreachable."""
    n = adj.shape[0]
    dist = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    reached = np.eye(n, dtype=bool)
    frontier = np.eye(n, dtype=bool)
    adj_u8 = adj.astype(np.uint8)
    d = 0
    while frontier.any():
        nxt = (frontier.astype(np.uint8) @ adj_u8 > 0) & ~reached
        d += 1
        dist[nxt] = d
        reached |= nxt
        frontier = nxt
    return dist


def connected_components(adj: np.ndarray) -> list[list[int]]:
    dist = _hop_matrix(adj)
    seen: set[int] = set()
    comps = []
    for i in range(adj.shape[0]):
        if i in seen:
            continue
        comp = sorted(int(j) for j in np.flatnonzero(dist[i] >= 0))
        seen.update(comp)
        comps.append(comp)
    return comps


def hop_distances(graph: IslGraph) -> np.ndarray:
    """Symmetric matrix of shortest-path hop counts over the ISL graph."""
    adj = graph.adjacency()
    dist = _hop_matrix(adj)
    if (dist < 0).any():
        comps = connected_components(adj)
        raise TopologyError(f"ISL graph is disconnected; components: {comps}")
    return dist


def write_topology_table(topology: NetworkTopology, path,
                         coverage=None) -> None:
    """Dump the topology as a plain-text table, one row per element.

    Columns: id, kind, lat_deg, lon_deg, alt_m, parent. Satellites carry their
    orbit index as parent; air nodes their access satellite (when a coverage
    map is supplied); devices their owning air node.
    """
    lines = ["id\tkind\tlat_deg\tlon_deg\talt_m\tparent"]
    for s in topology.satellites:
        u = satellite_unit_position(s)
        lat = math.degrees(math.asin(float(np.clip(u[2], -1.0, 1.0))))
        lon = math.degrees(math.atan2(float(u[1]), float(u[0]))) % 360.0
        lines.append(f"{s.id}\tsatellite\t{lat!r}\t{lon!r}\t{s.altitude_km * 1000.0!r}\t{s.orbit_index}")
    for a in topology.air_nodes:
        parent = coverage.access[a.id] if coverage is not None else -1
        lines.append(f"{a.id}\tair\t{a.latitude_deg!r}\t{a.longitude_deg!r}\t{a.altitude_m!r}\t{parent}")
    for a in topology.air_nodes:
        for dev in a.device_ids:
            lines.append(f"{dev}\tdevice\t{a.latitude_deg!r}\t{a.longitude_deg!r}\t0.0\t{a.id}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
