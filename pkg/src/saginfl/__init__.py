"""Hierarchical federated learning over space-air-ground networks.

Builds satellite constellations with air and ground layers, assigns air nodes
to satellites (geographic, class-diversity, or the partitioned
cluster-and-match policy), trains a convex learner on synthetic non-IID data,
synchronizes satellite models by chunked Ring Allreduce, and accounts
end-to-end time per round.
"""
from .allreduce import (
    CommLog,
    ModelVector,
    chunk_model,
    gossip_traffic,
    multi_orbit_sync,
    ring_allreduce,
    ring_traffic_per_node,
    traffic_per_node,
)
from .assignment import (
    AssignmentMap,
    ClassDistribution,
    ClusterSet,
    air_class_distribution,
    build_clusters,
    cdo,
    cnasa,
    gdo,
    kmeans,
    min_cost_matching,
)
from .config import ExperimentConfig, load_config, parse_config_text, validate_config
from .coverage import CoverageMap, compute_coverage, subsatellite_points
from .data import DeviceDataset, generate_data
from .diagnostics import (
    check_convergence_bound,
    measure_divergence,
    theorem_bound,
    virtual_trajectories,
)
from .errors import ConfigurationError, InputError, TopologyError, TrainingError
from .partition import PartitionSet, air_nodes_to_parts, arc_partition, graph_partition
from .simulation import TrainingTrace, run_obl, satellite_aggregate
from .timecost import (
    TimeBreakdown,
    TimeParams,
    comm_time,
    comp_time,
    end_to_end,
    relay_hops,
    sync_time,
    total_time,
    trans_delay,
)
from .topology import (
    IslGraph,
    LinkParams,
    NetworkTopology,
    build_single_orbit,
    build_walker,
    derive_isl_graph,
    hop_distances,
)

__version__ = "0.1.0"
