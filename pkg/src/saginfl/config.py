"""Experiment configuration: INI sections parsed into typed blocks.

The file format is plain-text key=value under [topology], [data], [training],
[policy], and [run]. Every key except the seed has a default; the seed is
mandatory so no run can silently float. ``canonical_text`` serializes the
resolved configuration deterministically for trace headers and replay.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigurationError
from .topology import LinkParams

POLICIES = ("gdo", "cdo", "cnasa")
SYNC_ALGOS = ("ring", "gossip")
AXES = ("n_geo", "tau2", "non_iid", "n_devices", "n_air", "n_sats",
        "orbits", "sync_algo")


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "single"               # single | walker
    n_sats: int = 20
    altitude_km: float = 330.0
    n_air: int = 100
    devices_per_air: int = 2
    n_planes: int = 15
    sats_per_plane: int = 16
    inclination_deg: float = 85.0
    air_per_cell: int = 2
    sg_rate_bps: float = 6000e6
    sg_prop_s: float = 0.010
    ga_rate_bps: float = 32e9
    ga_prop_s: float = 0.005
    as_rate_bps: float = 6000e6
    as_prop_s: float = 0.005
    ss_rate_bps: float = 30e9
    ss_prop_s: float = 0.020

    def link_params(self) -> dict[str, LinkParams]:
        return {
            "SG": LinkParams("SG", rate_bps=self.sg_rate_bps,
                             prop_delay_s=self.sg_prop_s),
            "GA": LinkParams("GA", rate_bps=self.ga_rate_bps,
                             prop_delay_s=self.ga_prop_s),
            "AS": LinkParams("AS", rate_bps=self.as_rate_bps,
                             prop_delay_s=self.as_prop_s),
            "SS": LinkParams("SS", rate_bps=self.ss_rate_bps,
                             prop_delay_s=self.ss_prop_s),
        }


@dataclass(frozen=True)
class DataConfig:
    n_classes: int = 10
    classes_per_device: int = 2
    samples_per_device: int = 50
    feature_dim: int = 10
    test_samples: int = 4000
    blob_scale: float = 2.5
    class_scale_min: float = 0.5
    class_scale_max: float = 2.5
    geo_bin_deg: float = 0.0   # 0 = auto: one satellite cell of longitude


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.5
    l2: float = 1e-3
    tau1: int = 10
    tau2: int = 2
    global_rounds: int = 30
    learner: str = "softmax"           # softmax | mlp
    hidden_dim: int = 16
    init_scale: float = 1.0            # weight-init noise; 0 = zero init
    batch_size: int = 0                # 0 = full local dataset per step
    flops_model: float = 1e6
    flops_device: float = 0.665e12
    flops_air: float = 0.665e12
    flops_satellite: float = 0.665e12
    bits_per_param: int = 32


@dataclass(frozen=True)
class PolicyConfig:
    name: str = "cnasa"                # gdo | cdo | cnasa
    n_geo: int = 4


@dataclass(frozen=True)
class RunConfig:
    seed: int = -1                     # mandatory; -1 marks "unset"
    output_dir: str = "out"
    gamma: float = 0.5                 # trade-off weight, reported only
    sync_algo: str = "ring"            # ring | gossip (gossip: time model only)
    aggregate_via_air: bool = False
    label: str = "run"


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def canonical_text(self) -> str:
        lines = []
        for section_name in ("topology", "data", "training", "policy", "run"):
            block = getattr(self, section_name)
            lines.append(f"[{section_name}]")
            for f in fields(block):
                lines.append(f"{f.name} = {getattr(block, f.name)!r}")
        return "\n".join(lines) + "\n"


_SECTION_TYPES = {
    "topology": TopologyConfig,
    "data": DataConfig,
    "training": TrainingConfig,
    "policy": PolicyConfig,
    "run": RunConfig,
}

_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False,
                 "yes": True, "no": False}


def _coerce(section: str, name: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if target_type is bool:
            return _BOOL_STRINGS[raw.lower()]
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except (ValueError, KeyError):
        raise ConfigurationError(
            f"[{section}] {name}: cannot parse {raw!r} as {target_type.__name__}")


def _parse_section(parser: configparser.ConfigParser, section: str):
    cls = _SECTION_TYPES[section]
    if section not in parser:
        raise ConfigurationError(f"missing config section [{section}]")
    known = {f.name: f.type for f in fields(cls)}
    type_map = {"int": int, "float": float, "str": str, "bool": bool}
    kwargs = {}
    for name, raw in parser[section].items():
        if name not in known:
            raise ConfigurationError(f"[{section}] unknown key {name!r}")
        kwargs[name] = _coerce(section, name, raw, type_map[known[name]])
    return cls(**kwargs)


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check cross-field constraints; raises naming the offending field."""
    t, d, tr, p, r = cfg.topology, cfg.data, cfg.training, cfg.policy, cfg.run
    if t.kind not in ("single", "walker"):
        raise ConfigurationError(f"[topology] kind must be single|walker, got {t.kind!r}")
    if r.seed < 0:
        raise ConfigurationError("[run] seed is mandatory and must be >= 0")
    if p.name not in POLICIES:
        raise ConfigurationError(f"[policy] name must be one of {POLICIES}, got {p.name!r}")
    n_sats = t.n_sats if t.kind == "single" else t.n_planes * t.sats_per_plane
    if p.name == "cnasa" and not 1 <= p.n_geo <= n_sats:
        raise ConfigurationError(
            f"[policy] n_geo must be in [1, {n_sats}], got {p.n_geo}")
    if r.sync_algo not in SYNC_ALGOS:
        raise ConfigurationError(
            f"[run] sync_algo must be one of {SYNC_ALGOS}, got {r.sync_algo!r}")
    if tr.learner not in ("softmax", "mlp"):
        raise ConfigurationError(f"[training] learner must be softmax|mlp, got {tr.learner!r}")
    if tr.tau1 < 1 or tr.tau2 < 1:
        raise ConfigurationError("[training] tau1 and tau2 must be >= 1")
    if tr.global_rounds < 1:
        raise ConfigurationError("[training] global_rounds must be >= 1")
    if not 1 <= d.classes_per_device <= d.n_classes:
        raise ConfigurationError(
            f"[data] classes_per_device must be in [1, {d.n_classes}], "
            f"got {d.classes_per_device}")
    if tr.batch_size < 0 or tr.batch_size > d.samples_per_device:
        raise ConfigurationError(
            f"[training] batch_size must be in [0, {d.samples_per_device}], "
            f"got {tr.batch_size}")
    if d.feature_dim < d.n_classes:
        raise ConfigurationError(
            f"[data] feature_dim must be >= n_classes, got {d.feature_dim}")
    if not 0.0 <= r.gamma <= 1.0:
        raise ConfigurationError(f"[run] gamma must be in [0, 1], got {r.gamma}")
    return cfg


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    cfg = ExperimentConfig(**{
        section: _parse_section(parser, section) for section in _SECTION_TYPES
    })
    return validate_config(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Derive a sweep-cell configuration from the base one."""
    if axis == "n_geo":
        return replace(cfg, policy=replace(cfg.policy, n_geo=int(value)))
    if axis == "tau2":
        return replace(cfg, training=replace(cfg.training, tau2=int(value)))
    if axis == "non_iid":
        return replace(cfg, data=replace(cfg.data, classes_per_device=int(value)))
    if axis == "n_devices":
        total = int(value)
        n_air = cfg.topology.n_air if cfg.topology.kind == "single" else \
            cfg.topology.n_planes * cfg.topology.sats_per_plane * cfg.topology.air_per_cell
        if total % n_air != 0:
            raise ConfigurationError(
                f"n_devices {total} not divisible by {n_air} air nodes")
        return replace(cfg, topology=replace(cfg.topology,
                                             devices_per_air=total // n_air))
    if axis == "n_air":
        return replace(cfg, topology=replace(cfg.topology, n_air=int(value)))
    if axis == "n_sats":
        return replace(cfg, topology=replace(cfg.topology, n_sats=int(value)))
    if axis == "orbits":
        total = cfg.topology.n_planes * cfg.topology.sats_per_plane
        planes = int(value)
        if total % planes != 0:
            raise ConfigurationError(
                f"orbits {planes} does not divide {total} satellites")
        return replace(cfg, topology=replace(
            cfg.topology, n_planes=planes, sats_per_plane=total // planes))
    if axis == "sync_algo":
        return replace(cfg, run=replace(cfg.run, sync_algo=str(value)))
    raise ConfigurationError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, run=replace(cfg.run, seed=seed))
