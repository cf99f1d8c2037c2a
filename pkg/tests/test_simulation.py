"""The hierarchical training loop end to end."""
import dataclasses

import numpy as np
import pytest

from saginfl.config import (
    DataConfig,
    ExperimentConfig,
    PolicyConfig,
    RunConfig,
    TopologyConfig,
    TrainingConfig,
)
from saginfl.diagnostics import GradContext
from saginfl.errors import ConfigurationError
from saginfl.learner import augment, one_hot
from saginfl.simulation import run_obl
from saginfl.trace import render_trace


def make_config(policy="gdo", n_geo=1, seed=0, topology=None, data=None,
                training=None, run=None):
    return ExperimentConfig(
        topology=topology or TopologyConfig(n_sats=4, n_air=8,
                                            devices_per_air=2),
        data=data or DataConfig(n_classes=8, feature_dim=8,
                                classes_per_device=2, samples_per_device=20,
                                test_samples=400),
        training=training or TrainingConfig(global_rounds=4),
        policy=PolicyConfig(name=policy, n_geo=n_geo),
        run=run or RunConfig(seed=seed),
    )


class TestDegenerate:
    def test_single_device_is_plain_gradient_descent(self):
        cfg = make_config(
            topology=TopologyConfig(n_sats=1, n_air=1, devices_per_air=1),
            data=DataConfig(n_classes=4, feature_dim=4, classes_per_device=4,
                            samples_per_device=30, test_samples=200),
            training=TrainingConfig(tau1=1, tau2=1, global_rounds=6,
                                    learning_rate=0.1),
        )
        trace = run_obl(cfg)
        ds = trace.datasets[0]
        learner = trace.learner
        X_aug = augment(ds.features)[None]
        onehots = one_hot(ds.labels, 4)[None]
        w = trace.global_models[0][1].copy()
        for _ in range(6):
            w = w - 0.1 * learner.grad(w[None], X_aug, onehots)[0]
        assert np.allclose(trace.global_models[-1][1], w, atol=1e-12)

    def test_every_record_kind_matches_cadence(self):
        cfg = make_config(training=TrainingConfig(tau1=3, tau2=2,
                                                  global_rounds=2))
        trace = run_obl(cfg)
        assert len(trace.records) == 12
        for t, kind in trace.records:
            if t % 3 != 0:
                assert kind == "local"
            elif t % 6 != 0:
                assert kind == "satellite"
            else:
                assert kind == "global"

    def test_satellite_and_global_model_cadence(self):
        cfg = make_config(training=TrainingConfig(tau1=2, tau2=3,
                                                  global_rounds=2))
        trace = run_obl(cfg)
        sat_ts = [t for t, _ in trace.satellite_models]
        assert sat_ts == [2, 4, 6, 8, 10, 12]
        glob_ts = [t for t, _ in trace.global_models]
        assert glob_ts == [0, 6, 12]


class TestAggregationConservation:
    def test_global_equals_weighted_satellite_average(self):
        cfg = make_config(policy="cnasa", n_geo=2,
                          training=TrainingConfig(tau1=2, tau2=2,
                                                  global_rounds=3))
        trace = run_obl(cfg)
        sat_w = trace.satellite_weights()
        sat_models = dict(trace.satellite_models)
        for t, g in trace.global_models[1:]:
            expected = sat_w @ sat_models[t]
            rel = np.abs(g - expected) / np.maximum(np.abs(expected), 1e-12)
            assert rel.max() < 1e-9

    def test_air_first_equals_flat_run(self):
        flat_cfg = make_config(seed=3)
        air_cfg = dataclasses.replace(
            flat_cfg, run=RunConfig(seed=3, aggregate_via_air=True))
        flat = run_obl(flat_cfg)
        via_air = run_obl(air_cfg)
        for (t1, a), (t2, b) in zip(flat.global_models, via_air.global_models):
            assert t1 == t2
            assert np.abs(a - b).max() < 1e-12


class TestIidCloseToCentralized:
    @pytest.mark.parametrize("policy,n_geo", [("gdo", 1), ("cnasa", 2),
                                              ("cdo", 4)])
    def test_within_two_points(self, policy, n_geo):
        data = DataConfig(n_classes=8, feature_dim=8, classes_per_device=8,
                          samples_per_device=20, test_samples=1000)
        training = TrainingConfig(tau1=2, tau2=2, global_rounds=10,
                                  learning_rate=0.1)
        cfg = make_config(policy=policy, n_geo=n_geo, data=data,
                          training=training)
        trace = run_obl(cfg)
        # centralized oracle: same step budget on pooled data
        ctx = GradContext.from_trace(trace)
        w = trace.global_models[0][1].copy()
        for _ in range(2 * 2 * 10):
            w = w - 0.1 * ctx.global_grad(w)
        central = trace.learner.accuracy(w, trace.test_features,
                                         trace.test_labels)
        assert abs(trace.final_accuracy - central) <= 0.02


class TestDeterminism:
    def test_repeated_run_bit_identical_trace(self):
        cfg = make_config(policy="cnasa", n_geo=2, seed=11)
        a = render_trace(run_obl(cfg), None)
        b = render_trace(run_obl(cfg), None)
        assert a == b

    def test_different_seed_differs(self):
        a = run_obl(make_config(seed=1))
        b = run_obl(make_config(seed=2))
        assert a.final_accuracy != b.final_accuracy or \
            not np.allclose(a.global_models[-1][1], b.global_models[-1][1])


class TestWalkerRuns:
    def test_walker_multi_orbit_sync_path(self):
        cfg = make_config(
            policy="cnasa", n_geo=2,
            topology=TopologyConfig(kind="walker", n_planes=3,
                                    sats_per_plane=4, inclination_deg=85.0,
                                    air_per_cell=1, devices_per_air=1),
            data=DataConfig(n_classes=6, feature_dim=6, classes_per_device=2,
                            samples_per_device=15, test_samples=300),
            training=TrainingConfig(tau1=2, tau2=2, global_rounds=2),
        )
        trace = run_obl(cfg)
        assert trace.topology.n_satellites == 12
        assert len(trace.accuracy) == 2
        phases = {row[1] for row in trace.comm_rows}
        assert any(p.startswith("phase2") for p in phases)
        assert trace.assignment.relay_hops() < 2

    def test_multi_orbit_matches_flat_average(self):
        cfg = make_config(
            policy="gdo",
            topology=TopologyConfig(kind="walker", n_planes=2,
                                    sats_per_plane=3, inclination_deg=60.0,
                                    air_per_cell=1, devices_per_air=2),
            data=DataConfig(n_classes=6, feature_dim=6, classes_per_device=3,
                            samples_per_device=10, test_samples=200),
            training=TrainingConfig(tau1=1, tau2=1, global_rounds=1),
        )
        trace = run_obl(cfg)
        sat_w = trace.satellite_weights()
        t, g = trace.global_models[-1]
        expected = sat_w @ dict(trace.satellite_models)[t]
        assert np.abs(g - expected).max() < 1e-9


class TestTimeAccounting:
    def test_breakdown_identity(self):
        trace = run_obl(make_config(policy="cnasa", n_geo=2))
        for b in trace.breakdowns:
            assert abs(b.t_total - (b.t_comm + b.t_comp + b.t_sync)) < 1e-15
            assert b.n_ss == trace.assignment.relay_hops()

    def test_comm_time_policy_ordering_per_instance(self):
        # the communication term orders with the relay hop counts
        topo = TopologyConfig(n_sats=10, n_air=30, devices_per_air=2)
        data = DataConfig(n_classes=10, feature_dim=10, classes_per_device=2,
                          samples_per_device=10, test_samples=100)
        training = TrainingConfig(global_rounds=1, tau1=1, tau2=1)
        comm = {}
        for policy, ng in (("gdo", 1), ("cnasa", 2), ("cdo", 10)):
            trace = run_obl(make_config(policy=policy, n_geo=ng, seed=2,
                                        topology=topo, data=data,
                                        training=training))
            comm[policy] = trace.breakdowns[0].t_comm
        assert comm["gdo"] <= comm["cnasa"] <= comm["cdo"]

    def test_gossip_sync_costed_not_simulated(self):
        ring_cfg = make_config(seed=5)
        gossip_cfg = dataclasses.replace(
            ring_cfg, run=RunConfig(seed=5, sync_algo="gossip"))
        ring = run_obl(ring_cfg)
        gossip = run_obl(gossip_cfg)
        # same values, different sync time
        assert np.allclose(ring.global_models[-1][1],
                           gossip.global_models[-1][1])
        assert gossip.breakdowns[0].t_sync > ring.breakdowns[0].t_sync

    def test_policy_inconsistency_rejected(self):
        cfg = make_config(policy="cnasa", n_geo=9)  # only 4 satellites
        with pytest.raises(ConfigurationError):
            run_obl(cfg)


class TestLearnerVariants:
    def test_mlp_run_trains(self):
        cfg = make_config(
            training=TrainingConfig(learner="mlp", hidden_dim=8, tau1=2,
                                    tau2=2, global_rounds=8,
                                    learning_rate=0.2))
        trace = run_obl(cfg)
        assert not trace.learner.convex
        assert len(trace.accuracy) == 8
        assert trace.accuracy[-1][2] > trace.accuracy[0][2] - 0.05

    def test_mini_batch_mode_runs_and_differs(self):
        full = run_obl(make_config(seed=9))
        mini = run_obl(make_config(
            seed=9, training=TrainingConfig(global_rounds=4, batch_size=5)))
        assert not np.allclose(full.global_models[-1][1],
                               mini.global_models[-1][1])

    def test_mini_batch_deterministic(self):
        cfg = make_config(
            seed=9, training=TrainingConfig(global_rounds=3, batch_size=5))
        a = run_obl(cfg)
        b = run_obl(cfg)
        assert (a.global_models[-1][1] == b.global_models[-1][1]).all()
