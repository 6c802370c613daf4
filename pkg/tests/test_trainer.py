import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import direct_counts
from pareto_forge.cluster import PRUNED, ClusterAssignment
from pareto_forge.errors import DomainError
from pareto_forge.growl import layer_sparsity, zero_rows
from pareto_forge.moo import ScalarizationConfig
from pareto_forge.net import MultiTaskNet
from pareto_forge.trainer import (
    PROFILES,
    MetricsRecord,
    RunLog,
    TrainConfig,
    Trainer,
    cap_zero_rows,
    compute_metrics,
    count_parameters,
    evaluate,
    metrics_from_counts,
    profile,
    train,
)


def scal(k0):
    return ScalarizationConfig(np.array([k0, (1 - k0) / 2, (1 - k0) / 2]), np.zeros(3))


SPARSE = dict(M1=2, M2=2, s=3, eta1=0.1, batch_size=32, prox_step=0.2, seed=0)


@pytest.fixture(scope="module")
def sparse_run(small_spec, small_data):
    trainer = Trainer(MultiTaskNet(small_spec), small_data, TrainConfig(**SPARSE), scal(0.1))
    p1 = trainer.phase1()
    final = trainer.phase2(p1)
    return trainer, p1, final


class TestConfig:
    def test_desk_defaults(self):
        cfg = TrainConfig()
        assert (cfg.M1, cfg.M2, cfg.s) == (3, 5, 10)
        assert profile("desk") == cfg

    def test_reference_profiles(self):
        mm = profile("multimnist")
        assert (mm.M1, mm.M2, mm.s, mm.mu0) == (3, 10, 3, 2.5e-5)
        assert (mm.eta1, mm.eta2) == (0.2, 0.8)
        assert (PROFILES["cifar10mnist"]["eta1"], PROFILES["cifar10mnist"]["eta2"]) == (0.1, 0.3)

    @pytest.mark.parametrize("kwargs", [{"M1": 0}, {"s": 0}, {"eta1": 0.9, "eta2": 0.5},
                                        {"lr1": 0.0}, {"optimizer": "lbfgs"}, {"prox_step": -1.0},
                                        {"batch_size": 0}, {"beta1": 0.0}, {"mu_factor": 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            TrainConfig(**kwargs)

    def test_json_rejects_unknown_keys(self):
        with pytest.raises(DomainError, match="unknown"):
            TrainConfig.from_json({"M1": 2, "epochs": 5})

    def test_json_roundtrip(self):
        cfg = TrainConfig(M1=2, prox_step=0.1)
        assert TrainConfig.from_json(cfg.to_json()) == cfg

    def test_unknown_profile(self):
        with pytest.raises(DomainError):
            profile("imagenet")


class TestMetrics:
    def test_direct_formulas(self):
        m = metrics_from_counts(10, 3, 5)
        assert (m.sr, m.ps, m.cr) == pytest.approx((0.3, 1.4, 2.0))

    def test_dense_untied(self, small_spec):
        m = compute_metrics(MultiTaskNet(small_spec).new_params(0))
        assert (m.sr, m.cr, m.ps) == (0.0, 1.0, 1.0)

    def test_all_zero_model(self):
        m = metrics_from_counts(4, 4, 0)
        assert m.sr == 1.0 and m.ps == 1.0 and math.isinf(m.cr)
        assert m.to_json()["cr"] is None

    @pytest.mark.parametrize("counts", [(0, 0, 0), (5, 6, 0), (5, 1, 5)])
    def test_inconsistent_counts(self, counts):
        with pytest.raises(DomainError):
            metrics_from_counts(*counts)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_counts_match_direct_counting(self, seed, small_spec):
        params = random_tied_pruned(MultiTaskNet(small_spec), np.random.default_rng(seed))
        arrays = [params[p.name] for p in params.infos]
        assert count_parameters(params) == direct_counts(arrays)

    @given(seed=st.integers(0, 2**32 - 1))
    def test_cr_ps_identity(self, seed, small_spec):
        m = compute_metrics(random_tied_pruned(MultiTaskNet(small_spec), np.random.default_rng(seed)))
        assert m.cr == pytest.approx(m.ps / (1 - m.sr), rel=1e-12)
        assert 0 <= m.sr <= 1 and m.cr >= 1 and m.ps >= 1

    def test_average_accuracy(self):
        m = metrics_from_counts(10, 0, 10, (0.9729, 0.9640))
        assert m.avg_accuracy == pytest.approx(0.96845)


def random_tied_pruned(net, rng):
    """Random parameters with some rows pruned and some rows tied."""
    params = net.new_params(int(rng.integers(1000)))
    params.flat[:] += rng.normal(size=len(params)) * 0.1
    for name in params.growl_names():
        W = params[name]
        n = W.shape[0]
        W[rng.random(n) < 0.3] = 0.0
        live = np.flatnonzero(np.any(W != 0, axis=1))
        if live.size >= 2:
            group = rng.choice(live, size=int(rng.integers(2, live.size + 1)), replace=False)
            W[group] = W[group].mean(axis=0)
    return params


class TestEvaluate:
    class Oracle:
        """Predicts the stored labels exactly (or uniformly at random)."""

        def __init__(self, spec, split, random=False):
            self.spec, self.split, self.random = spec, split, random
            self.rng = np.random.default_rng(0)

        def forward(self, params, X):
            idx = [int(np.flatnonzero(np.all(self.split.X == x, axis=1))[0]) for x in X]
            out = []
            for y, c in zip(self.split.labels, self.spec.n_classes):
                z = self.rng.normal(size=(len(idx), c)) if self.random else np.eye(c)[y[idx]]
                out.append(z)
            return out

    def test_perfect_predictor(self, small_spec, small_data):
        acc, _ = evaluate(self.Oracle(small_spec, small_data.test), None, small_data.test, batch_size=7)
        np.testing.assert_array_equal(acc, 1.0)

    def test_random_predictor_near_chance(self, small_spec, small_data):
        acc, _ = evaluate(self.Oracle(small_spec, small_data.train, True), None, small_data.train)
        np.testing.assert_allclose(acc, 1 / 3, atol=0.06)

    def test_empty_split(self, small_spec, small_data):
        from pareto_forge.bench.dataset import TaskSplit

        empty = TaskSplit(np.zeros((0, 6)), (np.zeros(0, dtype=int), np.zeros(0, dtype=int)))
        with pytest.raises(DomainError):
            evaluate(MultiTaskNet(small_spec), None, empty)


class TestCap:
    def test_restores_largest_rows(self):
        before = np.array([[3.0], [1.0], [2.0], [0.5]])
        after = np.zeros((4, 1))
        out = cap_zero_rows(before, after, 0.5, "L")
        np.testing.assert_array_equal(out[:, 0], [3.0, 0.0, 2.0, 0.0])

    def test_within_budget_unchanged(self):
        after = np.array([[0.0], [1.0]])
        assert cap_zero_rows(np.ones((2, 1)), after, 0.5) is after

    def test_all_rows_pruned_with_full_budget(self):
        with pytest.raises(DomainError, match="every row"):
            cap_zero_rows(np.ones((2, 1)), np.zeros((2, 1)), 1.0, "L")


class TestPhases:
    def test_phase1_checkpoint_meets_save_criterion(self, sparse_run):
        trainer, p1, _ = sparse_run
        assert p1.saved
        assert compute_metrics(p1.params).sr >= trainer.cfg.eta1
        for name in p1.params.growl_names():
            assert layer_sparsity(p1.params[name]) <= trainer.cfg.eta2

    def test_every_regularized_layer_within_eta2_each_epoch(self, small_spec, small_data):
        cfg = TrainConfig(**{**SPARSE, "prox_step": 5.0, "eta2": 0.5})
        trainer = Trainer(MultiTaskNet(small_spec), small_data, cfg, scal(0.3))
        p1 = trainer.phase1()
        for name in p1.params.growl_names():
            assert layer_sparsity(p1.params[name]) <= 0.5

    def test_pruned_rows_stay_pruned(self, sparse_run):
        _, p1, final = sparse_run
        for name in p1.params.growl_names():
            assert set(zero_rows(p1.params[name])) <= set(zero_rows(final[name]))

    def test_cluster_rows_equal_after_phase2(self, sparse_run):
        _, p1, final = sparse_run
        for name, a in p1.clusters.items():
            for members in a.clusters():
                np.testing.assert_array_equal(final[name][members],
                                              np.broadcast_to(final[name][members[0]],
                                                              final[name][members].shape))

    def test_log_has_both_phases(self, sparse_run):
        trainer, _, _ = sparse_run
        phases = [row[0] for row in trainer.log.rows]
        assert phases.count(1) == 2 * 3 and phases.count(2) == 2 * 3
        header = trainer.log.to_csv().splitlines()[0].split(",")
        assert header[:6] == ["phase", "iteration", "epoch", "L0", "L1", "L2"]

    def test_cluster_shape_mismatch(self, sparse_run):
        trainer, p1, _ = sparse_run
        name = next(iter(p1.clusters))
        bad = {name: ClusterAssignment(np.array([0, PRUNED]), np.array([0]))}
        with pytest.raises(DomainError, match="do not match"):
            trainer.phase2(type(p1)(p1.params, bad, p1.saved, p1.best_val_accuracy, p1.state))

    def test_dense_run_degenerates(self, small_spec, small_data):
        cfg = TrainConfig(**{**SPARSE, "prox_step": None})
        res = train(MultiTaskNet(small_spec), small_data, cfg, scal(0.0))
        assert (res.metrics.sr, res.metrics.cr, res.metrics.ps) == (0.0, 1.0, 1.0)
        assert all(len(a.exemplars) == a.labels.size for a in res.clusters.values())

    def test_reproducible(self, small_spec, small_data):
        cfg = TrainConfig(**SPARSE)
        a = train(MultiTaskNet(small_spec), small_data, cfg, scal(0.1))
        b = train(MultiTaskNet(small_spec), small_data, cfg, scal(0.1))
        assert a.metrics == b.metrics
        np.testing.assert_array_equal(a.params.flat, b.params.flat)

    def test_reference_violation(self, small_spec, small_data):
        bad = ScalarizationConfig(np.array([0.1, 0.45, 0.45]), np.array([0.0, 50.0, 0.0]))
        with pytest.raises(DomainError, match="reference point violation"):
            Trainer(MultiTaskNet(small_spec), small_data, TrainConfig(**SPARSE), bad).phase1()

    def test_preference_length(self, small_spec, small_data):
        with pytest.raises(DomainError, match="expected 3"):
            Trainer(MultiTaskNet(small_spec), small_data, TrainConfig(),
                    ScalarizationConfig(np.array([0.5, 0.5]), np.zeros(2)))


def test_run_log_csv():
    log = RunLog(2, 1)
    log.append(1, 0, 0, [1.0, 2.0], 0.5, -0.1, 1e-3, 0.25, [0.75])
    assert log.to_csv().splitlines() == [
        "phase,iteration,epoch,L0,L1,t,max_H,mu,SR,val_acc1",
        "1,0,0,1.0,2.0,0.5,-0.1,0.001,0.25,0.75",
    ]


def test_metrics_record_json_keys():
    assert set(MetricsRecord(0.0, 1.0, 1.0).to_json()) == {
        "sr", "cr", "ps", "task_accuracy", "avg_accuracy", "n_total", "n_zero", "n_unique"}
