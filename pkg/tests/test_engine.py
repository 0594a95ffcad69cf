import numpy as np
import pytest

from sensecourt.benchmark import BenchmarkResult
from sensecourt.engine import (
    PolicySpec,
    UserLedger,
    apply_dropping,
    compute_summary,
    run_policy,
    run_simulation,
)
from sensecourt.scenarios import ScenarioConfig, realization_stream
from sensecourt.solver import SolveOptions
from sensecourt.world import GridMap


def desk_config(**overrides):
    base = dict(
        map=GridMap(8, 8, 200.0),
        n_users=6,
        radius_min_m=300.0,
        radius_max_m=600.0,
        cost_to_weight_ratio=0.4,
        seed=11,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestApplyDropping:
    def test_strictly_below_threshold_drops(self):
        ledgers = [UserLedger(0.5, selections=49, slots_seen=100)]
        assert apply_dropping(ledgers, 101) == [0]
        assert not ledgers[0].active
        assert ledgers[0].dropped_at == 101

    def test_boundary_survives(self):
        ledgers = [UserLedger(0.5, selections=50, slots_seen=100)]
        assert apply_dropping(ledgers, 101) == []
        assert ledgers[0].active

    def test_zero_threshold_never_drops(self):
        ledgers = [UserLedger(0.0, selections=0, slots_seen=500)]
        assert apply_dropping(ledgers, 501) == []

    def test_drop_is_permanent(self):
        ledgers = [UserLedger(0.5, selections=0, slots_seen=10)]
        apply_dropping(ledgers, 11)
        ledgers[0].selections = 10  # even if the ratio later recovers
        assert apply_dropping(ledgers, 12) == []
        assert not ledgers[0].active


class TestRunSimulation:
    def test_all_warmup_full_probability(self):
        cfg = desk_config()
        metrics = run_simulation(
            cfg, PolicySpec("greedy"), t_slots=30, warmup_slots=30, thresholds=0.5
        )
        assert metrics.drop_events == ()
        for ledger in metrics.final_ledgers:
            assert ledger.allocation_probability == 1.0

    def test_same_seed_identical_metrics(self):
        cfg = desk_config()
        a = run_simulation(cfg, PolicySpec("lyapunov", phi=5), 60, 10, 0.5)
        b = run_simulation(cfg, PolicySpec("lyapunov", phi=5), 60, 10, 0.5)
        assert np.array_equal(a.welfare_series, b.welfare_series)
        assert np.array_equal(a.selected, b.selected)
        assert a.drop_events == b.drop_events

    def test_random_policy_deterministic_given_seed(self):
        cfg = desk_config()
        a = run_simulation(cfg, PolicySpec("random"), 40, 5, 0.5)
        b = run_simulation(cfg, PolicySpec("random"), 40, 5, 0.5)
        assert np.array_equal(a.selected, b.selected)

    def test_no_inactive_user_ever_selected(self):
        cfg = desk_config(cost_to_weight_ratio=1.2)  # heavy dropping pressure
        metrics = run_simulation(cfg, PolicySpec("greedy"), 200, 10, 0.5)
        assert len(metrics.drop_events) > 0
        for u, slot in metrics.drop_events:
            assert not metrics.selected[slot:, u].any()
            assert not metrics.active[slot:, u].any()

    def test_ledger_conservation(self):
        cfg = desk_config()
        metrics = run_simulation(cfg, PolicySpec("greedy"), 100, 10, 0.5)
        for u, ledger in enumerate(metrics.final_ledgers):
            assert ledger.selections <= ledger.slots_seen
            expected_seen = (
                metrics.t_slots
                if ledger.active
                else ledger.dropped_at
            )
            assert ledger.slots_seen == expected_seen
            assert ledger.selections == int(metrics.selected[
                : ledger.slots_seen, u
            ].sum())

    def test_warmup_counts_toward_probability(self):
        cfg = desk_config(cost_to_weight_ratio=1.2)
        metrics = run_simulation(cfg, PolicySpec("greedy"), 120, 40, 0.5)
        # nobody can drop before slot warmup+1, and with a full warmup the
        # earliest possible drop given frozen selections is slot 81
        first_drop = min(slot for _, slot in metrics.drop_events)
        assert first_drop > 80

    def test_auction_records_payments(self):
        cfg = desk_config(n_users=4)
        metrics = run_simulation(
            cfg,
            PolicySpec("auction", phi=10),
            30,
            5,
            0.5,
            solver=SolveOptions(mode="exact"),
        )
        assert metrics.payments_series is not None
        assert metrics.payments_series.shape == (30, 4)
        # warmup slots are forced selections, no auction payments
        assert np.all(metrics.payments_series[:5] == 0.0)

    def test_validates_slot_counts(self):
        cfg = desk_config()
        with pytest.raises(ValueError):
            run_simulation(cfg, PolicySpec("greedy"), 0, 0, 0.5)
        with pytest.raises(ValueError):
            run_simulation(cfg, PolicySpec("greedy"), 5, 9, 0.5)

    def test_unknown_policy_kind_rejected(self):
        with pytest.raises(ValueError):
            PolicySpec("simulated_annealing")


class TestPolicyEquivalences:
    def test_auction_truthful_matches_lyapunov_trace(self):
        cfg = desk_config(n_users=5)
        slots = list(realization_stream(cfg, 80))
        thresholds = np.full(5, 0.5)
        lyap = run_policy(
            slots, PolicySpec("lyapunov", phi=8), thresholds, 10,
            solver=SolveOptions(mode="exact"),
        )
        auct = run_policy(
            slots, PolicySpec("auction", phi=8), thresholds, 10,
            solver=SolveOptions(mode="exact"),
        )
        assert np.array_equal(lyap.selected, auct.selected)
        assert np.array_equal(lyap.welfare_series, auct.welfare_series)

    def test_dual_zero_thresholds_equals_greedyless_regulation(self):
        cfg = desk_config(n_users=5)
        slots = list(realization_stream(cfg, 40))
        thresholds = np.zeros(5)
        dual = run_policy(
            slots, PolicySpec("dual"), thresholds, 0,
            solver=SolveOptions(mode="exact"),
        )
        assert np.all(dual.regulation == 0.0)


class TestComputeSummary:
    def _metrics(self, welfare, warmup=0, drops=(), n=10):
        from sensecourt.engine import TraceMetrics

        t = len(welfare)
        welfare = np.asarray(welfare, dtype=float)
        ledgers = [UserLedger(0.5, selections=t, slots_seen=t) for _ in range(n)]
        return TraceMetrics(
            policy_label="greedy",
            replication=0,
            seed=0,
            t_slots=t,
            warmup_slots=warmup,
            thresholds=np.full(n, 0.5),
            welfare_series=welfare,
            running_avg_welfare=np.cumsum(welfare) / np.arange(1, t + 1),
            alloc_prob_series=np.ones((t, n)),
            selected=np.ones((t, n), dtype=bool),
            active=np.ones((t, n), dtype=bool),
            regulation=np.zeros((t, n)),
            payments_series=None,
            drop_events=tuple(drops),
            final_ledgers=ledgers,
            final_policy_state=None,
        )

    def test_constant_series(self):
        m = self._metrics([2.5] * 10)
        assert compute_summary(m)["avg_welfare"] == pytest.approx(2.5)

    def test_dropping_fraction(self):
        m = self._metrics([1.0] * 10, drops=[(0, 5), (3, 6), (7, 9)])
        assert compute_summary(m)["dropping_fraction"] == pytest.approx(0.3)

    def test_incentive_cost_with_benchmarks(self):
        m = self._metrics([1.0] * 4)
        unc = BenchmarkResult(1.0, np.ones(1), True, "unconstrained")
        con = BenchmarkResult(0.92, np.ones(1), True, "dual_upper_bound")
        summary = compute_summary(m, (unc, con))
        assert summary["incentive_cost"] == pytest.approx(0.08)
