"""Simulation driver: warmup, policy stepping, dropping model, metrics.

One run owns one policy state machine and one per-user ledger vector.
Every user is force-selected during the warmup slots (regulation states
still update as if selected); afterwards the policy allocates among active
users only, and any active user whose running selection frequency falls
strictly below its threshold drops permanently. Dropped users keep their
regulation state frozen and leave the eligibility set for good.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import auction as _auction
from . import baselines as _baselines
from . import policy_dual as _dual
from . import policy_lyapunov as _lyap
from .benchmark import BenchmarkResult, incentive_cost
from .policy_dual import StepSchedule
from .scenarios import (
    RANDOM_POLICY_STREAM,
    ScenarioConfig,
    realization_stream,
)
from .solver import SolveOptions
from .world import Allocation, SlotRealization, evaluate_allocation

__all__ = [
    "POLICY_KINDS",
    "PolicySpec",
    "UserLedger",
    "TraceMetrics",
    "apply_dropping",
    "compute_summary",
    "run_policy",
    "run_simulation",
]

POLICY_KINDS = ("dual", "lyapunov", "auction", "radp_vpc", "greedy", "random")


@dataclass(frozen=True)
class PolicySpec:
    """A policy choice plus its parameters.

    phi applies to lyapunov and auction, alpha to radp_vpc, schedule to dual.
    """

    kind: str
    phi: float = 10.0
    alpha: float = 1.0
    schedule: StepSchedule = StepSchedule.harmonic(1.0)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind in ("lyapunov", "auction"):
            return f"{self.kind}_phi{self.phi:g}"
        if self.kind == "radp_vpc":
            return f"radp_vpc_alpha{self.alpha:g}"
        if self.kind == "dual":
            return f"dual_{self.schedule.kind}{self.schedule.coeff:g}"
        return self.kind


@dataclass
class UserLedger:
    """Long-term bookkeeping for one user."""

    threshold: float
    selections: int = 0
    slots_seen: int = 0
    active: bool = True
    dropped_at: int | None = None

    @property
    def allocation_probability(self) -> float:
        if self.slots_seen == 0:
            return 0.0
        return self.selections / self.slots_seen


@dataclass
class TraceMetrics:
    """Per-slot and cumulative statistics of one run."""

    policy_label: str
    replication: int
    seed: int
    t_slots: int
    warmup_slots: int
    thresholds: np.ndarray
    welfare_series: np.ndarray
    running_avg_welfare: np.ndarray
    alloc_prob_series: np.ndarray  # (T, N) running selection frequency
    selected: np.ndarray  # (T, N) bool
    active: np.ndarray  # (T, N) bool, eligibility at allocation time
    regulation: np.ndarray  # (T, N) bonus applied to each user's cost
    payments_series: np.ndarray | None  # (T, N), auction runs only
    drop_events: tuple[tuple[int, int], ...]  # (user, slot)
    final_ledgers: list[UserLedger]
    final_policy_state: object
    summary: dict = field(default_factory=dict)


def apply_dropping(ledgers: list[UserLedger], slot: int) -> list[int]:
    """Drop every active user whose frequency is strictly below its threshold.

    Returns the indices of newly dropped users. Drops are permanent.
    """
    dropped = []
    for u, ledger in enumerate(ledgers):
        if ledger.active and ledger.allocation_probability < ledger.threshold:
            ledger.active = False
            ledger.dropped_at = slot
            dropped.append(u)
    return dropped


class _PolicyRunner:
    """Allocation/update/bonus adapter that freezes dropped users' state."""

    def __init__(
        self,
        spec: PolicySpec,
        n_users: int,
        thresholds: np.ndarray,
        options: SolveOptions,
        rng: np.random.Generator | None,
    ):
        self.spec = spec
        self.thresholds = thresholds
        self.options = options
        self.rng = rng
        kind = spec.kind
        if kind == "dual":
            self.state = _dual.DualState.initial(n_users, spec.schedule)
        elif kind == "lyapunov":
            self.state = _lyap.QueueState.initial(n_users, spec.phi)
        elif kind == "auction":
            self.state = _auction.RegulationState.initial(thresholds, spec.phi)
        elif kind == "radp_vpc":
            self.state = _baselines.VpcState.initial(n_users, spec.alpha)
        else:
            self.state = None
        if kind == "random" and rng is None:
            raise ValueError("random policy needs a seeded rng")

    def bonus(self) -> np.ndarray | float:
        kind = self.spec.kind
        if kind == "dual":
            return self.state.multipliers
        if kind == "lyapunov":
            return self.state.backlogs / self.state.phi
        if kind == "auction":
            return self.state.factors
        if kind == "radp_vpc":
            return self.state.credits
        return 0.0

    def allocate(
        self, realization: SlotRealization, eligible: np.ndarray
    ) -> tuple[Allocation, np.ndarray | None]:
        kind = self.spec.kind
        if kind == "dual":
            return _dual.dual_allocate(self.state, realization, eligible, self.options), None
        if kind == "lyapunov":
            return _lyap.lyapunov_allocate(self.state, realization, eligible, self.options), None
        if kind == "auction":
            outcome, _ = _auction.run_auction_slot(
                self.state,
                realization,
                _auction.BidVector(realization.true_costs),
                self.thresholds,
                eligible,
                self.options.exact_limit,
            )
            return outcome.alloc, outcome.payments
        if kind == "radp_vpc":
            alloc, _ = _baselines.radp_vpc_step(
                self.state, realization, eligible, self.options
            )
            return alloc, None
        if kind == "greedy":
            return _baselines.greedy_baseline_step(realization, eligible), None
        return _baselines.random_baseline_step(realization, eligible, self.rng), None

    def update(self, alloc: Allocation, eligible: np.ndarray) -> None:
        kind = self.spec.kind
        if kind == "dual":
            new = _dual.dual_update(self.state, alloc, self.thresholds)
            lam = np.where(eligible, new.multipliers, self.state.multipliers)
            self.state = _dual.DualState(
                lam, new.cumulative_selected, new.slot_index, new.schedule
            )
        elif kind == "lyapunov":
            new = _lyap.queue_update(self.state, alloc, self.thresholds)
            q = np.where(eligible, new.backlogs, self.state.backlogs)
            self.state = _lyap.QueueState(q, new.phi, new.slot_index)
        elif kind == "auction":
            new = _auction.regulation_update(self.state, alloc, self.thresholds)
            r = np.where(eligible, new.factors, self.state.factors)
            self.state = _auction.RegulationState(r, new.phi, new.slot_index)
        elif kind == "radp_vpc":
            credits = self.state.credits.copy()
            credits[eligible & alloc.selected] = 0.0
            credits[eligible & ~alloc.selected] += self.state.alpha
            self.state = _baselines.VpcState(credits, self.state.alpha)


def run_policy(
    realizations: Iterable[SlotRealization],
    policy: PolicySpec,
    thresholds: np.ndarray,
    warmup_slots: int,
    solver: SolveOptions = SolveOptions(mode="greedy"),
    rng: np.random.Generator | None = None,
    policy_label: str | None = None,
    replication: int = 0,
    seed: int = 0,
    dropping: bool = True,
) -> TraceMetrics:
    """Run one policy over a realization sequence and record metrics.

    dropping=False keeps every user active regardless of frequency, which
    is the setting policy-level stability statements are about.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    n = thresholds.size
    ledgers = [UserLedger(float(d)) for d in thresholds]
    runner: _PolicyRunner | None = None

    welfare: list[float] = []
    selected_rows: list[np.ndarray] = []
    active_rows: list[np.ndarray] = []
    regulation_rows: list[np.ndarray] = []
    prob_rows: list[np.ndarray] = []
    payment_rows: list[np.ndarray] = []
    drop_events: list[tuple[int, int]] = []

    t = 0
    for realization in realizations:
        t += 1
        if realization.n_users != n:
            raise ValueError("realization user count does not match thresholds")
        if runner is None:
            runner = _PolicyRunner(policy, n, thresholds, solver, rng)
        eligible = np.array([lg.active for lg in ledgers])
        regulation_rows.append(np.where(eligible, runner.bonus(), 0.0))
        active_rows.append(eligible)

        payments = None
        if t <= warmup_slots:
            alloc = Allocation(eligible.copy())
        else:
            alloc, payments = runner.allocate(realization, eligible)
        if policy.kind == "auction":
            payment_rows.append(payments if payments is not None else np.zeros(n))

        wb = evaluate_allocation(realization, alloc)
        welfare.append(wb.welfare)
        selected_rows.append(alloc.selected)

        for u, ledger in enumerate(ledgers):
            if ledger.active:
                ledger.slots_seen += 1
                ledger.selections += int(alloc.selected[u])
        prob_rows.append(np.array([lg.allocation_probability for lg in ledgers]))

        runner.update(alloc, eligible)

        if dropping and t > warmup_slots:
            for u in apply_dropping(ledgers, t):
                drop_events.append((u, t))

    if t == 0:
        raise ValueError("simulation needs at least one slot")
    if warmup_slots > t:
        raise ValueError("warmup_slots cannot exceed the number of slots")

    welfare_arr = np.asarray(welfare)
    metrics = TraceMetrics(
        policy_label=policy_label or policy.label,
        replication=replication,
        seed=seed,
        t_slots=t,
        warmup_slots=warmup_slots,
        thresholds=thresholds,
        welfare_series=welfare_arr,
        running_avg_welfare=np.cumsum(welfare_arr) / np.arange(1, t + 1),
        alloc_prob_series=np.vstack(prob_rows),
        selected=np.vstack(selected_rows),
        active=np.vstack(active_rows),
        regulation=np.vstack(regulation_rows),
        payments_series=np.vstack(payment_rows) if payment_rows else None,
        drop_events=tuple(drop_events),
        final_ledgers=ledgers,
        final_policy_state=runner.state,
    )
    metrics.summary = compute_summary(metrics)
    return metrics


def run_simulation(
    config: ScenarioConfig,
    policy: PolicySpec,
    t_slots: int,
    warmup_slots: int,
    thresholds,
    solver: SolveOptions = SolveOptions(mode="greedy"),
    replication: int = 0,
) -> TraceMetrics:
    """Generate the scenario stream and run one policy over it."""
    if t_slots < 1:
        raise ValueError("t_slots must be at least 1")
    if not 0 <= warmup_slots <= t_slots:
        raise ValueError("need 0 <= warmup_slots <= t_slots")
    thresholds = np.broadcast_to(
        np.asarray(thresholds, dtype=float), (config.n_users,)
    ).copy()
    rng = None
    if policy.kind == "random":
        rng = np.random.default_rng([config.seed, RANDOM_POLICY_STREAM])
    return run_policy(
        realization_stream(config, t_slots),
        policy,
        thresholds,
        warmup_slots,
        solver=solver,
        rng=rng,
        replication=replication,
        seed=config.seed,
    )


def compute_summary(
    metrics: TraceMetrics,
    benchmarks: tuple[BenchmarkResult, BenchmarkResult] | None = None,
) -> dict:
    """Headline numbers of one run; incentive cost when benchmarks are given.

    avg_welfare averages the post-warmup slots (all slots when the whole run
    is warmup). benchmarks is (unconstrained, constrained).
    """
    t, w = metrics.t_slots, metrics.warmup_slots
    post = metrics.welfare_series[w:] if t > w else metrics.welfare_series
    n = len(metrics.final_ledgers)
    summary = {
        "policy": metrics.policy_label,
        "replication": metrics.replication,
        "seed": metrics.seed,
        "t_slots": t,
        "warmup_slots": w,
        "n_users": n,
        "avg_welfare": float(post.mean()),
        "dropping_fraction": len(metrics.drop_events) / n,
        "min_alloc_prob": min(
            lg.allocation_probability for lg in metrics.final_ledgers
        ),
    }
    if benchmarks is not None:
        unconstrained, constrained = benchmarks
        summary["incentive_cost"] = incentive_cost(unconstrained, constrained)
    return summary
