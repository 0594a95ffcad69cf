"""Regulated reverse VCG auction for slots with private sensing costs.

Users bid their costs; the platform maximizes coverage value minus
regulated bids (bid minus regulation factor) and pays each winner its
pivot: the realized value, minus the other winners' regulated bids, minus
the best regulated welfare achievable without the winner, plus the
winner's regulation factor. Payments need exact leave-one-out optima, so
auction slots refuse to run when the eligible set exceeds the exact solver
limit rather than quietly breaking truthfulness with approximate pivots.

Scaled by phi, the regulation factors follow exactly the virtual-queue
recursion of the drift-plus-penalty policy, so under truthful bidding the
auction reproduces that policy's allocations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import (
    DEFAULT_EXACT_LIMIT,
    SolverCapacityError,
    RegulatedInstance,
    solve_exact,
    subset_linear_table,
    subset_value_table,
    tiebreak_tables,
    TIE_TOL,
)
from .world import Allocation, SlotRealization

__all__ = [
    "ExactPivotsRequiredError",
    "RegulationState",
    "BidVector",
    "PivotTerms",
    "AuctionOutcome",
    "TruthfulnessReport",
    "pivot_payment",
    "run_auction_slot",
    "regulation_update",
    "truthfulness_sweep",
]


class ExactPivotsRequiredError(RuntimeError):
    """Auction refused: payments require exact leave-one-out solves."""


@dataclass(frozen=True, eq=False)
class RegulationState:
    """Per-user regulation factors r_n; phi * r_n evolves like a virtual queue."""

    factors: np.ndarray
    phi: float
    slot_index: int = 1

    def __post_init__(self):
        r = np.array(self.factors, dtype=float, copy=True)
        if np.any(r < 0):
            raise ValueError("regulation factors must be non-negative")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.slot_index < 1:
            raise ValueError("slot_index starts at 1")
        r.flags.writeable = False
        object.__setattr__(self, "factors", r)

    @classmethod
    def initial(cls, thresholds: np.ndarray, phi: float) -> "RegulationState":
        # one virtual arrival pre-loaded: phi * r0 = D, the backlog a zero
        # queue reaches after its first update
        d = np.asarray(thresholds, dtype=float)
        return cls(factors=d / phi, phi=phi)


@dataclass(frozen=True, eq=False)
class BidVector:
    """Reported per-user costs for one slot."""

    bids: np.ndarray

    def __post_init__(self):
        b = np.array(self.bids, dtype=float, copy=True)
        if b.ndim != 1:
            raise ValueError("bids must be one-dimensional")
        if not np.all(np.isfinite(b)):
            raise ValueError("bids must be finite")
        if np.any(b < 0):
            raise ValueError("bids must be non-negative")
        b.flags.writeable = False
        object.__setattr__(self, "bids", b)

    @property
    def n_users(self) -> int:
        return self.bids.size


@dataclass(frozen=True)
class PivotTerms:
    """Leave-one-out terms behind one winner's payment."""

    user: int
    others_cost: float
    welfare_without: float


@dataclass(frozen=True, eq=False)
class AuctionOutcome:
    alloc: Allocation
    payments: np.ndarray
    regulated_welfare: float
    value_term: float
    per_winner_pivot: tuple[PivotTerms, ...]


@dataclass(frozen=True, eq=False)
class TruthfulnessReport:
    """One user's utility sweep over a bid grid, other bids held truthful."""

    user: int
    bid_grid: np.ndarray
    utilities: np.ndarray
    payments: np.ndarray
    selected: np.ndarray
    truthful_utility: float
    best_bid: float
    best_utility: float
    regret: float
    truthful: bool


def pivot_payment(value_term, others_cost, welfare_without, regulation):
    """Pivot payment: realized value minus others' regulated cost minus the
    best welfare without the winner, plus the winner's regulation factor."""
    return value_term - others_cost - welfare_without + regulation


def _exact_or_refuse(inst: RegulatedInstance, exact_limit: int):
    try:
        return solve_exact(inst, exact_limit)
    except SolverCapacityError as exc:
        raise ExactPivotsRequiredError(
            f"auction requires exact pivots: {exc}"
        ) from exc


def run_auction_slot(
    state: RegulationState,
    realization: SlotRealization,
    bids: BidVector,
    thresholds: np.ndarray,
    eligible: np.ndarray | None = None,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> tuple[AuctionOutcome, RegulationState]:
    """Allocate on regulated bids, pay winners their pivots, update factors."""
    n = realization.n_users
    if bids.n_users != n:
        raise ValueError("bid vector length must match user count")
    if eligible is None:
        eligible = np.ones(n, dtype=bool)
    kappa = bids.bids - state.factors
    inst = RegulatedInstance.of(realization, kappa, eligible)
    result = _exact_or_refuse(inst, exact_limit)

    winners = result.alloc.indices()
    covered = np.zeros(realization.n_grids, dtype=bool)
    for u in winners:
        covered[realization.regions[u].indices] = True
    value_term = float(realization.weights.values[covered].sum())

    payments = np.zeros(n)
    pivots = []
    for u in winners:
        u = int(u)
        others_cost = float(kappa[winners].sum() - kappa[u])
        without = eligible.copy()
        without[u] = False
        welfare_without = _exact_or_refuse(
            RegulatedInstance.of(realization, kappa, without), exact_limit
        ).objective
        payments[u] = pivot_payment(
            value_term, others_cost, welfare_without, float(state.factors[u])
        )
        pivots.append(PivotTerms(u, others_cost, welfare_without))

    outcome = AuctionOutcome(
        alloc=result.alloc,
        payments=payments,
        regulated_welfare=result.objective,
        value_term=value_term,
        per_winner_pivot=tuple(pivots),
    )
    return outcome, regulation_update(state, result.alloc, thresholds)


def regulation_update(
    state: RegulationState, alloc: Allocation, thresholds: np.ndarray
) -> RegulationState:
    """r <- ([phi r - x]^+ + D) / phi, the virtual-queue recursion over phi."""
    x = alloc.selected.astype(float)
    d = np.asarray(thresholds, dtype=float)
    r = (np.maximum(state.phi * state.factors - x, 0.0) + d) / state.phi
    return RegulationState(factors=r, phi=state.phi, slot_index=state.slot_index + 1)


def truthfulness_sweep(
    realization: SlotRealization,
    state: RegulationState,
    true_costs: np.ndarray,
    user: int,
    bid_grid: np.ndarray,
    eligible: np.ndarray | None = None,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
) -> TruthfulnessReport:
    """Utility of every bid in the grid, all other bids held at true costs.

    The sweep is its own oracle: truthfulness means no grid point beats the
    truthful bid's utility by more than the tie tolerance. The leave-one-out
    welfare does not depend on the swept bid, so it is solved once.
    """
    n = realization.n_users
    true_costs = np.asarray(true_costs, dtype=float)
    if true_costs.shape != (n,):
        raise ValueError("true_costs length must match user count")
    if not 0 <= user < n:
        raise IndexError(f"user {user} out of range")
    if eligible is None:
        eligible = np.ones(n, dtype=bool)
    if not eligible[user]:
        raise ValueError("swept user must be eligible")
    bid_grid = np.asarray(bid_grid, dtype=float)

    users = np.flatnonzero(eligible)
    m = users.size
    if m > exact_limit:
        raise ExactPivotsRequiredError(
            f"auction requires exact pivots: {m} eligible users exceed {exact_limit}"
        )
    pos = int(np.flatnonzero(users == user)[0])

    kappa = true_costs - state.factors
    values = subset_value_table(realization, users)
    per_user = kappa[users].copy()
    per_user[pos] = 0.0  # swept user's charge handled per bid
    others_cost = subset_linear_table(per_user)
    member = ((np.arange(1 << m) >> pos) & 1).astype(float)
    r_n = float(state.factors[user])
    c_n = float(true_costs[user])

    without = eligible.copy()
    without[user] = False
    welfare_without = _exact_or_refuse(
        RegulatedInstance.of(realization, kappa, without), exact_limit
    ).objective

    _, _, tb = tiebreak_tables(m)
    big = np.iinfo(np.int64).max

    def evaluate(bid_values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        obj = (values - others_cost)[None, :] - np.outer(bid_values - r_n, member)
        row_best = obj.max(axis=1)
        picks = np.where(obj >= row_best[:, None] - TIE_TOL, tb[None, :], big).argmin(
            axis=1
        )
        sel = member[picks].astype(bool)
        pay = np.where(
            sel,
            pivot_payment(values[picks], others_cost[picks], welfare_without, r_n),
            0.0,
        )
        util = np.where(sel, pay - c_n, 0.0)
        return sel, pay, util

    selected, payments, utilities = evaluate(bid_grid)
    _, _, util_truth = evaluate(np.array([c_n]))
    truthful_utility = float(util_truth[0])

    best_idx = int(utilities.argmax())
    best_utility = float(utilities[best_idx])
    regret = max(best_utility - truthful_utility, 0.0)
    return TruthfulnessReport(
        user=user,
        bid_grid=bid_grid,
        utilities=utilities,
        payments=payments,
        selected=selected,
        truthful_utility=truthful_utility,
        best_bid=float(bid_grid[best_idx]),
        best_utility=best_utility,
        regret=float(regret),
        truthful=bool(regret <= TIE_TOL),
    )
