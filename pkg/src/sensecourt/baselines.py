"""Literature baselines: RADP-VPC virtual credits, greedy, random order."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import RegulatedInstance, SolveOptions, solve, solve_greedy
from .world import Allocation, SlotRealization

__all__ = ["VpcState", "radp_vpc_step", "greedy_baseline_step", "random_baseline_step"]


@dataclass(frozen=True, eq=False)
class VpcState:
    """RADP-VPC virtual credits: losers gain alpha per slot, winners reset to 0."""

    credits: np.ndarray
    alpha: float

    def __post_init__(self):
        v = np.array(self.credits, dtype=float, copy=True)
        if np.any(v < 0):
            raise ValueError("credits must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        v.flags.writeable = False
        object.__setattr__(self, "credits", v)

    @classmethod
    def initial(cls, n_users: int, alpha: float) -> "VpcState":
        return cls(credits=np.zeros(n_users), alpha=alpha)


def radp_vpc_step(
    state: VpcState,
    realization: SlotRealization,
    eligible: np.ndarray | None = None,
    options: SolveOptions = SolveOptions(),
) -> tuple[Allocation, VpcState]:
    """Allocate with credit-discounted costs, then reset or grow credits.

    Only eligible users' credits move; ineligible (dropped) users keep
    theirs frozen.
    """
    if eligible is None:
        eligible = np.ones(realization.n_users, dtype=bool)
    kappa = realization.true_costs - state.credits
    alloc = solve(RegulatedInstance.of(realization, kappa, eligible), options).alloc
    credits = state.credits.copy()
    credits[eligible & alloc.selected] = 0.0
    credits[eligible & ~alloc.selected] += state.alpha
    return alloc, VpcState(credits=credits, alpha=state.alpha)


def greedy_baseline_step(
    realization: SlotRealization, eligible: np.ndarray | None = None
) -> Allocation:
    """Admit users in descending marginal-welfare order while the gain is positive."""
    return solve_greedy(
        RegulatedInstance.of(realization, realization.true_costs, eligible)
    ).alloc


def random_baseline_step(
    realization: SlotRealization,
    eligible: np.ndarray | None,
    rng: np.random.Generator,
) -> Allocation:
    """Admit users in a random order, stopping at the first non-positive gain."""
    if eligible is None:
        eligible = np.ones(realization.n_users, dtype=bool)
    order = rng.permutation(np.flatnonzero(eligible))
    w_rem = realization.weights.values.copy()
    selected = np.zeros(realization.n_users, dtype=bool)
    for u in order:
        u = int(u)
        idx = realization.regions[u].indices
        gain = float(w_rem[idx].sum()) - float(realization.true_costs[u])
        if gain <= 0.0:
            break
        selected[u] = True
        w_rem[idx] = 0.0
    return Allocation(selected)
