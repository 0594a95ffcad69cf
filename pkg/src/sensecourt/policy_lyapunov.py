"""Virtual-queue drift-plus-penalty selection.

Each user owns a virtual queue that fills at its threshold rate and drains
when the user is selected; queue stability is equivalent to meeting the
long-run selection-frequency constraint. The per-slot rule maximizes
value - cost + sum(q_n / phi * x_n), which minimizes the standard upper
bound on drift plus phi-weighted negative welfare.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import RegulatedInstance, SolveOptions, solve
from .world import Allocation, SlotRealization, evaluate_allocation

__all__ = [
    "QueueState",
    "lyapunov_allocate",
    "queue_update",
    "penalty_bound_B",
    "drift_plus_penalty_diag",
    "lyapunov_function",
    "lyapunov_drift",
]


@dataclass(frozen=True, eq=False)
class QueueState:
    """Virtual queue backlogs and the stability/welfare trade-off knob phi."""

    backlogs: np.ndarray
    phi: float
    slot_index: int = 1

    def __post_init__(self):
        q = np.array(self.backlogs, dtype=float, copy=True)
        if np.any(q < 0):
            raise ValueError("backlogs must be non-negative")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.slot_index < 1:
            raise ValueError("slot_index starts at 1")
        q.flags.writeable = False
        object.__setattr__(self, "backlogs", q)

    @classmethod
    def initial(cls, n_users: int, phi: float) -> "QueueState":
        return cls(backlogs=np.zeros(n_users), phi=phi)


def lyapunov_allocate(
    state: QueueState,
    realization: SlotRealization,
    eligible: np.ndarray | None = None,
    options: SolveOptions = SolveOptions(),
) -> Allocation:
    """Maximize value - cost + sum(q_n / phi * x_n) over eligible users."""
    kappa = realization.true_costs - state.backlogs / state.phi
    return solve(RegulatedInstance.of(realization, kappa, eligible), options).alloc


def queue_update(state: QueueState, alloc: Allocation, thresholds: np.ndarray) -> QueueState:
    """q <- [q - x]^+ + D, one virtual arrival per slot per user."""
    x = alloc.selected.astype(float)
    q = np.maximum(state.backlogs - x, 0.0) + np.asarray(thresholds, dtype=float)
    return QueueState(backlogs=q, phi=state.phi, slot_index=state.slot_index + 1)


def penalty_bound_B(thresholds: np.ndarray) -> float:
    """The constant B = sum((1 + D_n^2) / 2) of the drift bound."""
    d = np.asarray(thresholds, dtype=float)
    if d.size and (np.any(d < 0) or np.any(d > 1)):
        raise ValueError("thresholds must lie in [0, 1]")
    return float(((1.0 + d * d) / 2.0).sum())


def drift_plus_penalty_diag(
    state: QueueState,
    alloc: Allocation,
    realization: SlotRealization,
    thresholds: np.ndarray,
) -> float:
    """Right-hand side of the drift-plus-penalty upper bound for one allocation.

    Diagnostic only: the allocation rule must minimize this quantity over
    all allocations of the slot.
    """
    d = np.asarray(thresholds, dtype=float)
    x = alloc.selected.astype(float)
    wb = evaluate_allocation(realization, alloc)
    return float(
        penalty_bound_B(d)
        + (state.backlogs * (d - x)).sum()
        - state.phi * wb.welfare
    )


def lyapunov_function(state: QueueState) -> float:
    """J = 0.5 * sum(q_n^2)."""
    return float(0.5 * (state.backlogs * state.backlogs).sum())


def lyapunov_drift(state: QueueState, next_state: QueueState) -> float:
    """Change of the Lyapunov function across one slot."""
    return lyapunov_function(next_state) - lyapunov_function(state)
