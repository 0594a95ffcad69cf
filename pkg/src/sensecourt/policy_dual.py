"""Dual-decomposition online selection with subgradient multiplier updates.

Each user carries a non-negative multiplier that acts as a discount on its
cost; the per-slot allocation maximizes coverage value minus discounted
costs. After each slot the multiplier moves against the gap between the
user's running allocation frequency and its threshold, projected at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import RegulatedInstance, SolveOptions, solve
from .world import Allocation, SlotRealization

__all__ = ["StepSchedule", "DualState", "dual_allocate", "dual_update"]


@dataclass(frozen=True)
class StepSchedule:
    """Subgradient step sizes: harmonic(c) gives c/t, constant(eps) gives eps.

    The harmonic schedule is diminishing and non-summable, which is the
    condition under which the multipliers converge; a constant step keeps a
    persistent approximation error.
    """

    kind: str
    coeff: float

    def __post_init__(self):
        if self.kind not in ("harmonic", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.coeff > 0:
            raise ValueError("step coefficient must be positive")

    @classmethod
    def harmonic(cls, c: float = 1.0) -> "StepSchedule":
        return cls("harmonic", c)

    @classmethod
    def constant(cls, eps: float) -> "StepSchedule":
        return cls("constant", eps)

    def step(self, t: int) -> float:
        if t < 1:
            raise ValueError("step index starts at 1")
        if self.kind == "harmonic":
            return self.coeff / t
        return self.coeff


@dataclass(frozen=True, eq=False)
class DualState:
    """Multipliers plus the selection history that feeds their updates."""

    multipliers: np.ndarray
    cumulative_selected: np.ndarray
    slot_index: int
    schedule: StepSchedule

    def __post_init__(self):
        lam = np.array(self.multipliers, dtype=float, copy=True)
        cum = np.array(self.cumulative_selected, dtype=np.int64, copy=True)
        if lam.shape != cum.shape:
            raise ValueError("multipliers and counters must have equal length")
        if np.any(lam < 0):
            raise ValueError("multipliers must be non-negative")
        if self.slot_index < 1:
            raise ValueError("slot_index starts at 1")
        if np.any(cum > self.slot_index - 1):
            raise ValueError("cumulative selections cannot exceed elapsed slots")
        lam.flags.writeable = False
        cum.flags.writeable = False
        object.__setattr__(self, "multipliers", lam)
        object.__setattr__(self, "cumulative_selected", cum)

    @classmethod
    def initial(cls, n_users: int, schedule: StepSchedule | None = None) -> "DualState":
        if schedule is None:
            schedule = StepSchedule.harmonic(1.0)
        return cls(
            multipliers=np.zeros(n_users),
            cumulative_selected=np.zeros(n_users, dtype=np.int64),
            slot_index=1,
            schedule=schedule,
        )


def dual_allocate(
    state: DualState,
    realization: SlotRealization,
    eligible: np.ndarray | None = None,
    options: SolveOptions = SolveOptions(),
) -> Allocation:
    """Maximize value - cost + sum(multiplier * x) over eligible users."""
    kappa = realization.true_costs - state.multipliers
    return solve(RegulatedInstance.of(realization, kappa, eligible), options).alloc


def dual_update(state: DualState, alloc: Allocation, thresholds: np.ndarray) -> DualState:
    """Projected subgradient step against the running allocation frequency.

    The frequency includes the slot just allocated, so at slot t the noisy
    subgradient is (1/t) * selections(1..t) - threshold.
    """
    t = state.slot_index
    x = alloc.selected.astype(np.int64)
    cum = state.cumulative_selected + x
    dbar = cum / t
    eps = state.schedule.step(t)
    lam = np.maximum(state.multipliers - eps * (dbar - np.asarray(thresholds, dtype=float)), 0.0)
    return DualState(
        multipliers=lam,
        cumulative_selected=cum,
        slot_index=t + 1,
        schedule=state.schedule,
    )
