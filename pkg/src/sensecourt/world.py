"""Grid world primitives: sensing regions, slot realizations, welfare accounting.

The sensing area is a rectangle of square grids indexed row-major. A slot
realization bundles everything a selection policy sees in one time slot:
per-grid data values, per-user sensing regions, per-user true sensing costs.
Coverage value counts every grid once no matter how many selected users
sense it, which is what makes the per-slot selection problem a weighted
set-cover style profit maximization rather than a plain sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

__all__ = [
    "GridMap",
    "WeightField",
    "SensingRegion",
    "SlotRealization",
    "Allocation",
    "WelfareBreakdown",
    "compute_coverage",
    "user_value",
    "evaluate_allocation",
]


def _frozen_float_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridMap:
    """Rectangular sensing area of width x height square grids.

    Grid index g corresponds to row g // width_grids and column
    g % width_grids; grid 0 sits in the corner at the coordinate origin.
    """

    width_grids: int
    height_grids: int
    grid_edge_m: float

    def __post_init__(self):
        if self.width_grids <= 0 or self.height_grids <= 0:
            raise ValueError("grid dimensions must be positive")
        if not self.grid_edge_m > 0:
            raise ValueError("grid_edge_m must be positive")

    @property
    def n_grids(self) -> int:
        return self.width_grids * self.height_grids

    @property
    def width_m(self) -> float:
        return self.width_grids * self.grid_edge_m

    @property
    def height_m(self) -> float:
        return self.height_grids * self.grid_edge_m

    def centers(self) -> np.ndarray:
        """(n_grids, 2) array of grid-center coordinates in meters."""
        cols = np.arange(self.width_grids, dtype=float)
        rows = np.arange(self.height_grids, dtype=float)
        xs = (cols + 0.5) * self.grid_edge_m
        ys = (rows + 0.5) * self.grid_edge_m
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True, eq=False)
class WeightField:
    """Per-grid data values for one slot. Non-negative and finite."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_float_array(self.values, "weights")
        if not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        if np.any(arr < 0):
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "values", arr)

    @property
    def n_grids(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class SensingRegion:
    """Set of grid indices a user can sense in one slot.

    Stored as a sorted index array plus a lazily built bit mask (one bit per
    grid), so set unions in the solvers are single big-int ORs. An empty
    region is legal: it models a user outside the sensing area.
    """

    n_grids: int
    indices: np.ndarray

    def __post_init__(self):
        if self.n_grids <= 0:
            raise ValueError("n_grids must be positive")
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.n_grids):
            raise ValueError("region index out of range")
        idx.flags.writeable = False
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_indices(cls, n_grids: int, indices: Iterable[int]) -> "SensingRegion":
        return cls(n_grids, np.fromiter(indices, dtype=np.int64))

    @classmethod
    def empty(cls, n_grids: int) -> "SensingRegion":
        return cls(n_grids, np.empty(0, dtype=np.int64))

    @cached_property
    def mask(self) -> int:
        m = 0
        for i in self.indices.tolist():
            m |= 1 << i
        return m

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def covers(self, grid: int) -> bool:
        pos = np.searchsorted(self.indices, grid)
        return pos < self.indices.size and self.indices[pos] == grid


@dataclass(frozen=True, eq=False)
class SlotRealization:
    """One slot's network information: weights, regions, true costs."""

    weights: WeightField
    regions: tuple[SensingRegion, ...]
    true_costs: np.ndarray

    def __post_init__(self):
        regions = tuple(self.regions)
        costs = _frozen_float_array(self.true_costs, "true_costs")
        if len(regions) != costs.size:
            raise ValueError("regions and true_costs must have the same length")
        for r in regions:
            if r.n_grids != self.weights.n_grids:
                raise ValueError("region capacity does not match weight field")
        if not np.all(np.isfinite(costs)):
            raise ValueError("costs must be finite")
        if np.any(costs < 0):
            raise ValueError("costs must be non-negative")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "true_costs", costs)

    @property
    def n_users(self) -> int:
        return len(self.regions)

    @property
    def n_grids(self) -> int:
        return self.weights.n_grids


@dataclass(frozen=True, eq=False)
class Allocation:
    """Boolean selection vector over users for one slot."""

    selected: np.ndarray

    def __post_init__(self):
        sel = np.array(self.selected, dtype=bool, copy=True)
        if sel.ndim != 1:
            raise ValueError("selection vector must be one-dimensional")
        sel.flags.writeable = False
        object.__setattr__(self, "selected", sel)

    @classmethod
    def none(cls, n_users: int) -> "Allocation":
        return cls(np.zeros(n_users, dtype=bool))

    @classmethod
    def of(cls, n_users: int, users: Iterable[int]) -> "Allocation":
        sel = np.zeros(n_users, dtype=bool)
        for u in users:
            sel[u] = True
        return cls(sel)

    @property
    def n_users(self) -> int:
        return self.selected.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.selected)


@dataclass(frozen=True)
class WelfareBreakdown:
    """Per-slot welfare decomposition: value minus cost plus the covered set."""

    value: float
    cost: float
    welfare: float
    covered: frozenset[int]


def _check_dims(realization: SlotRealization, alloc: Allocation) -> None:
    if alloc.n_users != realization.n_users:
        raise ValueError(
            f"allocation has {alloc.n_users} users, realization has {realization.n_users}"
        )


def compute_coverage(realization: SlotRealization, alloc: Allocation) -> frozenset[int]:
    """Union of the sensing regions of all selected users."""
    _check_dims(realization, alloc)
    cov = np.zeros(realization.n_grids, dtype=bool)
    for u in alloc.indices():
        cov[realization.regions[u].indices] = True
    return frozenset(np.flatnonzero(cov).tolist())


def user_value(realization: SlotRealization, user: int) -> float:
    """Standalone sensing value of one user: sum of weights over its region."""
    if not 0 <= user < realization.n_users:
        raise IndexError(f"user {user} out of range for {realization.n_users} users")
    region = realization.regions[user]
    return float(realization.weights.values[region.indices].sum())


def evaluate_allocation(realization: SlotRealization, alloc: Allocation) -> WelfareBreakdown:
    """Value, cost, and welfare of an allocation against true costs.

    Value counts each covered grid once; cost is the plain sum of selected
    users' costs; welfare is their difference.
    """
    _check_dims(realization, alloc)
    cov = np.zeros(realization.n_grids, dtype=bool)
    for u in alloc.indices():
        cov[realization.regions[u].indices] = True
    value = float(realization.weights.values[cov].sum())
    cost = float(realization.true_costs[alloc.selected].sum())
    return WelfareBreakdown(
        value=value,
        cost=cost,
        welfare=value - cost,
        covered=frozenset(np.flatnonzero(cov).tolist()),
    )
