"""Stochastic instance generation: mobility, regions, weight fields, costs.

Every random draw comes from a generator keyed by (seed, slot), so a slot
realization is a pure function of the configuration and the mobility state,
and replays are bit-identical. Slot indices are 1-based; stream 0 is
reserved for the initial user placement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .world import GridMap, SensingRegion, SlotRealization, WeightField

__all__ = [
    "ScenarioConfig",
    "MobilityState",
    "slot_rng",
    "initial_state",
    "generate_weight_field",
    "step_mobility",
    "build_slot_realization",
    "realization_stream",
]

WEIGHT_MODES = ("uniform_iid", "hotspot")

# distinct SeedSequence stream for the random-baseline policy inside the engine
RANDOM_POLICY_STREAM = 0x52414E44


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs of the instance distribution.

    cost_to_weight_ratio is the C/W knob: a user's cost is
    C/W * mean_weight * covered-grid-count * jitter, which keeps the ratio
    meaningful per unit of sensed area.
    """

    map: GridMap
    n_users: int
    radius_min_m: float = 400.0
    radius_max_m: float = 800.0
    weight_mode: str = "uniform_iid"
    hotspot_sigma_fraction: float = 0.25
    mean_weight: float = 0.5
    temporal_noise: bool = False
    cost_to_weight_ratio: float = 0.2
    cost_jitter: tuple[float, float] = (0.8, 1.2)
    step_max_m: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("n_users must be at least 1")
        if not 0 <= self.radius_min_m <= self.radius_max_m:
            raise ValueError("need 0 <= radius_min_m <= radius_max_m")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if not self.mean_weight > 0:
            raise ValueError("mean_weight must be positive")
        if self.cost_to_weight_ratio < 0:
            raise ValueError("cost_to_weight_ratio must be non-negative")
        lo, hi = self.cost_jitter
        if not 0 <= lo <= hi:
            raise ValueError("cost_jitter must satisfy 0 <= low <= high")
        if self.step_max_m < 0:
            raise ValueError("step_max_m must be non-negative")
        object.__setattr__(self, "cost_jitter", (float(lo), float(hi)))


@dataclass(frozen=True, eq=False)
class MobilityState:
    """Continuous user positions in meters inside the map rectangle."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (n_users, 2)")
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)


def slot_rng(config: ScenarioConfig, stream: int) -> np.random.Generator:
    """Deterministic generator for one slot (stream = slot index, 1-based)."""
    return np.random.default_rng([config.seed, stream])


def initial_state(config: ScenarioConfig) -> MobilityState:
    rng = slot_rng(config, 0)
    pos = rng.random((config.n_users, 2))
    pos[:, 0] *= config.map.width_m
    pos[:, 1] *= config.map.height_m
    return MobilityState(pos)


def generate_weight_field(
    config: ScenarioConfig, slot: int, rng: np.random.Generator
) -> WeightField:
    """Per-grid weights for one slot.

    uniform_iid: each weight is an independent Uniform(0, 2 * mean_weight)
    draw each slot. hotspot: a static Gaussian bump centered on the map,
    rescaled so the spatial mean equals mean_weight, optionally multiplied
    per slot by i.i.d. Uniform(0.5, 1.5) noise.
    """
    i = config.map.n_grids
    if config.weight_mode == "uniform_iid":
        return WeightField(rng.random(i) * (2.0 * config.mean_weight))
    profile = _hotspot_profile(config)
    if config.temporal_noise:
        profile = profile * rng.uniform(0.5, 1.5, size=i)
    return WeightField(profile)


def _hotspot_profile(config: ScenarioConfig) -> np.ndarray:
    centers = config.map.centers()
    mid = np.array([config.map.width_m / 2.0, config.map.height_m / 2.0])
    sigma = config.hotspot_sigma_fraction * config.map.width_m
    d2 = ((centers - mid) ** 2).sum(axis=1)
    profile = np.exp(-d2 / (2.0 * sigma * sigma))
    return profile * (config.mean_weight / profile.mean())


def step_mobility(
    state: MobilityState, config: ScenarioConfig, rng: np.random.Generator
) -> MobilityState:
    """Jump each user by a uniform-in-disk displacement, reflecting at walls."""
    n = state.positions.shape[0]
    radius = config.step_max_m * np.sqrt(rng.random(n))
    angle = rng.random(n) * (2.0 * np.pi)
    pos = state.positions + np.column_stack(
        [radius * np.cos(angle), radius * np.sin(angle)]
    )
    pos[:, 0] = _reflect(pos[:, 0], config.map.width_m)
    pos[:, 1] = _reflect(pos[:, 1], config.map.height_m)
    return MobilityState(pos)


def _reflect(coords: np.ndarray, length: float) -> np.ndarray:
    folded = np.mod(coords, 2.0 * length)
    return np.where(folded > length, 2.0 * length - folded, folded)


def build_slot_realization(
    state: MobilityState, config: ScenarioConfig, slot: int, rng: np.random.Generator
) -> SlotRealization:
    """Realize one slot: weights, disk sensing regions, proportional costs.

    A grid belongs to a region iff its center lies within the user's radius,
    drawn fresh per slot from Uniform[radius_min_m, radius_max_m].
    """
    weights = generate_weight_field(config, slot, rng)
    n = config.n_users
    centers = config.map.centers()
    radii = rng.uniform(config.radius_min_m, config.radius_max_m, size=n)
    jitter = rng.uniform(config.cost_jitter[0], config.cost_jitter[1], size=n)
    regions = []
    costs = np.zeros(n)
    i = config.map.n_grids
    for u in range(n):
        d2 = (centers[:, 0] - state.positions[u, 0]) ** 2 + (
            centers[:, 1] - state.positions[u, 1]
        ) ** 2
        idx = np.flatnonzero(d2 <= radii[u] * radii[u])
        regions.append(SensingRegion(i, idx))
        costs[u] = (
            config.cost_to_weight_ratio
            * config.mean_weight
            * idx.size
            * jitter[u]
        )
    return SlotRealization(weights=weights, regions=tuple(regions), true_costs=costs)


def realization_stream(config: ScenarioConfig, t_slots: int) -> Iterator[SlotRealization]:
    """Yield slots 1..t_slots; mobility advances after each realized slot."""
    state = initial_state(config)
    for t in range(1, t_slots + 1):
        rng = slot_rng(config, t)
        yield build_slot_realization(state, config, t, rng)
        state = step_mobility(state, config, rng)
