"""Market domain types, the proportional allocation rule and the host reward."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class DegenerateEpoch(ValueError):
    """Raised when an epoch has no spectrum to price (n = 0)."""


@dataclass(frozen=True)
class EpochClock:
    """Epoch counter with the epoch -> period-of-day mapping."""

    epochs_per_period: int
    periods_per_day: int = 24
    epoch_index: int = 0

    def __post_init__(self):
        if self.epochs_per_period <= 0 or self.periods_per_day <= 0:
            raise ValueError("epochs_per_period and periods_per_day must be positive")
        if self.epoch_index < 0:
            raise ValueError("epoch_index must be non-negative")

    @property
    def period(self) -> int:
        return (self.epoch_index // self.epochs_per_period) % self.periods_per_day

    def advance(self) -> "EpochClock":
        return EpochClock(self.epochs_per_period, self.periods_per_day, self.epoch_index + 1)


@dataclass(frozen=True)
class PriceBounds:
    p_min: float = 0.0
    p_max: float = 2500.0

    def __post_init__(self):
        if not 0.0 <= self.p_min < self.p_max:
            raise ValueError(f"need 0 <= p_min < p_max, got [{self.p_min}, {self.p_max}]")

    @property
    def width(self) -> float:
        return self.p_max - self.p_min

    def clamp(self, price: float) -> float:
        return min(max(float(price), self.p_min), self.p_max)


@dataclass(frozen=True)
class MarketState:
    """Observation seen by the pricing agent: (previous requests, loads, available RBs)."""

    prev_requests: np.ndarray
    loads: np.ndarray
    available_rbs: int

    def __post_init__(self):
        if len(self.prev_requests) != len(self.loads):
            raise ValueError("prev_requests and loads must be indexed by the same tenant set")

    @classmethod
    def initial(cls, loads, available_rbs: int) -> "MarketState":
        loads = np.asarray(loads, dtype=float)
        return cls(np.zeros_like(loads), loads, int(available_rbs))

    @property
    def num_tenants(self) -> int:
        return len(self.loads)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.prev_requests, self.loads, [float(self.available_rbs)]])


@dataclass(frozen=True)
class RewardConfig:
    """Reward shape parameters and the host's revenue target T(n).

    ``target_fn`` replaces the default linear target ``rb_cost * n`` when a
    different profit aim is wanted.
    """

    sigma: float = 1.0
    delta: float = 1.0
    rb_cost: float = 850.0
    bounds: PriceBounds = field(default_factory=PriceBounds)
    target_fn: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if not self.bounds.p_min <= self.rb_cost <= self.bounds.p_max:
            raise ValueError("rb_cost must lie inside the price bounds")

    def target(self, available_rbs: float) -> float:
        if self.target_fn is not None:
            return float(self.target_fn(available_rbs))
        return self.rb_cost * available_rbs


@dataclass(frozen=True)
class Allocation:
    granted: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.granted))


def allocate(requests, available) -> Allocation:
    """Share ``available`` RBs proportionally to the requests.

    Requests are granted verbatim when they fit; under congestion every tenant
    gets the same fraction ``available / sum(requests)`` of its request.
    """
    nu = np.asarray(requests, dtype=float)
    if np.any(nu < 0) or available < 0:
        raise ValueError("requests and available RBs must be non-negative")
    total = float(np.sum(nu))
    if total <= available:
        return Allocation(nu.copy())
    return Allocation(nu * (available / total))


def mismatch_factor(available, total_requested, sigma: float) -> float:
    """Gaussian penalty on the relative supply/demand mismatch."""
    if available <= 0:
        raise DegenerateEpoch("mismatch is undefined without available RBs")
    x = (available - total_requested) / available
    return math.exp(-(x * x) / (sigma * sigma))


def revenue_factor(actual_revenue: float, target_revenue: float, delta: float) -> float:
    """Power-law penalty on the ratio of actual to target revenue."""
    if target_revenue <= 0:
        raise DegenerateEpoch("revenue target must be positive")
    x = actual_revenue / target_revenue
    if x >= 1.0:
        return (1.0 / x) ** delta
    return x**delta


def reward(state: MarketState, price: float, requests, allocation: Allocation, cfg: RewardConfig) -> float:
    n = state.available_rbs
    if n <= 0:
        return 0.0
    f = mismatch_factor(n, float(np.sum(requests)), cfg.sigma)
    g = revenue_factor(price * allocation.total, cfg.target(n), cfg.delta)
    return f * g
