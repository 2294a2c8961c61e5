"""Epoch loop of the shared-spectrum market.

Each step announces a price to every tenant, collects their RB requests,
allocates the available RBs, serves backlogged traffic and samples the next
epoch's arrivals and spectrum from a daily profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Allocation, EpochClock, MarketState, RewardConfig, allocate, reward
from .tenants import ConfigError, TenantProfile, disutility, tenant_act

# LTE channel bandwidth (MHz) -> PRBs per 1 ms subframe
PRBS_PER_MHZ = {0: 0, 1.4: 6, 3: 15, 5: 25, 10: 50, 15: 75, 20: 100}
EPOCH_MS = 30
# 5 MHz SISO peaks at 16 Mbit/s over 25 PRBs per ms
BITS_PER_RB = 640.0


def rbs_per_epoch(mhz: float, epoch_ms: float = EPOCH_MS) -> int:
    for bw, prbs in PRBS_PER_MHZ.items():
        if abs(bw - mhz) < 1e-9:
            return int(round(prbs * epoch_ms))
    raise ConfigError(f"unsupported channel bandwidth {mhz} MHz (use one of {sorted(PRBS_PER_MHZ)})")


# Default day for an entertainment-area cell. Illustrative configuration, not
# measured data: quiet 1am-10am, busy noon-6pm with offered load just under
# the 5 MHz capacity (about 16 Mbit/s aggregate), spectrum surplus 6pm-9pm.
# (hour, mean arrivals per tenant in RBs/epoch, shared spectrum MHz)
DEFAULT_DAY = (
    (0, 90, 3), (1, 60, 3), (2, 40, 1.4), (3, 30, 1.4), (4, 25, 1.4), (5, 25, 1.4),
    (6, 30, 1.4), (7, 40, 3), (8, 60, 3), (9, 90, 5), (10, 120, 5), (11, 150, 5),
    (12, 170, 5), (13, 175, 5), (14, 180, 5), (15, 180, 5), (16, 175, 5), (17, 170, 5),
    (18, 170, 10), (19, 160, 10), (20, 150, 10), (21, 140, 5), (22, 120, 5), (23, 100, 3),
)
# Single congested hour: offered load a third above the 5 MHz capacity.
CONGESTED_HOUR = ((0, 250, 5),)
DEFAULT_LOAD_CV = 0.1


@dataclass(frozen=True)
class DailyProfile:
    """Per-period arrival statistics (RBs/epoch, one column per tenant) and spectrum (RBs/epoch)."""

    load_mean: np.ndarray
    load_std: np.ndarray
    spectrum: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.load_mean, dtype=float))
        std = np.atleast_2d(np.asarray(self.load_std, dtype=float))
        spec = np.asarray(self.spectrum)
        if mean.shape != std.shape or mean.shape[0] != spec.shape[0]:
            raise ConfigError("profile vectors must all have one row per period")
        if np.any(mean < 0) or np.any(std < 0) or np.any(spec < 0):
            raise ConfigError("profile entries must be non-negative")
        object.__setattr__(self, "load_mean", mean)
        object.__setattr__(self, "load_std", std)
        object.__setattr__(self, "spectrum", spec.astype(int))

    @property
    def periods(self) -> int:
        return self.spectrum.shape[0]

    @property
    def num_tenants(self) -> int:
        return self.load_mean.shape[1]

    @classmethod
    def from_rows(cls, rows, num_tenants: int, cv: float = DEFAULT_LOAD_CV, epoch_ms: float = EPOCH_MS):
        """Build from ``(hour, mean, mhz)`` or ``(hour, means, stds, mhz)`` rows.

        A scalar mean is shared by all tenants and gets a std of ``cv * mean``.
        """
        means, stds, spectrum = [], [], []
        for row in sorted(rows, key=lambda r: r[0]):
            if len(row) == 3:
                _, m, mhz = row
                m = np.full(num_tenants, float(m))
                s = cv * m
            elif len(row) == 4:
                _, m, s, mhz = row
                m = np.broadcast_to(np.asarray(m, dtype=float), (num_tenants,)).copy()
                s = np.broadcast_to(np.asarray(s, dtype=float), (num_tenants,)).copy()
            else:
                raise ConfigError(f"malformed profile row {row!r}")
            means.append(m)
            stds.append(s)
            spectrum.append(rbs_per_epoch(mhz, epoch_ms))
        return cls(np.array(means), np.array(stds), np.array(spectrum))

    @classmethod
    def default(cls, num_tenants: int = 4) -> "DailyProfile":
        return cls.from_rows(DEFAULT_DAY, num_tenants)


def sample_arrivals(profile: DailyProfile, clock: EpochClock, rng: np.random.Generator) -> np.ndarray:
    h = clock.period % profile.periods
    return np.maximum(0.0, rng.normal(profile.load_mean[h], profile.load_std[h]))


def sample_spectrum(profile: DailyProfile, clock: EpochClock) -> int:
    return int(profile.spectrum[clock.period % profile.periods])


@dataclass
class QueueState:
    """Unserved demand per tenant, optionally bounded by a transmission buffer size."""

    backlog: np.ndarray
    capacity: Optional[float] = None

    def loads(self, arrivals: np.ndarray) -> np.ndarray:
        return self.backlog + arrivals

    def serve(self, loads: np.ndarray, granted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Serve ``min(granted, load)`` per tenant; returns (served, dropped)."""
        served = np.minimum(granted, loads)
        left = loads - served
        dropped = np.zeros_like(left)
        if self.capacity is not None:
            dropped = np.maximum(0.0, left - self.capacity)
            left = left - dropped
        self.backlog = left
        return served, dropped


@dataclass
class MessageLedger:
    announcements: int = 0
    requests: int = 0
    grants: int = 0
    epochs: int = 0
    last_epoch: tuple = (0, 0, 0)

    def record(self, announcements: int, requests: int, grants: int):
        self.announcements += announcements
        self.requests += requests
        self.grants += grants
        self.epochs += 1
        self.last_epoch = (announcements, requests, grants)

    @property
    def total(self) -> int:
        return self.announcements + self.requests + self.grants


@dataclass
class EpochRecord:
    t: int
    period: int
    price: float
    available_rbs: int
    reward: float
    revenue: float
    target: float
    arrivals: np.ndarray
    loads: np.ndarray
    requests: np.ndarray
    allocations: np.ndarray
    served: np.ndarray
    disutility: np.ndarray
    messages: int = 0

    @property
    def mismatch(self) -> float:
        """Available minus requested RBs; positive means under-utilisation."""
        return self.available_rbs - float(np.sum(self.requests))

    @property
    def num_tenants(self) -> int:
        return len(self.loads)


@dataclass
class SpectrumMarket:
    """Shared small cell with a fixed tenant set driven by a daily profile."""

    tenants: Sequence[TenantProfile]
    daily: DailyProfile
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)
    epochs_per_period: int = 120_000
    seed: int = 0
    buffer_limit: Optional[float] = None
    start_epoch: int = 0

    def __post_init__(self):
        if len(self.tenants) == 0:
            raise ConfigError("tenant set must be non-empty")
        if self.daily.num_tenants != len(self.tenants):
            raise ConfigError(
                f"daily profile has {self.daily.num_tenants} tenant columns, tenant set has {len(self.tenants)}"
            )
        self.reset()

    def reset(self) -> MarketState:
        self.rng = np.random.default_rng(self.seed)
        self.clock = EpochClock(self.epochs_per_period, self.daily.periods, self.start_epoch)
        self.queues = QueueState(np.zeros(len(self.tenants)), self.buffer_limit)
        self.ledger = MessageLedger()
        self.arrivals = sample_arrivals(self.daily, self.clock, self.rng)
        self.state = MarketState.initial(self.queues.loads(self.arrivals), sample_spectrum(self.daily, self.clock))
        return self.state

    def collect_requests(self, price: float, unresponsive=()) -> tuple[np.ndarray, np.ndarray]:
        """Ask every tenant for its request; silent tenants count as an empty request."""
        loads = self.state.loads
        responded = np.ones(len(self.tenants), dtype=bool)
        nu = np.zeros(len(self.tenants))
        for i, profile in enumerate(self.tenants):
            if i in unresponsive:
                responded[i] = False
                continue
            nu[i] = tenant_act(loads[i], price, profile)
        return nu, responded

    def step(self, price: float, requests=None, allocation=None, unresponsive=()):
        """Run one epoch at ``price``.

        ``requests`` / ``allocation`` let a baseline dictate the tenants'
        purchases or the split of RBs instead of the tenants' own responses
        and the proportional rule.
        """
        state = self.state
        n = state.available_rbs
        num = len(self.tenants)
        if requests is None:
            nu, responded = self.collect_requests(price, unresponsive)
        else:
            nu = np.asarray(requests, dtype=float)
            responded = np.ones(num, dtype=bool)
            responded[list(unresponsive)] = False
            nu = np.where(responded, nu, 0.0)
        granted = allocate(nu, n) if allocation is None else Allocation(np.asarray(allocation, dtype=float))
        replies = int(responded.sum())
        self.ledger.record(num, replies, replies)

        r = reward(state, price, nu, granted, self.reward_cfg)
        revenue = price * granted.total
        served, _ = self.queues.serve(state.loads, granted.granted)
        du = np.array([disutility(granted.granted[i], state.loads[i], price, p) for i, p in enumerate(self.tenants)])
        record = EpochRecord(
            t=self.clock.epoch_index,
            period=self.clock.period,
            price=float(price),
            available_rbs=n,
            reward=r,
            revenue=revenue,
            target=self.reward_cfg.target(n),
            arrivals=self.arrivals,
            loads=state.loads,
            requests=nu,
            allocations=granted.granted,
            served=served,
            disutility=du,
            messages=num + 2 * replies,
        )

        self.clock = self.clock.advance()
        self.arrivals = sample_arrivals(self.daily, self.clock, self.rng)
        self.state = MarketState(nu, self.queues.loads(self.arrivals), sample_spectrum(self.daily, self.clock))
        return self.state, r, record
