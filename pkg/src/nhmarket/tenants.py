"""Tenant dis-utility model and the optimal RB request it induces.

A tenant with traffic load ``d`` (RBs) facing price ``p`` per RB and buying
``b`` RBs experiences

    U(b; d, p) = (a * max(0, d - b)**gd + (p * b)**gp) ** (1 / gp)

in units of cost. ``optimal_request`` returns the minimiser over ``b >= 0``,
which always lies in ``[0, d]``; the exponent pair selects one of four regimes
with a closed form, and any other pair falls back to bisection on the
stationarity condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Invalid or unsupported tenant configuration."""


REGIMES = ("extreme", "cost_saving", "bounded_backlog", "balanced", "general")


@dataclass(frozen=True)
class TenantProfile:
    a: float
    exponent_d: float = 1.0
    exponent_p: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"dis-utility factor must be positive, got {self.a}")
        if self.exponent_d < 1 or self.exponent_p < 1:
            raise ConfigError("exponents must be >= 1")

    @property
    def regime(self) -> str:
        gd, gp = self.exponent_d, self.exponent_p
        if gd == 1 and gp == 1:
            return "extreme"
        if gd == 1:
            return "cost_saving"
        if gp == 1:
            return "bounded_backlog"
        if gd == gp:
            return "balanced"
        return "general"


@dataclass(frozen=True)
class ProfileSpec:
    """Threshold-based description of a tenant, turned into ``a`` by ``profile_from_spec``."""

    regime: str
    load_threshold: float
    price_threshold: float
    processed_fraction: Optional[float] = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}")
        if self.load_threshold <= 0 or self.price_threshold <= 0:
            raise ConfigError("thresholds must be positive")
        if (self.processed_fraction is not None) != (self.regime == "balanced"):
            raise ConfigError("processed_fraction is required for, and only for, the balanced regime")
        if self.processed_fraction is not None and not 0 < self.processed_fraction < 1:
            raise ConfigError("processed_fraction must lie in (0, 1)")


# Table of evaluation profiles, assigned to tenants cyclically.
BEST_EFFORT = TenantProfile(3.5e8, exponent_d=1, exponent_p=2, label="best_effort")
PRICE_DRIVEN = TenantProfile(2e9, exponent_d=1, exponent_p=2, label="price_driven")
DEMAND_DRIVEN = TenantProfile(0.203, exponent_d=2, exponent_p=1, label="demand_driven")
MEDIUM_QOS = TenantProfile(1.1e5, exponent_d=2, exponent_p=2, label="medium_qos")
DEFAULT_PROFILES = (BEST_EFFORT, PRICE_DRIVEN, DEMAND_DRIVEN, MEDIUM_QOS)
PROFILES_BY_LABEL = {p.label: p for p in DEFAULT_PROFILES}


def cyclic_profiles(num_tenants: int, profiles=DEFAULT_PROFILES) -> list[TenantProfile]:
    return [profiles[i % len(profiles)] for i in range(num_tenants)]


def disutility(b, d, p, profile: TenantProfile):
    """Dis-utility in cost units; vectorises over ``b``."""
    if np.ndim(b) == 0:
        b = float(b)
        backlog = d - b if d > b else 0.0
        inner = profile.a * backlog**profile.exponent_d + (p * b) ** profile.exponent_p
        return inner if profile.exponent_p == 1 else inner ** (1.0 / profile.exponent_p)
    b = np.asarray(b, dtype=float)
    backlog = np.maximum(0.0, d - b)
    gp = profile.exponent_p
    inner = profile.a * backlog**profile.exponent_d + (p * b) ** gp
    out = inner if gp == 1 else inner ** (1.0 / gp)
    return out


def _solve_general(d: float, p: float, profile: TenantProfile) -> float:
    # c * b**k + b = d has a unique root in (0, d); bisect to 1e-6 * d.
    gd, gp, a = profile.exponent_d, profile.exponent_p, profile.a
    log_c = (math.log(gp) + gp * math.log(p) - math.log(gd) - math.log(a)) / (gd - 1)
    k = (gp - 1) / (gd - 1)

    def h(b):
        if b <= 0:
            return -d
        return math.exp(log_c + k * math.log(b)) + b - d

    lo, hi = 0.0, d
    tol = 1e-6 * d
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if h(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_request(d: float, p: float, profile: TenantProfile) -> float:
    """RB count minimising the tenant's dis-utility at load ``d`` and price ``p``."""
    if d < 0 or p < 0:
        raise ValueError("load and price must be non-negative")
    if d == 0:
        return 0.0
    if p == 0:
        return float(d)
    a, gd, gp = profile.a, profile.exponent_d, profile.exponent_p
    regime = profile.regime
    if regime == "extreme":
        # p == a leaves every b in [0, d] optimal; serve the load.
        return float(d) if p <= a else 0.0
    if regime == "cost_saving":
        # load covered entirely while the left derivative at d is non-positive
        if a >= gp * p**gp * d ** (gp - 1):
            return float(d)
        cap = math.exp((math.log(a) - math.log(gp) - gp * math.log(p)) / (gp - 1))
        return min(cap, float(d))
    if regime == "bounded_backlog":
        kept = math.exp((math.log(p) - math.log(a * gd)) / (gd - 1))
        return max(0.0, d - kept)
    if regime == "balanced":
        ratio = math.exp((gd * math.log(p) - math.log(a)) / (gd - 1))
        return d / (1.0 + ratio)
    return _solve_general(d, p, profile)


def brute_force_request(d: float, p: float, profile: TenantProfile, grid_resolution: int = 20001) -> float:
    """Grid minimiser of the dis-utility over ``[0, d]``; the independent check on ``optimal_request``."""
    if grid_resolution < 1000:
        raise ValueError("grid_resolution must be at least 1000")
    if d <= 0:
        return 0.0
    grid = np.linspace(0.0, d, grid_resolution)
    return float(grid[np.argmin(disutility(grid, d, p, profile))])


def profile_from_spec(spec: ProfileSpec, exponents: tuple[float, float], label: str = "") -> TenantProfile:
    """Derive the dis-utility factor from load/price thresholds.

    ``exponents`` is ``(exponent_d, exponent_p)`` and must match the regime.
    """
    gd, gp = exponents
    d0, p0 = spec.load_threshold, spec.price_threshold
    if spec.regime == "extreme" and gd == gp == 1:
        a = p0
    elif spec.regime == "cost_saving" and gd == 1 and gp > 1:
        a = gp * p0**gp * d0 ** (gp - 1)
    elif spec.regime == "bounded_backlog" and gd > 1 and gp == 1:
        a = p0 / (gd * d0 ** (gd - 1))
    elif spec.regime == "balanced" and gd == gp and gd > 1:
        w = spec.processed_fraction
        a = p0**gd * (w / (1 - w)) ** (gd - 1)
    else:
        raise ConfigError(f"no threshold parametrisation for regime {spec.regime!r} with exponents {exponents}")
    return TenantProfile(a, exponent_d=gd, exponent_p=gp, label=label or spec.regime)


def processed_fraction_for(a: float, price_threshold: float, gamma: float) -> float:
    """Invert the balanced-regime parametrisation: fraction of load served at ``price_threshold``."""
    r = (a / price_threshold**gamma) ** (1.0 / (gamma - 1))
    return r / (1.0 + r)


def tenant_act(load: float, price: float, profile: TenantProfile) -> int:
    """Integer RB request: optimal request rounded half-up."""
    return int(math.floor(optimal_request(load, price, profile) + 0.5))


# Exponent pair without a closed form, used to exercise the numeric solver.
GENERAL_EXAMPLE = TenantProfile(2e5, exponent_d=1.5, exponent_p=2, label="general")


@dataclass
class OracleReport:
    samples: int
    failures: int
    worst_excess: float

    @property
    def ok(self) -> bool:
        return self.failures == 0


def oracle_sweep(samples: int = 1000, seed: int = 0, grid_resolution: int = 20001,
                 profiles=DEFAULT_PROFILES + (GENERAL_EXAMPLE,)) -> OracleReport:
    """Compare closed-form requests with the grid minimiser on random (profile, d, p) triples.

    A sample fails when the gap exceeds one grid step plus ``1e-6 * d``.
    """
    rng = np.random.default_rng(seed)
    failures, worst = 0, -math.inf
    for k in range(samples):
        profile = profiles[k % len(profiles)]
        d = float(rng.uniform(0.0, 1e4))
        p = float(rng.uniform(1.0, 2500.0))
        gap = abs(optimal_request(d, p, profile) - brute_force_request(d, p, profile, grid_resolution))
        excess = gap - (d / (grid_resolution - 1) + 1e-6 * d)
        worst = max(worst, excess)
        failures += excess > 0
    return OracleReport(samples, failures, worst)
