"""Neutral-host shared-spectrum pricing market simulator."""

from .core import (
    Allocation,
    DegenerateEpoch,
    EpochClock,
    MarketState,
    PriceBounds,
    RewardConfig,
    allocate,
    mismatch_factor,
    revenue_factor,
    reward,
)
from .tenants import (
    DEFAULT_PROFILES,
    ConfigError,
    ProfileSpec,
    TenantProfile,
    brute_force_request,
    disutility,
    optimal_request,
    profile_from_spec,
    tenant_act,
)

__version__ = "0.1.0"
