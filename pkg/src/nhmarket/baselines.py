"""Comparison schemes: static prices, myopic optimiser, distributed pricing, load-proportional split."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Allocation, PriceBounds, allocate
from .tenants import TenantProfile, disutility, optimal_request

STATIC_LEVELS = {"low": 1 / 8, "med_l": 3 / 8, "med_h": 5 / 8, "high": 7 / 8}


def static_price(level: str, bounds: PriceBounds = PriceBounds()) -> float:
    try:
        return STATIC_LEVELS[level] * bounds.p_max
    except KeyError:
        raise ValueError(f"unknown static level {level!r}; choose from {sorted(STATIC_LEVELS)}") from None


def proportional_allocation(loads, available) -> Allocation:
    """Split RBs in proportion to tenant loads, ignoring price."""
    return allocate(loads, available)


@dataclass
class DistributedPriceState:
    """Iterative congestion pricing; ``reserve=None`` is the no-reserve variant."""

    price: float
    step_size: float
    reserve: Optional[float] = None
    p_max: float = math.inf

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        self.price = min(max(self.price, self.floor), self.p_max)

    @property
    def floor(self) -> float:
        return max(0.0, self.reserve or 0.0)


def distributed_price_update(state: DistributedPriceState, total_demand: float, available: float) -> float:
    """Move the price along excess demand, never below the floor."""
    p = state.price + state.step_size * (total_demand - available)
    state.price = min(max(p, state.floor), state.p_max)
    return state.price


# -- myopic scheme ---------------------------------------------------------


@dataclass
class MyopicSolution:
    price: float
    requests: np.ndarray
    objective: float
    feasible: bool = True


def _total_disutility(nu, loads, price, profiles) -> float:
    return float(sum(disutility(nu[i], loads[i], price, p) for i, p in enumerate(profiles)))


def _split(total, lo, hi, loads, price, profiles, grid=400, sweeps=2):
    """Minimise sum_i U_i(nu_i) subject to sum(nu) = total and lo <= nu <= hi.

    The per-tenant dis-utility is not convex everywhere (cost-saving tenants
    with small loads), so a grid DP finds the basin and a pairwise
    golden-section pass polishes it.
    """
    lo = np.asarray(lo, dtype=float)
    cap = np.maximum(np.asarray(hi, dtype=float) - lo, 0.0)
    rest = total - lo.sum()
    num = len(lo)

    def f(i, x):
        return disutility(lo[i] + x, loads[i], price, profiles[i])

    if rest <= 0 or num == 1:
        x = np.minimum(cap, max(rest, 0.0))
        return lo + x
    h = rest / grid
    counts = np.floor(cap / h + 1e-9).astype(int).clip(max=grid)
    if counts.sum() >= grid:
        best = np.full(grid + 1, np.inf)
        best[: counts[0] + 1] = f(0, np.arange(counts[0] + 1) * h)
        choice = []
        for i in range(1, num):
            vals = f(i, np.arange(counts[i] + 1) * h)
            # cand[s, k]: use k steps for tenant i, s - k for the ones before
            s = np.arange(grid + 1)[:, None]
            k = np.arange(counts[i] + 1)[None, :]
            prev = np.where(s - k >= 0, best[np.clip(s - k, 0, grid)], np.inf)
            cand = prev + vals[None, :]
            choice.append(np.argmin(cand, axis=1))
            best = cand[np.arange(grid + 1), choice[-1]]
        steps = np.zeros(num, dtype=int)
        s = grid
        for i in range(num - 1, 0, -1):
            steps[i] = choice[i - 1][s]
            s -= steps[i]
        steps[0] = s
        x = steps * h
    else:
        x = cap * (rest / cap.sum())

    x = np.minimum(x, cap)
    x[np.argmax(cap - x)] += rest - x.sum()
    invphi = (math.sqrt(5) - 1) / 2
    for _ in range(sweeps):
        for i in range(num):
            for j in range(i + 1, num):
                # move m from j to i
                m_lo = max(-x[i], x[j] - cap[j], -2 * h)
                m_hi = min(cap[i] - x[i], x[j], 2 * h)
                if m_hi - m_lo <= 1e-12:
                    continue
                xi, xj = x[i], x[j]

                def g(m):
                    return f(i, xi + m) + f(j, xj - m)

                a, b = m_lo, m_hi
                c, d = b - invphi * (b - a), a + invphi * (b - a)
                gc, gd = g(c), g(d)
                for _ in range(40):
                    if gc < gd:
                        b, d, gd = d, c, gc
                        c = b - invphi * (b - a)
                        gc = g(c)
                    else:
                        a, c, gc = c, d, gd
                        d = a + invphi * (b - a)
                        gd = g(d)
                m = 0.5 * (a + b)
                candidates = [(g(0.0), 0.0), (g(m), m), (g(m_lo), m_lo), (g(m_hi), m_hi)]
                _, m = min(candidates)
                x[i], x[j] = xi + m, xj - m
    return lo + x


def myopic_price_and_requests(
    loads: Sequence[float],
    profiles: Sequence[TenantProfile],
    available: float,
    target: float,
    bounds: PriceBounds = PriceBounds(),
) -> MyopicSolution:
    """Price and purchases minimising total dis-utility with revenue >= target and sum <= available.

    The optimal total dis-utility is nondecreasing in the price above the
    lowest feasible price ``target / available``, so that price is optimal.
    When the loads fit the spectrum the objective is flat (equal to the
    target) up to ``target / sum(loads)``; the highest price in that range is
    chosen, which forces the least surplus purchase.
    """
    if len(profiles) == 0:
        raise ValueError("myopic pricing needs at least one tenant")
    d = np.asarray(loads, dtype=float)
    n = float(available)
    num = len(d)
    if n <= 0:
        nu = np.zeros(num)
        return MyopicSolution(bounds.p_min, nu, _total_disutility(nu, d, bounds.p_min, profiles), target <= 0)

    p_lo = max(bounds.p_min, target / n)
    feasible = p_lo <= bounds.p_max
    if not feasible:
        p = bounds.p_max
        nu = _split(n, np.zeros(num), d, d, p, profiles)
        return MyopicSolution(p, nu, _total_disutility(nu, d, p, profiles), False)

    total_load = d.sum()
    if total_load <= n and (total_load <= 0 or bounds.p_min * total_load <= target):
        p = bounds.p_max if total_load <= 0 else min(bounds.p_max, target / total_load)
        need = target / p if p > 0 else 0.0
        if need > total_load:
            extra = need - total_load
            share = d / total_load if total_load > 0 else np.full(num, 1.0 / num)
            nu = d + extra * share
        else:
            nu = d.copy()
        p = _cover_target(p, nu, target, bounds, n)
        return MyopicSolution(p, nu, _total_disutility(nu, d, p, profiles))

    p = p_lo
    b = np.array([optimal_request(d[i], p, prof) for i, prof in enumerate(profiles)])
    s_lo, s_hi = (target / p if p > 0 else 0.0), n
    if s_lo <= b.sum() <= s_hi:
        nu = b
    elif b.sum() > s_hi:
        nu = _split(s_hi, np.zeros(num), b, d, p, profiles)
    elif s_lo >= total_load:
        share = d / total_load
        nu = d + (s_lo - total_load) * share
    else:
        nu = _split(s_lo, b, d, d, p, profiles)
    p = _cover_target(p, nu, target, bounds, n)
    return MyopicSolution(p, nu, _total_disutility(nu, d, p, profiles))


def _cover_target(price, nu, target, bounds, available):
    # absorb rounding so that sum(nu) <= available and price * sum(nu) >= target hold in floating point
    total = float(np.sum(nu))
    while total > available:
        k = int(np.argmax(nu))
        nu[k] = max(0.0, float(np.nextafter(nu[k] - (total - available), -math.inf)))
        total = float(np.sum(nu))
    while total > 0 and price * total < target and price < bounds.p_max:
        price = min(float(np.nextafter(max(price, target / total), math.inf)), bounds.p_max)
    k = int(np.argmax(nu)) if len(nu) else 0
    while total > 0 and price * total < target:
        nu[k] = np.nextafter(nu[k] + (target / price - total), math.inf)
        total = float(np.sum(nu))
    return price
