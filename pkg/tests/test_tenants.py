import math

import numpy as np
import pytest

from nhmarket.tenants import (
    BEST_EFFORT,
    DEMAND_DRIVEN,
    GENERAL_EXAMPLE,
    MEDIUM_QOS,
    PRICE_DRIVEN,
    ConfigError,
    ProfileSpec,
    TenantProfile,
    brute_force_request,
    disutility,
    optimal_request,
    processed_fraction_for,
    profile_from_spec,
    tenant_act,
)

TABLE = (BEST_EFFORT, PRICE_DRIVEN, DEMAND_DRIVEN, MEDIUM_QOS)


def ternary_min(f, lo, hi, iters=200):
    for _ in range(iters):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return 0.5 * (lo + hi)


def test_disutility_examples():
    assert disutility(7.0, 7.0, 3.0, PRICE_DRIVEN) == pytest.approx(21.0)
    assert disutility(0.0, 5.0, 3.0, PRICE_DRIVEN) == pytest.approx(math.sqrt(2e9 * 5))
    assert disutility(500.0, 1000.0, 1000.0, PRICE_DRIVEN) == pytest.approx(math.sqrt(1e12 + 2.5e11))
    assert disutility(500.0, 1000.0, 1000.0, PRICE_DRIVEN) == pytest.approx(1.1180e6, rel=1e-4)


def test_disutility_vectorises():
    b = np.array([0.0, 100.0, 500.0])
    out = disutility(b, 400.0, 900.0, MEDIUM_QOS)
    assert out.shape == (3,)
    for v, bi in zip(out, b):
        assert v == pytest.approx(disutility(float(bi), 400.0, 900.0, MEDIUM_QOS))


def test_optimal_request_examples():
    # closed form a / (2 p^2) checked against a ternary search
    b = optimal_request(5000, 1000, PRICE_DRIVEN)
    assert b == pytest.approx(1000.0)
    assert b == pytest.approx(ternary_min(lambda x: disutility(x, 5000, 1000, PRICE_DRIVEN), 0, 5000), abs=1e-3)
    assert optimal_request(6000, 2436, DEMAND_DRIVEN) == 0.0
    b = optimal_request(1000, 600, MEDIUM_QOS)
    assert b == pytest.approx(1000 / (1 + 360000 / 110000))
    assert b == pytest.approx(234.04, abs=0.01)
    assert b == pytest.approx(ternary_min(lambda x: disutility(x, 1000, 600, MEDIUM_QOS), 0, 1000), abs=1e-3)
    for prof in TABLE + (GENERAL_EXAMPLE,):
        assert optimal_request(0, 1000, prof) == 0.0
        assert optimal_request(321, 0, prof) == 321.0


def test_extreme_regime_step():
    prof = TenantProfile(500.0, 1, 1)
    assert prof.regime == "extreme"
    assert optimal_request(80, 400, prof) == 80
    assert optimal_request(80, 500, prof) == 80
    assert optimal_request(80, 600, prof) == 0


def test_general_regime_solver():
    prof = GENERAL_EXAMPLE
    assert prof.regime == "general"
    for d, p in [(100, 50), (3000, 800), (9000, 2400)]:
        b = optimal_request(d, p, prof)
        ref = ternary_min(lambda x: disutility(x, d, p, prof), 0, d)
        assert abs(b - ref) <= 1e-6 * d + 1e-6


def test_brute_force_examples():
    assert brute_force_request(0, 1000, PRICE_DRIVEN) == 0.0
    assert brute_force_request(5000, 2500, BEST_EFFORT) == pytest.approx(28.0, abs=5000 / 20000)
    assert optimal_request(5000, 2500, BEST_EFFORT) == pytest.approx(28.0)
    with pytest.raises(ValueError):
        brute_force_request(10, 10, PRICE_DRIVEN, grid_resolution=999)


def test_tenant_act_examples():
    assert tenant_act(0, 1000, MEDIUM_QOS) == 0
    assert tenant_act(1000, 600, MEDIUM_QOS) == 234
    assert tenant_act(7000, 100, DEMAND_DRIVEN) == 7000 - round(100 / 0.406)
    assert tenant_act(7000, 100, DEMAND_DRIVEN) == 6754


def test_tenant_act_rounds_half_up():
    # extreme tenant with p < a requests the load verbatim
    prof = TenantProfile(10.0, 1, 1)
    assert tenant_act(2.5, 1.0, prof) == 3
    assert tenant_act(3.5, 1.0, prof) == 4
    assert tenant_act(2.49, 1.0, prof) == 2


def test_profile_from_spec_table_values():
    p2 = profile_from_spec(ProfileSpec("cost_saving", 1000, 1000), (1, 2))
    assert p2.a == 2e9
    p3 = profile_from_spec(ProfileSpec("bounded_backlog", 6000, 2436), (2, 1))
    assert p3.a == 0.203
    p4 = profile_from_spec(ProfileSpec("balanced", 1, 600, processed_fraction=processed_fraction_for(1.1e5, 600, 2)), (2, 2))
    assert p4.a == pytest.approx(1.1e5)
    assert profile_from_spec(ProfileSpec("extreme", 10, 700), (1, 1)).a == 700


def test_balanced_fraction_inversion():
    w = processed_fraction_for(1.1e5, 600, 2)
    assert w == pytest.approx(0.2340, abs=1e-4)
    assert optimal_request(1000, 600, MEDIUM_QOS) / 1000 == pytest.approx(w)


def test_best_effort_threshold_discrepancy():
    from_thresholds = profile_from_spec(ProfileSpec("cost_saving", 1750, 100), (1, 2))
    assert from_thresholds.a == pytest.approx(3.5e7)
    assert BEST_EFFORT.a == 3.5e8
    assert BEST_EFFORT.a / from_thresholds.a == pytest.approx(10.0)


def test_profile_spec_validation():
    with pytest.raises(ConfigError):
        ProfileSpec("nonsense", 1, 1)
    with pytest.raises(ConfigError):
        ProfileSpec("balanced", 1, 1)
    with pytest.raises(ConfigError):
        ProfileSpec("cost_saving", 1, 1, processed_fraction=0.5)
    with pytest.raises(ConfigError):
        profile_from_spec(ProfileSpec("general", 1, 1), (2, 3))
    with pytest.raises(ConfigError):
        profile_from_spec(ProfileSpec("cost_saving", 1, 1), (2, 2))
    with pytest.raises(ConfigError):
        TenantProfile(0.0)
    with pytest.raises(ConfigError):
        TenantProfile(1.0, exponent_d=0.5)


def test_cost_saving_threshold_exact():
    d0, p0 = 1000.0, 1000.0
    prof = profile_from_spec(ProfileSpec("cost_saving", d0, p0), (1, 2))
    for d in np.linspace(1, d0, 50):
        assert optimal_request(float(d), p0, prof) == float(d)
    assert optimal_request(d0 * 1.5, p0, prof) < d0 * 1.5


def test_request_range_and_price_monotonicity():
    rng = np.random.default_rng(3)
    for prof in TABLE + (GENERAL_EXAMPLE,):
        for _ in range(60):
            d = float(rng.uniform(0, 1e4))
            prices = np.sort(rng.uniform(1, 2500, 8))
            bs = [optimal_request(d, float(p), prof) for p in prices]
            assert all(0.0 <= b <= d for b in bs)
            assert all(b2 <= b1 + 1e-9 * max(d, 1) for b1, b2 in zip(bs, bs[1:]))


def test_regime_limits_approach_extreme_step():
    a = 1000.0
    near_cost = TenantProfile(a, exponent_d=1, exponent_p=1.01)
    near_backlog = TenantProfile(a, exponent_d=1.01, exponent_p=1)
    d = 500.0
    for p in (100.0, 300.0, 1600.0, 2400.0):
        step = d if p < a else 0.0
        for prof in (near_cost, near_backlog):
            assert abs(optimal_request(d, p, prof) - step) <= 0.05 * d


def test_convexity_when_backlog_exponent_dominates():
    # exponent_d >= exponent_p makes U a convex norm-like function of b
    rng = np.random.default_rng(5)
    profiles = (DEMAND_DRIVEN, MEDIUM_QOS, TenantProfile(3.0, exponent_d=2.5, exponent_p=1.5))
    for prof in profiles:
        for _ in range(500):
            d = float(rng.uniform(0, 1e4))
            p = float(rng.uniform(1, 2500))
            b1, b3 = sorted(rng.uniform(0, 1.5 * d + 1, 2))
            mid = disutility(0.5 * (b1 + b3), d, p, prof)
            assert mid <= 0.5 * (disutility(b1, d, p, prof) + disutility(b3, d, p, prof)) + 1e-9 * (1 + mid)


def test_cost_saving_convex_for_large_loads():
    rng = np.random.default_rng(6)
    for prof in (BEST_EFFORT, PRICE_DRIVEN):
        checked = 0
        while checked < 300:
            d = float(rng.uniform(0, 1e4))
            p = float(rng.uniform(1, 2500))
            if d < prof.a / (4 * p * p):
                continue
            b1, b3 = sorted(rng.uniform(0, 1.5 * d + 1, 2))
            mid = disutility(0.5 * (b1 + b3), d, p, prof)
            assert mid <= 0.5 * (disutility(b1, d, p, prof) + disutility(b3, d, p, prof)) + 1e-9 * (1 + mid)
            checked += 1


def test_cost_saving_not_convex_for_small_loads():
    # sqrt of a quadratic whose minimum is negative is concave near its ends
    d, p = 100.0, 1000.0
    assert d < PRICE_DRIVEN.a / (4 * p * p)
    b1, b3 = 0.0, 20.0
    mid = disutility(10.0, d, p, PRICE_DRIVEN)
    assert mid > 0.5 * (disutility(b1, d, p, PRICE_DRIVEN) + disutility(b3, d, p, PRICE_DRIVEN))
    # the minimiser is still the closed form (here the whole load)
    assert optimal_request(d, p, PRICE_DRIVEN) == brute_force_request(d, p, PRICE_DRIVEN)


def test_general_regime_can_be_non_convex():
    d, p = 19.887714805707503, 11.103699379666192
    b1, b3 = 14.307153879482, 16.189126880203716
    mid = disutility(0.5 * (b1 + b3), d, p, GENERAL_EXAMPLE)
    assert mid > 0.5 * (disutility(b1, d, p, GENERAL_EXAMPLE) + disutility(b3, d, p, GENERAL_EXAMPLE))
    assert abs(optimal_request(d, p, GENERAL_EXAMPLE) - brute_force_request(d, p, GENERAL_EXAMPLE)) <= d / 20000 + 1e-6 * d
