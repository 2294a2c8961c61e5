"""Scenario runner, pricing-scheme adapters, summary metrics and CSV artifacts."""

from __future__ import annotations

import csv
import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .baselines import (
    DistributedPriceState,
    distributed_price_update,
    myopic_price_and_requests,
    proportional_allocation,
    static_price,
)
from .core import PriceBounds, RewardConfig
from .environment import BITS_PER_RB, DEFAULT_DAY, DEFAULT_LOAD_CV, DailyProfile, EpochRecord, SpectrumMarket
from .rl import DdpgAgent, DdpgConfig, LinPgAgent, LinPgConfig, StateScaling
from .tenants import (
    DEFAULT_PROFILES,
    PROFILES_BY_LABEL,
    ConfigError,
    ProfileSpec,
    TenantProfile,
    cyclic_profiles,
    profile_from_spec,
)

log = logging.getLogger(__name__)

SCHEMES = ("ddpg", "linpg", "static", "myopic", "dnrp", "drp", "proportional")
HOUR_EPOCHS = 120_000
DAY_EPOCHS_PER_HOUR = 2_500
HOUR_RUN_EPOCHS = 20_000
DEFAULT_BUFFER_LIMIT = 20_000.0


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one run.

    ``scenario`` is ``hour`` (a single period, ``hour`` selects which),
    ``full_day`` or ``two_day``. ``warmup_days`` trains a learning scheme on
    independently seeded days before the measured run.
    """

    scheme: str = "ddpg"
    static_level: str = "high"
    tenants: Sequence[TenantProfile] = field(default_factory=lambda: cyclic_profiles(4))
    scenario: str = "hour"
    hour: int = 15
    seed: int = 0
    epochs: Optional[int] = None
    epochs_per_period: Optional[int] = None
    reward: RewardConfig = field(default_factory=RewardConfig)
    daily_rows: Sequence = DEFAULT_DAY
    load_cv: float = DEFAULT_LOAD_CV
    buffer_limit: Optional[float] = DEFAULT_BUFFER_LIMIT
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    linpg: LinPgConfig = field(default_factory=LinPgConfig)
    step_size_factor: float = 0.001
    warmup_days: int = 0
    checkpoint: Optional[str] = None
    bits_per_rb: float = BITS_PER_RB

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.scenario not in ("hour", "full_day", "two_day"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if len(self.tenants) == 0:
            raise ConfigError("tenant list must be non-empty")
        if self.epochs is not None and self.epochs <= 0:
            raise ConfigError("epochs must be positive")
        if self.epochs_per_period is not None and self.epochs_per_period <= 0:
            raise ConfigError("epochs_per_period must be positive")
        if self.scheme == "static":
            static_price(self.static_level, self.reward.bounds)
        if self.warmup_days < 0:
            raise ConfigError("warmup_days must be non-negative")
        self.tenants = list(self.tenants)

    @property
    def label(self) -> str:
        return f"static_{self.static_level}" if self.scheme == "static" else self.scheme

    @property
    def period_epochs(self) -> int:
        if self.epochs_per_period is not None:
            return self.epochs_per_period
        return HOUR_EPOCHS if self.scenario == "hour" else DAY_EPOCHS_PER_HOUR

    def daily(self) -> DailyProfile:
        return DailyProfile.from_rows(self.daily_rows, len(self.tenants), cv=self.load_cv)

    @property
    def total_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        if self.scenario == "hour":
            return HOUR_RUN_EPOCHS
        days = 1 if self.scenario == "full_day" else 2
        return days * self.daily().periods * self.period_epochs

    @property
    def start_epoch(self) -> int:
        return self.hour * self.period_epochs if self.scenario == "hour" else 0


# -- pricing schemes ------------------------------------------------------------


class Scheme:
    """Adapter between a pricing method and the epoch loop."""

    def decide(self, market: SpectrumMarket):
        """Return ``(price, requests, allocation)``; ``None`` leaves tenants / the rule in charge."""
        raise NotImplementedError

    def learn(self, state, price, reward, next_state, record):
        pass


class LearnerScheme(Scheme):
    def __init__(self, agent):
        self.agent = agent

    def decide(self, market):
        return self.agent.act(market.state), None, None

    def learn(self, state, price, reward, next_state, record):
        self.agent.observe(state, price, reward, next_state)
        self.agent.train_step()


class StaticScheme(Scheme):
    def __init__(self, price: float):
        self.price = price

    def decide(self, market):
        return self.price, None, None


class MyopicScheme(Scheme):
    def decide(self, market):
        s = market.state
        cfg = market.reward_cfg
        sol = myopic_price_and_requests(s.loads, market.tenants, s.available_rbs, cfg.target(s.available_rbs), cfg.bounds)
        return sol.price, sol.requests, None


class DistributedScheme(Scheme):
    def __init__(self, state: DistributedPriceState):
        self.state = state

    def decide(self, market):
        return self.state.price, None, None

    def learn(self, state, price, reward, next_state, record):
        distributed_price_update(self.state, float(np.sum(record.requests)), record.available_rbs)


class ProportionalScheme(Scheme):
    """Price-agnostic split by load; tenants are charged the RB cost for bookkeeping."""

    def decide(self, market):
        s = market.state
        return market.reward_cfg.rb_cost, s.loads, proportional_allocation(s.loads, s.available_rbs).granted


def build_scheme(cfg: ScenarioConfig, reference_rbs: float) -> Scheme:
    bounds = cfg.reward.bounds
    n = len(cfg.tenants)
    if cfg.scheme == "ddpg":
        return LearnerScheme(DdpgAgent(n, bounds, replace(cfg.ddpg, seed=cfg.ddpg.seed + cfg.seed)))
    if cfg.scheme == "linpg":
        return LearnerScheme(LinPgAgent.for_market(n, bounds, replace(cfg.linpg, seed=cfg.linpg.seed + cfg.seed)))
    if cfg.scheme == "static":
        return StaticScheme(static_price(cfg.static_level, bounds))
    if cfg.scheme == "myopic":
        return MyopicScheme()
    if cfg.scheme in ("dnrp", "drp"):
        kappa = cfg.step_size_factor * bounds.p_max / max(reference_rbs, 1.0)
        reserve = cfg.reward.rb_cost if cfg.scheme == "drp" else None
        start = 0.5 * (bounds.p_min + bounds.p_max)
        return DistributedScheme(DistributedPriceState(start, kappa, reserve, bounds.p_max))
    return ProportionalScheme()


# -- metrics -----------------------------------------------------------------------


@dataclass
class SummaryMetrics:
    epochs: int
    mean_reward: float
    mean_abs_mismatch: float
    normalized_revenue: float
    profit_above_target: float
    total_disutility: float
    total_served: float
    bits_per_price_unit: float
    messages: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def summarize(records: Sequence[EpochRecord], p_max: float, bits_per_rb: float = BITS_PER_RB) -> SummaryMetrics:
    """Aggregate metrics; revenue and profit are normalised by selling every RB at ``p_max``."""
    if not records:
        raise ValueError("no records to summarise")
    revenue = sum(r.revenue for r in records)
    target = sum(r.target for r in records)
    max_revenue = sum(p_max * r.available_rbs for r in records)
    served = sum(float(np.sum(r.served)) for r in records)
    norm = max_revenue if max_revenue > 0 else math.nan
    return SummaryMetrics(
        epochs=len(records),
        mean_reward=sum(r.reward for r in records) / len(records),
        mean_abs_mismatch=sum(abs(r.mismatch) for r in records) / len(records),
        normalized_revenue=revenue / norm,
        profit_above_target=(revenue - target) / norm,
        total_disutility=sum(float(np.sum(r.disutility)) for r in records),
        total_served=served,
        bits_per_price_unit=served * bits_per_rb / revenue if revenue > 0 else math.inf,
        messages=sum(r.messages for r in records),
    )


def hourly_breakdown(records: Sequence[EpochRecord], p_max: float, bits_per_rb: float = BITS_PER_RB) -> dict:
    by_period: dict[int, list] = {}
    for r in records:
        by_period.setdefault(r.period, []).append(r)
    return {h: summarize(rs, p_max, bits_per_rb) for h, rs in sorted(by_period.items())}


# -- CSV ---------------------------------------------------------------------------------

PER_TENANT_FIELDS = (("load", "loads"), ("request", "requests"), ("allocation", "allocations"))
TAIL_FIELDS = (("disutility", "disutility"), ("served", "served"), ("arrival", "arrivals"))


def csv_header(num_tenants: int) -> list[str]:
    cols = ["t", "period", "price"]
    for name, _ in PER_TENANT_FIELDS:
        cols += [f"{name}_{i}" for i in range(num_tenants)]
    cols += ["available_rbs", "reward", "mismatch", "revenue", "target"]
    for name, _ in TAIL_FIELDS:
        cols += [f"{name}_{i}" for i in range(num_tenants)]
    cols.append("messages")
    return cols


def _fmt(v: float) -> str:
    return f"{float(v):.9g}"


def record_row(r: EpochRecord) -> list[str]:
    row = [str(r.t), str(r.period), _fmt(r.price)]
    for _, attr in PER_TENANT_FIELDS:
        row += [_fmt(v) for v in getattr(r, attr)]
    row += [str(r.available_rbs), _fmt(r.reward), _fmt(r.mismatch), _fmt(r.revenue), _fmt(r.target)]
    for _, attr in TAIL_FIELDS:
        row += [_fmt(v) for v in getattr(r, attr)]
    row.append(str(r.messages))
    return row


def write_records(path, records: Sequence[EpochRecord]):
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(records[0].num_tenants))
        for r in records:
            w.writerow(record_row(r))


def read_records(path) -> list[EpochRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        num = sum(1 for c in header if c.startswith("load_"))
        if header != csv_header(num):
            raise ValueError(f"{path}: unexpected CSV header")
        idx = {c: i for i, c in enumerate(header)}
        out = []
        for row in reader:

            def vec(name):
                return np.array([float(row[idx[f"{name}_{i}"]]) for i in range(num)])

            out.append(
                EpochRecord(
                    t=int(row[idx["t"]]),
                    period=int(row[idx["period"]]),
                    price=float(row[idx["price"]]),
                    available_rbs=int(row[idx["available_rbs"]]),
                    reward=float(row[idx["reward"]]),
                    revenue=float(row[idx["revenue"]]),
                    target=float(row[idx["target"]]),
                    arrivals=vec("arrival"),
                    loads=vec("load"),
                    requests=vec("request"),
                    allocations=vec("allocation"),
                    served=vec("served"),
                    disutility=vec("disutility"),
                    messages=int(row[idx["messages"]]),
                )
            )
        return out


def write_summary(path, summaries: dict):
    """One row per scheme (or period) with the summary metric columns."""
    cols = list(SummaryMetrics.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name"] + cols)
        for name, s in summaries.items():
            w.writerow([name] + [_fmt(getattr(s, c)) if isinstance(getattr(s, c), float) else str(getattr(s, c)) for c in cols])


# -- running ---------------------------------------------------------------------------------


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    records: list
    summary: SummaryMetrics
    scheme: Scheme

    @property
    def hourly(self) -> dict:
        return hourly_breakdown(self.records, self.config.reward.bounds.p_max, self.config.bits_per_rb)


def _market(cfg: ScenarioConfig, seed: int) -> SpectrumMarket:
    return SpectrumMarket(
        cfg.tenants,
        cfg.daily(),
        cfg.reward,
        epochs_per_period=cfg.period_epochs,
        seed=seed,
        buffer_limit=cfg.buffer_limit,
        start_epoch=cfg.start_epoch,
    )


def _run_epochs(market: SpectrumMarket, scheme: Scheme, epochs: int, keep: bool) -> list:
    records = []
    for _ in range(epochs):
        state = market.state
        price, requests, allocation = scheme.decide(market)
        next_state, r, record = market.step(price, requests, allocation)
        scheme.learn(state, price, r, next_state, record)
        if keep:
            records.append(record)
    return records


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> ScenarioResult:
    """Run one scheme end to end; writes ``<label>.csv`` into ``out_dir`` when given."""
    daily = cfg.daily()
    reference = float(np.max(daily.spectrum)) if cfg.scenario != "hour" else float(daily.spectrum[cfg.hour % daily.periods])
    scheme = build_scheme(cfg, reference)
    agent = getattr(scheme, "agent", None)
    if cfg.checkpoint and os.path.exists(cfg.checkpoint):
        if not isinstance(agent, DdpgAgent):
            raise ConfigError("checkpoints apply to the ddpg scheme only")
        log.info("loading checkpoint %s", cfg.checkpoint)
        agent.load(cfg.checkpoint)

    if cfg.warmup_days and isinstance(scheme, LearnerScheme):
        days = _market(replace(cfg, scenario="full_day"), seed=cfg.seed + 7919)
        _run_epochs(days, scheme, cfg.warmup_days * daily.periods * cfg.period_epochs, keep=False)

    market = _market(cfg, cfg.seed)
    records = _run_epochs(market, scheme, cfg.total_epochs, keep=True)
    summary = summarize(records, cfg.reward.bounds.p_max, cfg.bits_per_rb)

    if cfg.checkpoint and isinstance(agent, DdpgAgent):
        agent.save(cfg.checkpoint)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_records(Path(out_dir) / f"{cfg.label}.csv", records)
    return ScenarioResult(cfg, records, summary, scheme)


@dataclass
class Comparison:
    results: dict

    @property
    def table(self) -> dict:
        return {name: r.summary for name, r in self.results.items()}

    def hourly(self) -> dict:
        return {name: r.hourly for name, r in self.results.items()}


def compare_schemes(configs: Sequence[ScenarioConfig], out_dir=None) -> Comparison:
    """Run several schemes on the same tenants, seed and scenario."""
    if not configs:
        raise ConfigError("nothing to compare")
    ref = configs[0]
    for c in configs[1:]:
        if [t for t in c.tenants] != [t for t in ref.tenants]:
            raise ConfigError("compared schemes must share the tenant set")
        if (c.seed, c.scenario, c.hour, c.total_epochs, c.period_epochs) != (
            ref.seed, ref.scenario, ref.hour, ref.total_epochs, ref.period_epochs
        ):
            raise ConfigError("compared schemes must share seed and scenario")
    results = {}
    for c in configs:
        if c.label in results:
            raise ConfigError(f"scheme {c.label} listed twice")
        log.info("running %s", c.label)
        results[c.label] = run_scenario(c, out_dir)
    comp = Comparison(results)
    if out_dir is not None:
        write_summary(Path(out_dir) / "summary.csv", comp.table)
        with open(Path(out_dir) / "hourly.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = list(SummaryMetrics.__dataclass_fields__)
            w.writerow(["scheme", "period"] + cols)
            for name, hours in comp.hourly().items():
                for h, s in hours.items():
                    w.writerow([name, h] + [_fmt(v) if isinstance(v, float) else str(v) for v in s.as_dict().values()])
    return comp


# -- configuration files ------------------------------------------------------------------


def _parse_tenant(entry) -> TenantProfile:
    if isinstance(entry, str):
        try:
            return PROFILES_BY_LABEL[entry]
        except KeyError:
            raise ConfigError(f"unknown tenant profile {entry!r}; known: {sorted(PROFILES_BY_LABEL)}") from None
    if not isinstance(entry, dict):
        raise ConfigError(f"tenant entry must be a label or a mapping, got {entry!r}")
    e = dict(entry)
    gd, gp = float(e.pop("exponent_d", 1)), float(e.pop("exponent_p", 1))
    label = e.pop("label", "")
    if "a" in e:
        return TenantProfile(float(e.pop("a")), gd, gp, label)
    try:
        spec = ProfileSpec(
            e.pop("regime"),
            float(e.pop("load_threshold")),
            float(e.pop("price_threshold")),
            e.pop("processed_fraction", None),
        )
    except KeyError as exc:
        raise ConfigError(f"tenant spec missing key {exc}") from None
    return profile_from_spec(spec, (gd, gp), label)


_CONFIG_KEYS = {
    "scheme", "static_level", "tenants", "num_tenants", "scenario", "hour", "seed", "epochs",
    "epochs_per_period", "reward", "profile", "load_cv", "buffer_limit", "ddpg", "linpg",
    "step_size_factor", "warmup_days", "checkpoint", "bits_per_rb",
}


def config_from_dict(raw: dict) -> ScenarioConfig:
    """Build a config from the documented key set (see README)."""
    try:
        return _config_from_dict(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _config_from_dict(raw: dict) -> ScenarioConfig:
    raw = dict(raw or {})
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    kw = {}
    scheme = str(raw.pop("scheme", "ddpg"))
    m = re.fullmatch(r"static[_(:]?(\w+?)\)?", scheme)
    if m and scheme != "static":
        kw["scheme"], kw["static_level"] = "static", m.group(1).lower()
    else:
        kw["scheme"] = scheme
    if "static_level" in raw:
        kw["static_level"] = str(raw.pop("static_level")).lower()
    scenario = str(raw.pop("scenario", "hour"))
    m = re.fullmatch(r"hour\((\d+)\)", scenario)
    if m:
        kw["scenario"], kw["hour"] = "hour", int(m.group(1))
    else:
        kw["scenario"] = scenario
    num = raw.pop("num_tenants", None)
    if "tenants" in raw:
        tenants = [_parse_tenant(t) for t in raw.pop("tenants")]
        if num is not None and int(num) != len(tenants):
            tenants = [tenants[i % len(tenants)] for i in range(int(num))]
        kw["tenants"] = tenants
    elif num is not None:
        kw["tenants"] = cyclic_profiles(int(num), DEFAULT_PROFILES)
    if "reward" in raw:
        r = dict(raw.pop("reward"))
        bounds = PriceBounds(float(r.pop("p_min", 0.0)), float(r.pop("p_max", 2500.0)))
        kw["reward"] = RewardConfig(bounds=bounds, **{k: float(v) for k, v in r.items()})
    if "profile" in raw:
        kw["daily_rows"] = [tuple(row) for row in raw.pop("profile")]
    for key in ("ddpg", "linpg"):
        if key in raw:
            opts = dict(raw.pop(key))
            if "hidden" in opts:
                opts["hidden"] = tuple(int(h) for h in opts["hidden"])
            if "scaling" in opts:
                opts["scaling"] = StateScaling(**opts["scaling"])
            kw[key] = (DdpgConfig if key == "ddpg" else LinPgConfig)(**opts)
    kw.update(raw)
    return ScenarioConfig(**kw)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if raw and "schemes" in raw:
        raise ConfigError(f"{path}: use load_comparison for multi-scheme files")
    return config_from_dict(raw or {})


def load_comparison(path) -> list[ScenarioConfig]:
    """A comparison file holds shared keys plus a ``schemes`` list of per-scheme overrides."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    schemes = raw.pop("schemes", None)
    if not schemes:
        raise ConfigError(f"{path}: a comparison needs a non-empty 'schemes' list")
    out = []
    for entry in schemes:
        override = {"scheme": entry} if isinstance(entry, str) else dict(entry)
        out.append(config_from_dict({**raw, **override}))
    return out


def default_comparison(**shared) -> list[ScenarioConfig]:
    """Every scheme on the compressed full day."""
    base = dict(scenario="full_day")
    base.update(shared)
    cfgs = [ScenarioConfig(scheme="ddpg", **base), ScenarioConfig(scheme="linpg", **base)]
    cfgs += [ScenarioConfig(scheme="static", static_level=lvl, **base) for lvl in ("low", "med_l", "med_h", "high")]
    cfgs += [ScenarioConfig(scheme=s, **base) for s in ("myopic", "dnrp", "drp", "proportional")]
    return cfgs
