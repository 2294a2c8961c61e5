"""Learning pricing agents: DDPG and a linear policy-gradient actor-critic (Lin-PG)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import MarketState, PriceBounds
from .nn import Adam, Mlp, load_networks, save_networks


class TrainingFault(RuntimeError):
    """Learning produced non-finite values; ``dump`` holds the offending batch statistics."""

    def __init__(self, message: str, dump: Optional[dict] = None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass(frozen=True)
class StateScaling:
    """Fixed affine scaling of observation features into roughly [0, 1]."""

    request_scale: float = 3_000.0
    load_scale: float = 3_000.0
    rb_scale: float = 3_000.0

    def __call__(self, state: MarketState) -> np.ndarray:
        return np.concatenate(
            [
                np.asarray(state.prev_requests, dtype=float) / self.request_scale,
                np.asarray(state.loads, dtype=float) / self.load_scale,
                [state.available_rbs / self.rb_scale],
            ]
        )


def price_to_action(price: float, bounds: PriceBounds) -> float:
    return 2.0 * (price - bounds.p_min) / bounds.width - 1.0


def action_to_price(action: float, bounds: PriceBounds) -> float:
    return bounds.p_min + 0.5 * (action + 1.0) * bounds.width


class ReplayBuffer:
    """Fixed-capacity ring of ``(x, a, r, x')`` transitions with seeded uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, seed: int = 0):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, 1))
        self.rewards = np.zeros((capacity, 1))
        self.next_states = np.zeros((capacity, state_dim))
        self.size = 0
        self.cursor = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward, next_state):
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int):
        """Transition stored ``i`` insertions ago counting from the oldest retained one."""
        j = (self.cursor - self.size + i) % self.capacity
        return self.states[j], self.actions[j, 0], self.rewards[j, 0], self.next_states[j]

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, batch needs {batch_size}")
        return self.rng.integers(0, self.size, batch_size)

    def sample(self, batch_size: int):
        idx = self.sample_indices(batch_size)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


class OuNoise:
    """Ornstein-Uhlenbeck process ``x += theta * (mu - x) + sigma * N(0, 1)``."""

    def __init__(self, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0, seed: int = 0):
        self.theta, self.sigma, self.mu = theta, sigma, mu
        self.rng = np.random.default_rng(seed)
        self.state = mu

    def reset(self):
        self.state = self.mu

    def sample(self) -> float:
        self.state += self.theta * (self.mu - self.state) + self.sigma * self.rng.standard_normal()
        return self.state


@dataclass
class DdpgConfig:
    hidden: tuple = (64, 64)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    discount: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    buffer_capacity: int = 100_000
    # transitions gathered with the initial policy before the first update
    warmup_steps: int = 1_000
    ou_theta: float = 0.15
    # in action units, where the price range spans [-1, 1]; 0.2 is 10% of the range
    ou_sigma: float = 0.2
    noise_decay_steps: int = 10_000
    noise_floor: float = 0.1
    scaling: StateScaling = StateScaling()
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size <= 0 or self.buffer_capacity < self.batch_size:
            raise ValueError("buffer capacity must hold at least one batch")


class DdpgAgent:
    """Deterministic actor-critic with replay, target networks and OU exploration."""

    def __init__(self, num_tenants: int, bounds: PriceBounds = PriceBounds(), cfg: Optional[DdpgConfig] = None):
        self.cfg = cfg = cfg or DdpgConfig()
        self.bounds = bounds
        self.state_dim = 2 * num_tenants + 1
        rng = np.random.default_rng(cfg.seed)
        self.actor = Mlp([self.state_dim, *cfg.hidden, 1], output="tanh", rng=rng)
        self.critic = Mlp([self.state_dim + 1, *cfg.hidden, 1], output="identity", rng=rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.state_dim, seed=cfg.seed + 1)
        self.noise = OuNoise(cfg.ou_theta, cfg.ou_sigma, seed=cfg.seed + 2)
        self.steps = 0

    def normalize(self, state: MarketState) -> np.ndarray:
        return self.cfg.scaling(state)

    def noise_scale(self) -> float:
        cfg = self.cfg
        if cfg.noise_decay_steps <= 0:
            return cfg.ou_sigma
        frac = max(cfg.noise_floor, 1.0 - self.steps / cfg.noise_decay_steps)
        return cfg.ou_sigma * frac

    def act(self, state: MarketState, explore: bool = True) -> float:
        a = float(self.actor.forward(self.normalize(state))[0, 0])
        if explore:
            self.noise.sigma = self.noise_scale()
            a += self.noise.sample()
        return self.bounds.clamp(action_to_price(max(-1.0, min(1.0, a)), self.bounds))

    def observe(self, state: MarketState, price: float, reward: float, next_state: MarketState):
        self.buffer.add(self.normalize(state), price_to_action(price, self.bounds), reward, self.normalize(next_state))
        self.steps += 1

    def train_step(self) -> Optional[tuple[float, float]]:
        """One critic and actor update on a sampled batch; ``None`` during warm-up."""
        cfg = self.cfg
        if len(self.buffer) < max(cfg.batch_size, cfg.warmup_steps):
            return None
        x, a, r, x2 = self.buffer.sample(cfg.batch_size)
        q_next = self.critic_target.forward(np.hstack([x2, self.actor_target.forward(x2)]))
        y = r + cfg.discount * q_next
        q, acts = self.critic.forward(np.hstack([x, a]), keep=True)
        diff = q - y
        loss = float(np.mean(diff**2))
        if not math.isfinite(loss):
            raise TrainingFault(
                "critic loss is not finite",
                {"rewards": r.ravel().tolist(), "q": q.ravel().tolist(), "targets": y.ravel().tolist()},
            )
        grads, _ = self.critic.backward(acts, 2.0 * diff / cfg.batch_size)
        self.critic_opt.step(grads)

        mu, actor_acts = self.actor.forward(x, keep=True)
        q_pi, critic_acts = self.critic.forward(np.hstack([x, mu]), keep=True)
        _, grad_in = self.critic.backward(critic_acts, np.full_like(q_pi, 1.0 / cfg.batch_size))
        actor_grads, _ = self.actor.backward(actor_acts, -grad_in[:, -1:])
        self.actor_opt.step(actor_grads)

        self.actor_target.soft_update(self.actor, cfg.tau)
        self.critic_target.soft_update(self.critic, cfg.tau)
        objective = float(np.mean(q_pi))
        if not math.isfinite(objective):
            raise TrainingFault("actor objective is not finite", {"q": q_pi.ravel().tolist()})
        return loss, objective

    def save(self, path):
        save_networks(
            path,
            {
                "actor": self.actor,
                "critic": self.critic,
                "actor_target": self.actor_target,
                "critic_target": self.critic_target,
            },
        )

    def load(self, path):
        nets = load_networks(path)
        for name in ("actor", "critic", "actor_target", "critic_target"):
            net = nets[name]
            mine = getattr(self, name)
            if net.sizes != mine.sizes:
                raise ValueError(f"checkpoint {name} has sizes {net.sizes}, agent expects {mine.sizes}")
            mine.set_params(net.params)


@dataclass
class LinPgConfig:
    actor_lr: float = 1e-3
    std_lr: float = 1e-4
    critic_lr: float = 1e-2
    discount: float = 0.99
    trace_decay: float = 0.3
    init_std: float = 0.4
    min_std: float = 0.02
    scaling: StateScaling = StateScaling()
    seed: int = 0


class LinPgAgent:
    """Incremental actor-critic with linear approximators and eligibility traces.

    Policy: Gaussian with mean ``w_mu . phi(x)`` and std ``exp(w_sigma . phi(x))``
    in action units; critic: linear state value trained by TD(lambda).
    """

    def __init__(self, num_features: int, bounds: PriceBounds = PriceBounds(), cfg: Optional[LinPgConfig] = None,
                 featurize=None):
        self.cfg = cfg = cfg or LinPgConfig()
        self.bounds = bounds
        self.featurize = featurize or (lambda s: np.concatenate([[1.0], cfg.scaling(s)]))
        dim = num_features + 1
        self.w_mu = np.zeros(dim)
        self.w_sigma = np.zeros(dim)
        self.w_sigma[0] = math.log(cfg.init_std)
        self.v = np.zeros(dim)
        self.e_v = np.zeros(dim)
        self.e_mu = np.zeros(dim)
        self.e_sigma = np.zeros(dim)
        self.rng = np.random.default_rng(cfg.seed)
        self._last = None

    @classmethod
    def for_market(cls, num_tenants: int, bounds: PriceBounds = PriceBounds(), cfg: Optional[LinPgConfig] = None):
        return cls(2 * num_tenants + 1, bounds, cfg)

    def policy(self, phi: np.ndarray) -> tuple[float, float]:
        mu = float(self.w_mu @ phi)
        log_std = float(self.w_sigma @ phi)
        return mu, max(math.exp(min(log_std, 5.0)), self.cfg.min_std)

    def sample_action(self, phi: np.ndarray, explore: bool = True) -> float:
        mu, std = self.policy(phi)
        a = mu + std * self.rng.standard_normal() if explore else mu
        self._last = (phi, a)
        return a

    def act(self, state: MarketState, explore: bool = True) -> float:
        a = self.sample_action(self.featurize(state), explore)
        return action_to_price(max(-1.0, min(1.0, a)), self.bounds)

    def update(self, phi, action, reward, phi_next):
        """TD(lambda) critic and policy-gradient actor step for one transition."""
        cfg = self.cfg
        delta = reward + cfg.discount * float(self.v @ phi_next) - float(self.v @ phi)
        self.e_v = cfg.discount * cfg.trace_decay * self.e_v + phi
        self.v += cfg.critic_lr * delta * self.e_v
        mu, std = self.policy(phi)
        z = (action - mu) / std
        # score function of the Gaussian policy w.r.t. the mean and log-std weights
        self.e_mu = cfg.discount * cfg.trace_decay * self.e_mu + (z / std) * phi
        self.e_sigma = cfg.discount * cfg.trace_decay * self.e_sigma + (z * z - 1.0) * phi
        self.w_mu += cfg.actor_lr * delta * self.e_mu
        self.w_sigma += cfg.std_lr * delta * self.e_sigma
        if not (np.all(np.isfinite(self.w_mu)) and np.all(np.isfinite(self.w_sigma)) and np.all(np.isfinite(self.v))):
            raise TrainingFault("linear actor-critic weights diverged", {"delta": delta, "v": self.v.tolist()})
        return delta

    def observe(self, state: MarketState, price: float, reward: float, next_state: MarketState):
        phi = self.featurize(state)
        if self._last is not None and self._last[0] is not None and np.array_equal(self._last[0], phi):
            action = self._last[1]
        else:
            action = price_to_action(price, self.bounds)
        self.update(phi, action, reward, self.featurize(next_state))

    def train_step(self):
        return None
