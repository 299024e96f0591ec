"""Boltzmann policies, update rules and the hybrid training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .models import SGD, Adam

RULES = ("ps", "sarsa", "q")


# ---------------------------------------------------------------------------
# policy


def boltzmann_policy(merits, beta: float) -> np.ndarray:
    m = np.asarray(merits, dtype=float)
    if m.size == 0:
        raise ValueError("empty action set")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if math.isinf(beta):
        p = np.zeros_like(m)
        p[int(np.argmax(m))] = 1.0
        return p
    z = beta * (m - m.max())
    p = np.exp(z)
    return p / p.sum()


def sample_action(merits, beta: float, rng) -> int:
    if math.isinf(beta):
        return int(np.argmax(merits))
    p = boltzmann_policy(merits, beta)
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)


def sample_actions(merit_rows: np.ndarray, beta: float, rng) -> np.ndarray:
    """One Boltzmann draw per row of a (B, |A|) merit matrix."""
    if math.isinf(beta):
        return np.argmax(merit_rows, axis=1)
    z = beta * (merit_rows - merit_rows.max(axis=1, keepdims=True))
    cdf = np.cumsum(np.exp(z), axis=1)
    u = rng.random(len(cdf))[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=1), merit_rows.shape[1] - 1)


# ---------------------------------------------------------------------------
# schedules and hyperparameters


@dataclass
class Schedule:
    """Monotone interpolation from ``start`` to ``end`` over ``horizon`` trials."""

    start: float
    end: float | None = None
    horizon: float = 1.0
    shape: str = "linear"
    steepness: float = 2.0

    def __post_init__(self):
        if self.end is None:
            self.end = self.start
        if self.horizon <= 0:
            raise ValueError("schedule horizon must be positive")
        if self.shape not in ("linear", "exponential", "tanh"):
            raise ValueError(f"unknown schedule shape {self.shape!r}")
        if self.shape == "exponential" and self.start * self.end <= 0 and self.start != self.end:
            raise ValueError("exponential schedules need endpoints of the same sign")

    def value(self, t: float) -> float:
        x = min(max(t / self.horizon, 0.0), 1.0)
        if x >= 1.0:
            return float(self.end)
        if self.shape == "linear":
            return self.start + (self.end - self.start) * x
        if self.shape == "exponential":
            if self.start == self.end:
                return float(self.start)
            return self.start * (self.end / self.start) ** x
        k = self.steepness
        return self.start + (self.end - self.start) * math.tanh(k * x) / math.tanh(k)


def schedule_value(schedule: Schedule, t: float) -> float:
    return schedule.value(t)


@dataclass
class Hyperparameters:
    rule: str = "ps"
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    gamma: float = 0.9
    gamma_ps: float = 0.01
    glow: Schedule = field(default_factory=lambda: Schedule(0.9))
    beta: Schedule = field(default_factory=lambda: Schedule(1.0))
    replay_capacity: int = 5000
    batch_size: int = 100
    target_sync: int = 100
    target_sync_unit: str = "trials"
    update_period: int = 1

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown update rule {self.rule!r}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning rate must lie in (0, 1]")
        if not 0 <= self.gamma <= 1 or not 0 <= self.gamma_ps <= 1:
            raise ValueError("discounts must lie in [0, 1]")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity smaller than the minibatch")
        if self.target_sync_unit not in ("steps", "updates", "trials"):
            raise ValueError(f"unknown target sync unit {self.target_sync_unit!r}")


# ---------------------------------------------------------------------------
# replay memory


class Transition(NamedTuple):
    """``(s, a, r, s_next, done)`` record; the PS form leaves ``s_next`` empty and carries r~ in ``r``."""

    s: object
    a: int
    r: float
    s_next: object = None
    done: bool = False
    a_next: int = -1
    key: int = -1
    key_next: int = -1


class ReplayMemory:
    """Bounded FIFO over preallocated arrays."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self.head = 0  # next write slot
        self._arrays = None

    def __len__(self) -> int:
        return self.size

    def _allocate(self, s) -> None:
        s = np.asarray(s)
        n = self.capacity
        self._arrays = {
            "s": np.zeros((n,) + s.shape, dtype=s.dtype),
            "a": np.zeros(n, dtype=np.int64),
            "r": np.zeros(n),
            "s_next": np.zeros((n,) + s.shape, dtype=s.dtype),
            "done": np.zeros(n, dtype=bool),
            "has_next": np.zeros(n, dtype=bool),
            "a_next": np.full(n, -1, dtype=np.int64),
            "key": np.full(n, -1, dtype=np.int64),
            "key_next": np.full(n, -1, dtype=np.int64),
        }

    def append(self, tr: Transition) -> None:
        if self._arrays is None:
            self._allocate(tr.s)
        arr, i = self._arrays, self.head
        arr["s"][i] = tr.s
        arr["a"][i] = tr.a
        arr["r"][i] = tr.r
        arr["has_next"][i] = tr.s_next is not None
        if tr.s_next is not None:
            arr["s_next"][i] = tr.s_next
        arr["done"][i] = tr.done
        arr["a_next"][i] = tr.a_next
        arr["key"][i] = tr.key
        arr["key_next"][i] = tr.key_next
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self.head) % self.capacity

    def sample(self, rng, n: int) -> dict:
        if n > self.size:
            raise ValueError(f"memory holds {self.size} records, minibatch needs {n}")
        idx = rng.integers(self.size, size=n)
        if self.size == self.capacity:
            idx = (idx + self.head) % self.capacity
        return {k: v[idx] for k, v in self._arrays.items()}

    def batch(self, indices) -> dict:
        """Records at FIFO positions ``indices`` (0 = oldest)."""
        idx = self._order()[np.asarray(indices)]
        return {k: v[idx] for k, v in self._arrays.items()}

    def records(self) -> list:
        if not self.size:
            return []
        b = self.batch(np.arange(self.size))
        return [
            Transition(
                b["s"][j], int(b["a"][j]), float(b["r"][j]),
                b["s_next"][j] if b["has_next"][j] else None,
                bool(b["done"][j]), int(b["a_next"][j]), int(b["key"][j]), int(b["key_next"][j]),
            )
            for j in range(self.size)
        ]


def glow_discounted_rewards(rewards, eta: float) -> np.ndarray:
    """r~_t = sum_k eta^k r_{t+k}, where ``rewards[t]`` followed action t."""
    if not 0 <= eta <= 1:
        raise ValueError("glow must lie in [0, 1]")
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + eta * acc
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
# agent


class TrialStats(NamedTuple):
    length: int
    total_reward: float


class Agent:
    """Main model, frozen target copy, optimizer, replay memory and counters.

    ``featurize`` maps an environment state to the model input: the state
    index for tabular models, the encoded feature row otherwise. When the
    environment provides state indices, merit rows are cached per state and
    invalidated whenever the parameters they came from change.
    """

    def __init__(self, model, hyper: Hyperparameters, rng, sampler=None):
        self.model = model
        # None means exact enumeration; otherwise a callable (merits, beta, rng) -> action
        self.sampler = sampler
        self.target = model.copy()
        self.hyper = hyper
        self.rng = rng
        if hyper.optimizer == "adam":
            self.opt = Adam(lr=hyper.learning_rate)
        elif hyper.optimizer == "sgd":
            self.opt = SGD(lr=hyper.learning_rate)
        else:
            raise ValueError(f"unknown optimizer {hyper.optimizer!r}")
        self.memory = ReplayMemory(hyper.replay_capacity)
        self.tabular = model.kind == "tabular"
        self.steps = 0
        self.updates = 0
        self.trials = 0
        self.beta = hyper.beta.value(0)
        self._cache: dict = {}
        self._target_cache: dict = {}

    # -- evaluation -----------------------------------------------------

    def featurize(self, env, state):
        if self.tabular:
            idx = env.state_index(state)
            if idx is None:
                raise ValueError("tabular models need an environment with discrete states")
            return idx, idx
        key = env.state_index(state)
        return env.encode(state), (-1 if key is None else key)

    def merit_row(self, x, key: int = -1) -> np.ndarray:
        if self.tabular:
            return self.model.table[x]
        if key >= 0:
            row = self._cache.get(key)
            if row is None:
                row = self._cache[key] = self.model.all_merits(x)[0]
            return row
        return self.model.all_merits(x)[0]

    def target_rows(self, S, keys) -> np.ndarray:
        if self.tabular:
            return self.target.table[np.asarray(S, dtype=int)]
        if np.all(keys >= 0):
            rows = []
            for j, k in enumerate(keys):
                row = self._target_cache.get(k)
                if row is None:
                    row = self._target_cache[k] = self.target.all_merits(S[j : j + 1])[0]
                rows.append(row)
            return np.array(rows)
        return self.target.all_merits(S)

    def act(self, x, key: int = -1) -> int:
        draw = self.sampler or sample_action
        return draw(self.merit_row(x, key), self.beta, self.rng)

    # -- learning -------------------------------------------------------

    def targets(self, batch: dict) -> tuple[np.ndarray, np.ndarray]:
        """Return (y, M) for a minibatch under the configured rule."""
        h = self.hyper
        S, A, R = batch["s"], batch["a"], batch["r"]
        M = self.model.merits(S, A)
        if h.rule == "ps":
            return R + self.target.merits(S, A) - h.gamma_ps * M, M
        live = ~batch["done"]
        boot = np.zeros(len(A))
        if live.any():
            S2 = batch["s_next"][live]
            rows = self.target_rows(S2, batch["key_next"][live])
            if h.rule == "q":
                boot[live] = rows.max(axis=1)
            else:
                a2 = batch["a_next"][live].copy()
                fresh = a2 < 0
                if fresh.any():
                    a2[fresh] = sample_actions(rows[fresh], self.beta, self.rng)
                boot[live] = rows[np.arange(len(a2)), a2]
        return R + h.gamma * boot, M

    def train_step(self, batch: dict) -> None:
        y, M = self.targets(batch)
        err = y - M
        grads = self.model.grad(batch["s"], batch["a"], err)
        if isinstance(self.opt, SGD):
            # Delta theta = alpha * sum_j err_j grad M_j, applied as ascent
            self.opt.step(self.model.params, [-g for g in grads])
        else:
            n = len(err)
            self.opt.step(self.model.params, [-g / n for g in grads])
        self._cache.clear()
        self.updates += 1
        if self.hyper.target_sync_unit == "updates" and self.updates % self.hyper.target_sync == 0:
            self.sync_target()

    def maybe_train(self) -> None:
        h = self.hyper
        if self.steps % h.update_period == 0 and len(self.memory) >= h.batch_size:
            self.train_step(self.memory.sample(self.rng, h.batch_size))

    def sync_target(self) -> None:
        self.target.load_from(self.model)
        self._target_cache.clear()

    def on_step(self) -> None:
        self.steps += 1
        self.maybe_train()
        if self.hyper.target_sync_unit == "steps" and self.steps % self.hyper.target_sync == 0:
            self.sync_target()


def td_error(rule: str, tr: Transition, model, target, hyper: Hyperparameters, rng=None, beta: float = 1.0) -> float:
    """Single-transition error y - M(s, a); see :meth:`Agent.targets`."""
    if (rule == "ps") != (tr.s_next is None):
        raise ValueError("PS transitions carry no successor state; SARSA/Q transitions need one")
    agent = object.__new__(Agent)
    agent.model, agent.target = model, target
    agent.hyper = Hyperparameters(**{**hyper.__dict__, "rule": rule})
    agent.rng = rng if rng is not None else np.random.default_rng(0)
    agent.beta = beta
    agent.tabular = model.kind == "tabular"
    agent._target_cache = {}
    s = np.asarray(tr.s)[None] if not agent.tabular else np.array([tr.s])
    batch = {
        "s": s,
        "a": np.array([tr.a]),
        "r": np.array([tr.r], dtype=float),
        "done": np.array([bool(tr.done)]),
        "a_next": np.array([tr.a_next]),
        "key_next": np.array([-1]),
    }
    if tr.s_next is not None:
        batch["s_next"] = np.asarray(tr.s_next)[None] if not agent.tabular else np.array([tr.s_next])
    y, M = agent.targets(batch)
    return float(y[0] - M[0])


def run_episode(agent: Agent, env, record: bool = False):
    """Play one trial of the hybrid loop and return its statistics.

    PS transitions are glow-processed and stored when the trial ends;
    SARSA and Q-learning transitions are stored as they happen.
    """
    h = agent.hyper
    agent.beta = h.beta.value(agent.trials)
    state = env.reset(agent.rng)
    x, key = agent.featurize(env, state)
    ps = h.rule == "ps"
    xs, keys, actions, rewards = [], [], [], []
    steps = []
    total = 0.0
    while True:
        a = agent.act(x, key)
        out = env.step(a)
        total += out.reward
        x2, key2 = agent.featurize(env, out.next_state)
        if ps:
            xs.append(x)
            keys.append(key)
            actions.append(a)
            rewards.append(out.reward)
        else:
            terminal = out.done and not out.truncated
            agent.memory.append(Transition(x, a, out.reward, x2, terminal, key=key, key_next=key2))
        if record:
            steps.append((state, a, out.reward))
        agent.on_step()
        state, x, key = out.next_state, x2, key2
        if out.done:
            break
    if ps:
        glowed = glow_discounted_rewards(rewards, h.glow.value(agent.trials))
        for xt, kt, at, rt in zip(xs, keys, actions, glowed):
            agent.memory.append(Transition(xt, at, float(rt), key=kt))
    agent.trials += 1
    if h.target_sync_unit == "trials" and agent.trials % h.target_sync == 0:
        agent.sync_target()
    stats = TrialStats(env.t, total)
    return (stats, steps) if record else stats
