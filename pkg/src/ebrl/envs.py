"""Task environments and binary encoders.

Every environment exposes the same small surface used by the agents:

- ``n_actions`` and ``action_codes`` (one row of model input per action),
- ``reset(rng)`` / ``step(action)`` returning a :class:`StepOutcome`,
- ``encode(state)`` giving the model input for a state and
  ``state_index(state)`` giving an integer index (``None`` for continuous
  states).

The step rules themselves live in the module-level ``*_step`` functions so
they can be tested in isolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class StepOutcome(NamedTuple):
    next_state: object
    reward: float
    done: bool
    # trial ended on a time limit rather than a terminal state
    truncated: bool = False


# ---------------------------------------------------------------------------
# encoders


def code_width(cardinality: int) -> int:
    if cardinality < 1:
        raise ValueError("cardinality must be positive")
    return max(1, math.ceil(math.log2(cardinality)))


def encode(index: int, cardinality: int) -> np.ndarray:
    """Fixed-width big-endian binary code of ``index``."""
    if not 0 <= index < cardinality:
        raise ValueError(f"index {index} out of range for cardinality {cardinality}")
    width = code_width(cardinality)
    return np.array([(index >> (width - 1 - k)) & 1 for k in range(width)], dtype=float)


def decode(bits) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | int(round(float(b)))
    return value


def binary_table(cardinality: int) -> np.ndarray:
    """All codes for ``range(cardinality)`` stacked row-wise."""
    width = code_width(cardinality)
    idx = np.arange(cardinality)[:, None]
    shifts = np.arange(width - 1, -1, -1)[None, :]
    return ((idx >> shifts) & 1).astype(float)


def onehot_table(cardinality: int) -> np.ndarray:
    return np.eye(cardinality)


def action_table(cardinality: int, encoding: str = "binary") -> np.ndarray:
    if encoding == "binary":
        return binary_table(cardinality)
    if encoding == "onehot":
        return onehot_table(cardinality)
    raise ValueError(f"unknown action encoding {encoding!r}")


# ---------------------------------------------------------------------------
# GridWorld

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
GRID_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}


GRID_CAP = 20000


def gridworld_step(state, action: int, t: int, size: int, cap: int | None = None) -> StepOutcome:
    """One GridWorld move; ``t`` is the 1-based index of this step in the trial.

    Moves into a wall leave the position unchanged. Reaching the far corner
    pays 1; running out of time pays -1.
    """
    if cap is None:
        cap = GRID_CAP
    x, y = state
    dx, dy = GRID_MOVES[action]
    nx, ny = x + dx, y + dy
    if not (0 <= nx < size and 0 <= ny < size):
        nx, ny = x, y
    goal = size - 1
    if nx == goal and ny == goal:
        return StepOutcome((nx, ny), 1.0, True)
    if t >= cap:
        return StepOutcome((nx, ny), -1.0, True)
    return StepOutcome((nx, ny), 0.0, False)


class GridWorld:
    """Square grid with closed boundaries, start (0, 0) and goal in the far corner."""

    n_actions = 4

    def __init__(self, size: int = 100, cap: int | None = None, action_encoding: str = "binary"):
        self.size = size
        self.cap = GRID_CAP if cap is None else cap
        self.n_states = size * size
        self.action_codes = action_table(4, action_encoding)
        self._width = code_width(size)
        self.state_dim = 2 * self._width
        self.optimal_length = 2 * (size - 1)
        self.state = (0, 0)
        self.t = 0

    def reset(self, rng=None):
        self.state, self.t = (0, 0), 0
        return self.state

    def step(self, action: int) -> StepOutcome:
        self.t += 1
        out = gridworld_step(self.state, action, self.t, self.size, self.cap)
        self.state = out.next_state
        return out

    def encode(self, state) -> np.ndarray:
        return np.concatenate([encode(state[0], self.size), encode(state[1], self.size)])

    def state_index(self, state) -> int:
        return state[0] * self.size + state[1]


# ---------------------------------------------------------------------------
# CartPole (canonical pole-on-cart dynamics, explicit Euler)

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
HALF_LENGTH = 0.5
FORCE_MAG = 10.0
TAU = 0.02
ANGLE_LIMIT = 12 * 2 * math.pi / 360
POSITION_LIMIT = 2.4
CARTPOLE_STEPS = 500


def cartpole_derivatives(state, force: float):
    x, x_dot, theta, theta_dot = state
    total_mass = CART_MASS + POLE_MASS
    pml = POLE_MASS * HALF_LENGTH
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (force + pml * theta_dot * theta_dot * sin) / total_mass
    theta_acc = (GRAVITY * sin - cos * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass)
    )
    x_acc = temp - pml * theta_acc * cos / total_mass
    return x_acc, theta_acc


def cartpole_terminal(state) -> bool:
    x, _, theta, _ = state
    return abs(x) > POSITION_LIMIT or abs(theta) > ANGLE_LIMIT


def cartpole_step(state, action: int, t: int, force: float | None = None) -> StepOutcome:
    """Integrate one 0.02 s slice; action 0 pushes left, 1 pushes right.

    ``t`` is the 1-based step index. A balanced step pays 1, the step that
    drops the pole or leaves the track pays 0, and step 500 ends the trial.
    """
    if force is None:
        force = FORCE_MAG if action == 1 else -FORCE_MAG
    x, x_dot, theta, theta_dot = state
    x_acc, theta_acc = cartpole_derivatives(state, force)
    nxt = (
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    )
    if cartpole_terminal(nxt):
        return StepOutcome(nxt, 0.0, True)
    if t >= CARTPOLE_STEPS:
        return StepOutcome(nxt, 1.0, True, truncated=True)
    return StepOutcome(nxt, 1.0, False)


def cartpole_energy(state) -> float:
    """Mechanical energy of cart plus uniform rod (pivot at the cart)."""
    _, x_dot, theta, theta_dot = state
    m, ml = POLE_MASS, POLE_MASS * HALF_LENGTH
    kinetic = (
        0.5 * (CART_MASS + m) * x_dot**2
        + ml * x_dot * theta_dot * math.cos(theta)
        + 0.5 * (4.0 / 3.0) * m * HALF_LENGTH**2 * theta_dot**2
    )
    return kinetic + ml * GRAVITY * math.cos(theta)


class CartPole:
    n_actions = 2
    n_states = None
    optimal_length = CARTPOLE_STEPS
    # divisors that bring the raw state to roughly unit scale
    scales = (POSITION_LIMIT, 3.0, ANGLE_LIMIT, 3.5)

    def __init__(self, action_encoding: str = "onehot"):
        self.action_codes = action_table(2, action_encoding)
        self.state_dim = 4
        self.state = (0.0, 0.0, 0.0, 0.0)
        self.t = 0

    def reset(self, rng):
        self.state = tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))
        self.t = 0
        return self.state

    def step(self, action: int) -> StepOutcome:
        self.t += 1
        out = cartpole_step(self.state, action, self.t)
        self.state = out.next_state
        return out

    def encode(self, state) -> np.ndarray:
        return np.array(state) / self.scales

    def state_index(self, state):
        return None


# ---------------------------------------------------------------------------
# circular GridWorld


def circular_rewarded_action(n: int, size: int) -> tuple[int, int]:
    """The single rewarded action from position ``n``.

    Among goal-reaching moves the smallest ``i + j`` wins; on an even ring the
    two half-way moves tie and the one with fewer left steps is kept.
    """
    half = size // 2
    d = (half - n) % size
    options = []
    if d <= half:
        options.append((0, d))
    if d and size - d <= half:
        options.append((size - d, 0))
    return min(options, key=lambda ij: (ij[0] + ij[1], ij[0]))


def circular_gridworld_step(n: int, action: tuple[int, int], size: int) -> StepOutcome:
    half = size // 2
    i, j = action
    if not (0 <= i <= half and 0 <= j <= half):
        raise ValueError(f"action {action} outside [0, {half}]^2")
    landed = (n + j - i) % size
    if landed != half:
        return StepOutcome(landed, 0.0, False)
    reward = 1.0 if (i, j) == circular_rewarded_action(n, size) else 0.0
    nxt = (n + 1) % size
    if nxt == half:
        nxt = (n + 2) % size
    return StepOutcome(nxt, reward, False)


class CircularGridWorld:
    """Ring of ``size`` cells; actions are pairs (left steps, right steps)."""

    def __init__(self, size: int, trial_length: int = 100):
        self.size = size
        self.half = size // 2
        self.goal = self.half
        self.trial_length = trial_length
        side = self.half + 1
        self.n_actions = side * side
        self.n_states = size
        self.optimal_length = trial_length
        sub = binary_table(side)
        ii, jj = np.divmod(np.arange(self.n_actions), side)
        self.action_codes = np.hstack([sub[ii], sub[jj]])
        self.state_codes = binary_table(size)
        self.state_dim = self.state_codes.shape[1]
        self.rewarded = np.array(
            [self.action_index(circular_rewarded_action(n, size)) for n in range(size)]
        )
        self.state = 0
        self.t = 0

    def action_index(self, ij) -> int:
        return ij[0] * (self.half + 1) + ij[1]

    def action_pair(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.half + 1)

    def reward_table(self) -> np.ndarray:
        table = np.zeros((self.size, self.n_actions))
        table[np.arange(self.size), self.rewarded] = 1.0
        return table

    def reset(self, rng):
        starts = [n for n in range(self.size) if n != self.goal]
        self.state = int(starts[rng.integers(len(starts))])
        self.t = 0
        return self.state

    def step(self, action: int) -> StepOutcome:
        self.t += 1
        out = circular_gridworld_step(self.state, self.action_pair(action), self.size)
        self.state = out.next_state
        if self.t >= self.trial_length:
            return out._replace(done=True, truncated=True)
        return out

    def encode(self, state) -> np.ndarray:
        return self.state_codes[state]

    def state_index(self, state) -> int:
        return int(state)


def circular_size_for_actions(n_actions: int) -> int:
    side = math.isqrt(n_actions)
    if side * side != n_actions or side < 2:
        raise ValueError("circular GridWorld needs a square action count")
    return 2 * (side - 1) + 1


# ---------------------------------------------------------------------------
# supervised-style probes


@dataclass
class MultimodalTarget:
    """Five Gaussian bumps along a discretized action axis, centres varying with the state."""

    centers: np.ndarray  # (n_states, n_modes)
    amplitudes: np.ndarray  # (n_modes,)
    sigma: float = 0.04

    @classmethod
    def generate(cls, n_states: int = 256, n_modes: int = 5, sigma: float = 0.04, seed: int = 2021):
        rng = np.random.default_rng(seed)
        base = (np.arange(n_modes) + 0.5) / n_modes
        freq = rng.integers(1, 4, size=n_modes)
        phase = rng.uniform(0, 2 * np.pi, size=n_modes)
        s = np.arange(n_states)[:, None] / n_states
        # wobble small enough that neighbouring centres stay 3 sigma apart
        centers = base + 0.04 * np.sin(2 * np.pi * freq * s + phase)
        amplitudes = rng.uniform(0.4, 1.0, size=n_modes)
        return cls(centers, amplitudes, sigma)

    def table(self, n_actions: int) -> np.ndarray:
        a = np.arange(n_actions)[None, :, None] / n_actions
        bumps = np.exp(-((a - self.centers[:, None, :]) ** 2) / (2 * self.sigma**2))
        return (bumps * self.amplitudes).sum(axis=2)

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "amplitudes": self.amplitudes.tolist(),
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d) -> "MultimodalTarget":
        return cls(np.array(d["centers"]), np.array(d["amplitudes"]), float(d["sigma"]))


class PolicySamplingTask:
    """States drawn uniformly; the learner sees one sampled action (RL) or the full row (control)."""

    def __init__(self, n_actions: int, n_states: int = 256, target: MultimodalTarget | None = None,
                 signed: bool = False):
        self.n_actions = n_actions
        self.n_states = n_states
        self.target_model = target or MultimodalTarget.generate(n_states)
        self.target = self.target_model.table(n_actions)
        self.state_codes = binary_table(n_states)
        self.action_codes = binary_table(n_actions)
        if signed:
            # bits mapped to +-1 so that no input unit is silent
            self.state_codes = 2.0 * self.state_codes - 1.0
            self.action_codes = 2.0 * self.action_codes - 1.0
        self.state_dim = self.state_codes.shape[1]

    def sample_states(self, rng, batch: int) -> np.ndarray:
        return rng.integers(self.n_states, size=batch)


class RewardDiscountingTask:
    """Random states of the circular GridWorld under a fixed near-optimal behaviour policy.

    The behaviour policy plays the rewarded action with probability
    ``p_rewarded`` and a uniformly random action otherwise; the next state is
    drawn uniformly, so the discounted merit of the behaviour policy has the
    closed form returned by :meth:`true_merits`.
    """

    def __init__(self, n_actions: int, gamma: float = 0.9, p_rewarded: float = 0.99):
        self.world = CircularGridWorld(circular_size_for_actions(n_actions))
        self.n_actions = n_actions
        self.n_states = self.world.size
        self.gamma = gamma
        self.p_rewarded = p_rewarded
        self.state_codes = self.world.state_codes
        self.action_codes = self.world.action_codes
        self.state_dim = self.world.state_dim

    def behaviour_action(self, rng, n: int) -> int:
        if rng.random() < self.p_rewarded:
            return int(self.world.rewarded[n])
        return int(rng.integers(self.n_actions))

    def reward(self, n: int, a: int) -> float:
        return 1.0 if a == self.world.rewarded[n] else 0.0

    def stream(self, rng):
        """Yield ``(s, a, r, s_next, a_next)`` tuples forever."""
        s = int(rng.integers(self.n_states))
        a = self.behaviour_action(rng, s)
        while True:
            s2 = int(rng.integers(self.n_states))
            a2 = self.behaviour_action(rng, s2)
            yield s, a, self.reward(s, a), s2, a2
            s, a = s2, a2

    def true_merits(self) -> np.ndarray:
        mean_reward = self.p_rewarded + (1 - self.p_rewarded) / self.n_actions
        return self.world.reward_table() + self.gamma * mean_reward / (1 - self.gamma)
