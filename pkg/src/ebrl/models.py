"""Merit-function approximators with exact values and parameter gradients.

All models share one batched interface:

``merits(S, A)``
    merit of each (state, action) row pair, shape ``(B,)``;
``all_merits(S)``
    merits of every action for each state, shape ``(B, |A|)``;
``grad(S, A, upstream)``
    list of arrays, ``sum_j upstream_j * dM(s_j, a_j)/dtheta``.

States are feature rows (or integer indices for the tabular model) and
actions are integer indices into the model's action table.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.special import expit, logsumexp


def softplus(x):
    """log(1 + e^x) as max(x, 0) + log1p(e^-|x|); stable for any magnitude."""
    x = np.asarray(x, dtype=float) if np.ndim(x) == 0 else x
    out = np.abs(x)
    if out.ndim == 0:
        return float(np.log1p(np.exp(-out)) + max(float(x), 0.0))
    np.negative(out, out=out)
    np.exp(out, out=out)
    np.log1p(out, out=out)
    out += np.maximum(x, 0.0)
    return out


def glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class _Network:
    """Shared parameter plumbing for the neural models."""

    params: list

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = [p.copy() for p in self.params]
        clone._bind()
        return clone

    def load_from(self, other) -> None:
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    def _bind(self) -> None:
        pass

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def snapshot(self) -> dict:
        return snapshot(self.params)


# ---------------------------------------------------------------------------
# DEBN


class DEBN(_Network):
    """Deep energy-based network: merit = b.v + sum softplus(last pre-activations).

    ``v`` concatenates state features and the action code; hidden layers are
    softplus-activated and the input bias ``b`` is a linear skip from ``v``.
    With one hidden layer the output is exactly minus the RBM free energy.
    """

    kind = "debn"

    def __init__(self, state_dim: int, action_codes: np.ndarray, widths, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        widths = [int(w) for w in widths]
        if not widths or min(widths) < 1:
            raise ValueError("DEBN needs at least one non-empty hidden layer")
        self.dtype = np.dtype(dtype)
        self.state_dim = state_dim
        self.action_codes = np.asarray(action_codes, dtype=self.dtype)
        self.n_actions = self.action_codes.shape[0]
        self.n_in = state_dim + self.action_codes.shape[1]
        self.widths = widths
        params = [np.zeros(self.n_in)]
        fan_in = self.n_in
        for w in widths:
            params += [glorot(rng, fan_in, w), np.zeros(w)]
            fan_in = w
        self.params = [p.astype(self.dtype) for p in params]
        self._bind()

    def _bind(self) -> None:
        self.b = self.params[0]
        self.layers = [(self.params[i], self.params[i + 1]) for i in range(1, len(self.params), 2)]

    def inputs(self, S, A) -> np.ndarray:
        S = np.asarray(S, dtype=self.dtype).reshape(len(A), self.state_dim)
        return np.hstack([S, self.action_codes[np.asarray(A)]])

    def _hidden(self, z, keep: bool):
        """Run the hidden stack from the first pre-activation ``z``."""
        acts, pres = [], []
        a = softplus(z)
        if keep:
            pres.append(z)
            acts.append(a)
        for W, c in self.layers[1:]:
            z = a @ W + c
            a = softplus(z)
            if keep:
                pres.append(z)
                acts.append(a)
        return a, acts, pres

    def forward_v(self, V: np.ndarray, keep: bool = False):
        W1, c1 = self.layers[0]
        a, acts, pres = self._hidden(V @ W1 + c1, keep)
        out = V @ self.b + a.sum(axis=1)
        return (out, [V] + acts, pres) if keep else out

    def merits(self, S, A) -> np.ndarray:
        return self.forward_v(self.inputs(S, A))

    def all_merits(self, S) -> np.ndarray:
        S = np.atleast_2d(np.asarray(S, dtype=self.dtype))
        B, n, d = S.shape[0], self.n_actions, self.state_dim
        W1, c1 = self.layers[0]
        # first layer splits into a state part and an action part
        zs = S @ W1[:d] + c1
        za = self.action_codes @ W1[d:]
        z = (zs[:, None, :] + za[None, :, :]).reshape(B * n, -1)
        a, _, _ = self._hidden(z, False)
        linear = (S @ self.b[:d])[:, None] + (self.action_codes @ self.b[d:])[None, :]
        return linear + a.sum(axis=1).reshape(B, n)

    def backward_v(self, V: np.ndarray, upstream) -> list:
        _, acts, pres = self.forward_v(V, keep=True)
        u = np.asarray(upstream, dtype=self.dtype).reshape(-1)
        grads = [None] * len(self.params)
        grads[0] = V.T @ u
        delta = u[:, None] * expit(pres[-1])
        for l in range(len(self.layers) - 1, -1, -1):
            grads[1 + 2 * l] = acts[l].T @ delta
            grads[2 + 2 * l] = delta.sum(axis=0)
            if l:
                delta = (delta @ self.layers[l][0].T) * expit(pres[l - 1])
        return grads

    def grad(self, S, A, upstream) -> list:
        return self.backward_v(self.inputs(S, A), upstream)


def debn_forward(model: DEBN, s, a: int) -> float:
    return float(model.merits(np.atleast_2d(s), [a])[0])


def debn_backward(model: DEBN, s, a: int, upstream: float = 1.0) -> list:
    return model.grad(np.atleast_2d(s), [a], [upstream])


def rbm_free_energy_bruteforce(W, b_v, b_h, v) -> float:
    """F(v) = -log sum_h exp(-E(v, h)) by enumerating all hidden configurations.

    E(v, h) = -v.W.h - b_v.v - b_h.h
    """
    W = np.asarray(W, dtype=float)
    K = W.shape[1]
    if K > 20:
        raise ValueError("hidden enumeration capped at 20 units")
    v = np.asarray(v, dtype=float)
    H = np.array(list(product((0.0, 1.0), repeat=K)))
    neg_energy = H @ (v @ W + b_h) + v @ b_v
    return float(-logsumexp(neg_energy))


def rbm_free_energy_gradient(W, b_v, b_h, v):
    """Closed-form dF/dW, dF/db_v, dF/db_h of the RBM free energy."""
    v = np.asarray(v, dtype=float)
    h = expit(v @ W + b_h)
    return -np.outer(v, h), -v, -h


# ---------------------------------------------------------------------------
# DQN head


class DQN(_Network):
    """State-input network with softplus hidden layers and a linear head over all actions."""

    kind = "dqn"

    def __init__(self, state_dim: int, n_actions: int, widths, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        self.dtype = np.dtype(dtype)
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.widths = [int(w) for w in widths]
        params = []
        fan_in = state_dim
        for w in self.widths + [n_actions]:
            params += [glorot(rng, fan_in, w), np.zeros(w)]
            fan_in = w
        self.params = [p.astype(self.dtype) for p in params]
        self._bind()

    def _bind(self) -> None:
        self.layers = [(self.params[i], self.params[i + 1]) for i in range(0, len(self.params), 2)]

    def forward(self, S, keep: bool = False):
        a = np.atleast_2d(np.asarray(S, dtype=self.dtype))
        acts, pres = [a], []
        last = len(self.layers) - 1
        for l, (W, c) in enumerate(self.layers):
            z = a @ W + c
            if l == last:
                return (z, acts, pres) if keep else z
            a = softplus(z)
            if keep:
                pres.append(z)
                acts.append(a)

    def all_merits(self, S) -> np.ndarray:
        return self.forward(S)

    def merits(self, S, A) -> np.ndarray:
        A = np.asarray(A)
        return self.forward(S)[np.arange(len(A)), A]

    def backward(self, S, G: np.ndarray) -> list:
        """Gradient of sum(G * outputs) for an upstream matrix ``G`` of shape (B, |A|)."""
        _, acts, pres = self.forward(S, keep=True)
        grads = [None] * len(self.params)
        delta = G
        for l in range(len(self.layers) - 1, -1, -1):
            grads[2 * l] = acts[l].T @ delta
            grads[2 * l + 1] = delta.sum(axis=0)
            if l:
                delta = (delta @ self.layers[l][0].T) * expit(pres[l - 1])
        return grads

    def grad(self, S, A, upstream) -> list:
        A = np.asarray(A)
        G = np.zeros((len(A), self.n_actions), dtype=self.dtype)
        G[np.arange(len(A)), A] = upstream
        return self.backward(S, G)


def dqn_forward(model: DQN, s) -> np.ndarray:
    return model.forward(np.atleast_2d(s))[0]


# ---------------------------------------------------------------------------
# tabular


class TabularMerit(_Network):
    """Dense table of merits indexed by (state index, action index)."""

    kind = "tabular"

    def __init__(self, n_states: int, n_actions: int, default: float = 0.0):
        self.n_states = n_states
        self.n_actions = n_actions
        self.params = [np.full((n_states, n_actions), float(default))]
        self._bind()

    def _bind(self) -> None:
        self.table = self.params[0]

    def get(self, s: int, a: int) -> float:
        return float(self.table[s, a])

    def update(self, s: int, a: int, value: float) -> None:
        self.table[s, a] = value

    def merits(self, S, A) -> np.ndarray:
        return self.table[np.asarray(S, dtype=int).reshape(-1), np.asarray(A)]

    def all_merits(self, S) -> np.ndarray:
        return self.table[np.asarray(S, dtype=int).reshape(-1)]

    def grad(self, S, A, upstream) -> list:
        g = np.zeros_like(self.table)
        np.add.at(g, (np.asarray(S, dtype=int).reshape(-1), np.asarray(A)), upstream)
        return [g]


def tabular_get(table: TabularMerit, s: int, a: int) -> float:
    return table.get(s, a)


def tabular_update(table: TabularMerit, s: int, a: int, value: float) -> TabularMerit:
    table.update(s, a, value)
    return table


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list, grads: list) -> list:
        """In-place descent step on ``params`` along ``grads``."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(opt: Adam, params: list, grads: list):
    return opt.step(params, grads), opt


@dataclass
class SGD:
    lr: float = 0.1

    def step(self, params: list, grads: list) -> list:
        for p, g in zip(params, grads):
            p -= self.lr * g
        return params


# ---------------------------------------------------------------------------
# parameter budgets


def debn_parameter_count(n_in: int, widths) -> int:
    total, fan_in = n_in, n_in
    for w in widths:
        total += fan_in * w + w
        fan_in = w
    return total


def dqn_parameter_count(n_in: int, n_actions: int, widths) -> int:
    total, fan_in = 0, n_in
    for w in list(widths) + [n_actions]:
        total += fan_in * w + w
        fan_in = w
    return total


def parameter_count(model) -> int:
    return model.n_parameters()


def _closest_width(count, budget: int, lo: int) -> int:
    # counts are increasing in the width, so scan upward from the minimum
    best, best_gap, w = None, None, lo
    while True:
        gap = abs(count(w) - budget)
        if best_gap is None or gap < best_gap:
            best, best_gap = w, gap
        if count(w) > budget:
            return best
        w += 1


def size_dqn(budget: int, n_in: int, n_actions: int, depth: int, min_width: int = 10) -> list:
    """Equal-width DQN hidden layers whose total parameter count is nearest ``budget``.

    When even ``min_width`` overshoots the budget, ``min_width`` is the nearest
    feasible choice; budgets below the one-unit network are rejected.
    """
    if dqn_parameter_count(n_in, n_actions, [1] * depth) > budget:
        raise ValueError(f"budget {budget} infeasible for a {depth}-layer DQN")
    w = _closest_width(lambda w: dqn_parameter_count(n_in, n_actions, [w] * depth), budget, min_width)
    return [w] * depth


def size_debn(budget: int, n_in: int, depth: int, min_width: int = 1) -> list:
    if debn_parameter_count(n_in, [min_width] * depth) > budget:
        raise ValueError(f"budget {budget} infeasible for a DEBN with width >= {min_width}")
    w = _closest_width(lambda w: debn_parameter_count(n_in, [w] * depth), budget, min_width)
    return [w] * depth


def matched_pair(budget: int, state_dim: int, action_dim: int, n_actions: int, depth: int, min_width: int = 10):
    """DQN widths nearest the budget, then DEBN widths matched to the DQN's actual total."""
    dqn_widths = size_dqn(budget, state_dim, n_actions, depth, min_width)
    actual = dqn_parameter_count(state_dim, n_actions, dqn_widths)
    debn_widths = size_debn(actual, state_dim + action_dim, depth)
    return debn_widths, dqn_widths


# ---------------------------------------------------------------------------
# snapshots


def snapshot(params: list) -> dict:
    return {
        "shapes": [list(p.shape) for p in params],
        "values": [float(x) for p in params for x in p.ravel()],
    }


def restore(snap: dict) -> list:
    flat = np.asarray(snap["values"], dtype=float)
    out, pos = [], 0
    for shape in snap["shapes"]:
        n = int(np.prod(shape)) if shape else 1
        out.append(flat[pos : pos + n].reshape(shape))
        pos += n
    if pos != flat.size:
        raise ValueError("snapshot values do not match the shapes header")
    return out


def save_snapshot(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.snapshot(), fh)


def load_snapshot(model, path) -> None:
    with open(path) as fh:
        params = restore(json.load(fh))
    for mine, theirs in zip(model.params, params):
        if mine.shape != theirs.shape:
            raise ValueError("snapshot shape mismatch")
        mine[...] = theirs
