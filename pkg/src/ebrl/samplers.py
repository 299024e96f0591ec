"""Exact and Markov-chain samplers for energy-based policies, plus chain diagnostics.

Configuration spaces are binary strings of width ``m`` indexed by their
integer value, so a "function on X" is just an array of length ``2**m``.
Policies are proportional to ``exp(beta * f(x))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .agents import sample_action


def exact_sample(model, s, beta: float, rng) -> int:
    """Evaluate every action's merit and draw from the Boltzmann policy."""
    return sample_action(model.all_merits(np.atleast_2d(s))[0], beta, rng)


def target_distribution(f, beta: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return softmax(beta * f)


@dataclass
class MarkovChain:
    P: np.ndarray
    beta: float = 1.0
    f: np.ndarray | None = None

    def __post_init__(self):
        P = self.P
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if (P < -1e-15).any() or np.abs(P.sum(axis=1) - 1).max() > 1e-12:
            raise ValueError("transition matrix is not row-stochastic")

    @property
    def n(self) -> int:
        return self.P.shape[0]


@dataclass
class ChainDiagnostics:
    pi: np.ndarray
    delta: float
    reversible: bool
    ergodic: bool
    pi_min: float

    def to_dict(self) -> dict:
        return {
            "pi": self.pi.tolist(),
            "delta": self.delta,
            "reversible": self.reversible,
            "ergodic": self.ergodic,
            "pi_min": self.pi_min,
        }


def _width(n_configs: int) -> int:
    m = int(round(math.log2(n_configs)))
    if 2**m != n_configs:
        raise ValueError("configuration space size must be a power of two")
    return m


def build_gibbs_chain(f, beta: float) -> MarkovChain:
    """Single-site heat-bath chain on the Hamming-1 ball.

    Off-diagonal entries are (1/m) * e^{b f(x')} / (e^{b f(x)} + e^{b f(x')})
    for each one-bit neighbour; the self-loop takes the rest of the row.
    """
    f = np.asarray(f, dtype=float)
    m = _width(len(f))
    if m > 20:
        raise ValueError("explicit chains are capped at 20 bits")
    n = len(f)
    x = np.arange(n)
    P = np.zeros((n, n))
    for k in range(m):
        y = x ^ (1 << k)
        with np.errstate(invalid="ignore"):
            diff = beta * (f[y] - f)
        # two forbidden configurations never exchange probability
        P[x, y] = np.where(np.isnan(diff), 0.0, expit(diff)) / m
    P[x, x] = 0.0
    P[x, x] = 1.0 - P.sum(axis=1)
    return MarkovChain(P, beta, f)


def hamming_kernel(m: int, radius: int = 1) -> np.ndarray:
    """Uniform candidate kernel over the Hamming ball (including the centre)."""
    n = 2**m
    x = np.arange(n)
    dist = np.array([[bin(a ^ b).count("1") for b in x] for a in x])
    K = (dist <= radius).astype(float)
    return K / K.sum(axis=1, keepdims=True)


def _connected(adj: np.ndarray) -> bool:
    n = len(adj)
    seen = np.zeros(n, dtype=bool)
    frontier = [0]
    seen[0] = True
    while frontier:
        i = frontier.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            frontier.append(j)
    return bool(seen.all())


def build_mh_chain(f, beta: float, K: np.ndarray) -> MarkovChain:
    """Metropolis-Hastings chain from candidate kernel ``K``; neighbourhoods are K's support."""
    f = np.asarray(f, dtype=float)
    K = np.asarray(K, dtype=float)
    n = len(f)
    if K.shape != (n, n):
        raise ValueError("kernel shape does not match the configuration space")
    if (np.diag(K) <= 0).any():
        raise ValueError("candidate kernel needs K_xx > 0 for every x")
    support = K > 0
    if not _connected(support | support.T):
        raise ValueError("neighbourhood graph is disconnected")
    if (support != support.T).any():
        raise ValueError("neighbourhood relation must be symmetric")
    w = beta * f
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(w[None, :] - w[:, None]) * K.T / K
    R = np.where(support, np.minimum(1.0, ratio), 0.0)
    P = R * K
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return MarkovChain(P, beta, f)


def chain_diagnostics(chain: MarkovChain, tol: float = 1e-10) -> ChainDiagnostics:
    P = chain.P
    if chain.n > 2**20:
        raise ValueError("explicit diagnostics are capped at 2^20 states")
    vals, vecs = np.linalg.eig(P.T)
    order = np.argsort(-np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    top = np.argmin(np.abs(vals - 1))
    pi = np.real(vecs[:, top])
    pi = np.abs(pi) / np.abs(pi).sum()
    # sharpen the eigenvector with a few power steps
    for _ in range(3):
        pi = pi @ P
    pi /= pi.sum()
    mods = np.abs(vals)
    unit = int((mods > 1 - 1e-9).sum())
    ergodic = unit == 1
    delta = float(1 - mods[1]) if ergodic and len(mods) > 1 else (1.0 if chain.n == 1 else 0.0)
    delta = min(max(delta, 0.0), 1.0)
    flow = pi[:, None] * P
    reversible = bool(np.abs(flow - flow.T).max() <= tol)
    # forbidden (-inf) configurations are transient and carry no mass
    support = np.isfinite(chain.f) if chain.f is not None else np.ones(chain.n, bool)
    return ChainDiagnostics(pi, delta, reversible, ergodic, float(pi[support].min()))


def mixing_time_bounds(delta: float, pi_min: float, eps: float) -> tuple[int, int]:
    """Lower and upper bounds on the eps-mixing time of a reversible chain.

    The lower expression is negative whenever eps < 1/2 and is clamped at 0.
    """
    if delta <= 0:
        raise ValueError("spectral gap must be positive")
    if not 0 < eps < 1 or not 0 < pi_min <= 1:
        raise ValueError("eps and pi_min must lie in (0, 1)")
    lower = math.floor((1 - delta) / (2 * math.log(2 * eps)) / delta)
    upper = math.ceil(math.log(1 / (eps * pi_min)) / delta)
    return max(lower, 0), upper


# ---------------------------------------------------------------------------
# on-the-fly walkers


class GibbsStepper:
    """Random-scan heat-bath updates for many walkers at once.

    Matches :func:`build_gibbs_chain` exactly: a uniformly chosen bit is
    flipped with probability sigma(beta * (f(x') - f(x))).
    """

    def __init__(self, f, beta: float, m: int | None = None):
        self.f = f if callable(f) else np.asarray(f, dtype=float)
        self.beta = beta
        self.m = m if m is not None else _width(len(self.f))

    def energy(self, x: np.ndarray) -> np.ndarray:
        return self.f(x) if callable(self.f) else self.f[x]

    def step(self, x: np.ndarray, rng) -> np.ndarray:
        k = rng.integers(self.m, size=x.shape)
        y = x ^ (1 << k)
        with np.errstate(invalid="ignore"):
            diff = self.beta * (self.energy(y) - self.energy(x))
        accept = rng.random(x.shape) < np.where(np.isnan(diff), 0.0, expit(diff))
        return np.where(accept, y, x)


def mcmc_sample(stepper: GibbsStepper, start, steps: int, rng):
    if steps < 0:
        raise ValueError("steps must be non-negative")
    scalar = np.ndim(start) == 0
    x = np.atleast_1d(np.asarray(start, dtype=np.int64)).copy()
    for _ in range(steps):
        x = stepper.step(x, rng)
    return int(x[0]) if scalar else x


def empirical_tv(samples, p) -> float:
    p = np.asarray(p, dtype=float)
    counts = np.bincount(np.asarray(samples), minlength=len(p))[: len(p)]
    return 0.5 * float(np.abs(counts / counts.sum() - p).sum())


def tv_curve(chain: MarkovChain, start, steps: int) -> np.ndarray:
    """TV distance of the t-step distribution from the target, t = 0..steps."""
    p = target_distribution(chain.f, chain.beta)
    dist = np.zeros(chain.n)
    dist[start] = 1.0
    out = [0.5 * np.abs(dist - p).sum()]
    for _ in range(steps):
        dist = dist @ chain.P
        out.append(0.5 * np.abs(dist - p).sum())
    return np.array(out)


class GibbsActionSampler:
    """Approximate action sampler: a fixed number of heat-bath steps over action codes.

    Codes at or beyond ``|A|`` are forbidden (f = -inf); the valid codes stay
    connected under single-bit moves because clearing bits never leaves the set.
    """

    def __init__(self, steps: int):
        self.steps = steps

    def __call__(self, merits, beta: float, rng) -> int:
        n = len(merits)
        m = max(1, math.ceil(math.log2(n)))
        f = np.full(2**m, -np.inf)
        f[:n] = merits
        start = int(rng.integers(n))
        return mcmc_sample(GibbsStepper(f, beta, m), start, self.steps, rng)


def diagnostics_report(f, beta: float, eps: float = 0.01) -> dict:
    chain = build_gibbs_chain(f, beta)
    d = chain_diagnostics(chain)
    lower, upper = mixing_time_bounds(d.delta, d.pi_min, eps) if d.delta > 0 else (None, None)
    p = target_distribution(f, beta)
    curve = tv_curve(chain, int(np.argmin(np.where(p > 0, p, np.inf))), upper or 0)
    return {
        "beta": beta,
        "states": chain.n,
        "delta": d.delta,
        "pi_min": d.pi_min,
        "reversible": d.reversible,
        "ergodic": d.ergodic,
        "stationarity_error": float(np.abs(d.pi - p).max()),
        "eps": eps,
        "mixing_lower": lower,
        "mixing_upper": upper,
        "tv_curve": curve.tolist(),
    }


def dump_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
