"""Build environments, models and agents from resolved settings and run them."""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..agents import Agent, Hyperparameters, Schedule, Transition, run_episode, sample_actions
from ..envs import (
    CartPole,
    CircularGridWorld,
    GridWorld,
    MultimodalTarget,
    PolicySamplingTask,
    RewardDiscountingTask,
    circular_size_for_actions,
)
from ..models import DEBN, DQN, Adam, TabularMerit, matched_pair, size_debn, size_dqn
from ..samplers import GibbsActionSampler
from .config import ExperimentConfig, get_float, get_int, get_ints, get_str

WORKERS_ENV = "EBRL_WORKERS"


# ---------------------------------------------------------------------------
# builders


def parse_schedule(text) -> Schedule:
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) == 1:
        return Schedule(float(parts[0]))
    start, end, horizon = float(parts[0]), float(parts[1]), float(parts[2])
    shape = parts[3] if len(parts) > 3 else "linear"
    steepness = float(parts[4]) if len(parts) > 4 else 2.0
    return Schedule(start, end, horizon, shape, steepness)


def build_env(env: dict):
    name = get_str(env, "name")
    if name == "gridworld":
        cap = env.get("cap")
        return GridWorld(get_int(env, "size", 20), None if cap is None else int(cap), get_str(env, "action_encoding", "binary"))
    if name == "cartpole":
        return CartPole(get_str(env, "action_encoding", "onehot"))
    if name == "circular":
        size = circular_size_for_actions(get_int(env, "actions"))
        return CircularGridWorld(size, get_int(env, "trial_length", 100))
    if name == "policy-sampling":
        target = MultimodalTarget.generate(
            get_int(env, "states", 256), get_int(env, "modes", 5),
            get_float(env, "sigma", 0.04), get_int(env, "target_seed", 2021),
        )
        signed = get_str(env, "coding", "binary") == "signed"
        return PolicySamplingTask(get_int(env, "actions"), get_int(env, "states", 256), target, signed)
    if name == "reward-discounting":
        return RewardDiscountingTask(get_int(env, "actions"), get_float(env, "gamma", 0.9), get_float(env, "p_rewarded", 0.99))
    raise ValueError(f"unknown environment {name!r}")


def model_widths(model: dict, state_dim: int, action_dim: int, n_actions: int) -> list:
    kind = get_str(model, "kind")
    if "widths" in model:
        return get_ints(model, "widths")
    budget, depth = get_int(model, "budget"), get_int(model, "depth", 2)
    min_width = get_int(model, "min_width", 10)
    if get_str(model, "match", "dqn") == "dqn":
        debn_w, dqn_w = matched_pair(budget, state_dim, action_dim, n_actions, depth, min_width)
        return debn_w if kind == "debn" else dqn_w
    if kind == "debn":
        return size_debn(budget, state_dim + action_dim, depth)
    return size_dqn(budget, state_dim, n_actions, depth, min_width)


def build_model(model: dict, env, rng):
    kind = get_str(model, "kind")
    dtype = np.dtype(get_str(model, "dtype", "float64"))
    if kind == "tabular":
        if env.n_states is None:
            raise ValueError("tabular models need a discrete environment")
        return TabularMerit(env.n_states, env.n_actions, get_float(model, "default", 0.0))
    widths = model_widths(model, env.state_dim, env.action_codes.shape[1], env.n_actions)
    if kind == "debn":
        net = DEBN(env.state_dim, env.action_codes, widths, rng, dtype)
        net.layers[-1][1][...] = get_float(model, "output_bias", 0.0)
        return net
    if kind == "dqn":
        return DQN(env.state_dim, env.n_actions, widths, rng, dtype)
    raise ValueError(f"unknown model kind {kind!r}")


def build_hyper(agent: dict) -> Hyperparameters:
    return Hyperparameters(
        rule=get_str(agent, "rule", "ps"),
        learning_rate=get_float(agent, "learning_rate", 1e-3),
        optimizer=get_str(agent, "optimizer", "adam"),
        gamma=get_float(agent, "gamma", 0.9),
        gamma_ps=get_float(agent, "gamma_ps", 0.01),
        glow=parse_schedule(agent.get("glow", "0.9")),
        beta=parse_schedule(agent.get("beta", "1.0")),
        replay_capacity=get_int(agent, "replay_capacity", 5000),
        batch_size=get_int(agent, "batch_size", 100),
        target_sync=get_int(agent, "target_sync", 100),
        target_sync_unit=get_str(agent, "target_sync_unit", "trials"),
        update_period=get_int(agent, "update_period", 1),
    )


def build_sampler(agent: dict):
    kind = get_str(agent, "sampler", "exact")
    if kind == "exact":
        return None
    if kind == "gibbs":
        return GibbsActionSampler(get_int(agent, "sampler_steps", 50))
    raise ValueError(f"unknown sampler {kind!r}")


# ---------------------------------------------------------------------------
# losses


def smoothed_l1(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smoothed_l1_grad(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)


def testing_loss(model, target: np.ndarray, state_codes: np.ndarray, states, metric: str = "smoothed-l1", chunk: int = 100) -> float:
    """Mean loss over every action of the sampled states."""
    states = np.asarray(states)
    if states.size == 0:
        raise ValueError("empty state sample")
    total = 0.0
    for lo in range(0, len(states), chunk):
        idx = states[lo : lo + chunk]
        diff = model.all_merits(state_codes[idx]).astype(float) - target[idx]
        if metric == "smoothed-l1":
            total += smoothed_l1(diff).sum()
        elif metric == "l2":
            total += (diff * diff).sum()
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return float(total / (len(states) * target.shape[1]))


# ---------------------------------------------------------------------------
# runners


@dataclass
class RunRecord:
    seed: int
    trials: list  # per-trial metric values (or per-checkpoint losses)
    lengths: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    final_loss: float | None = None
    checkpoints: list = field(default_factory=list)  # step index of each loss entry
    wall: float = 0.0


def _metric(stats, metric: str) -> float:
    if metric == "length":
        return float(stats.length)
    if metric == "reward":
        return float(stats.total_reward)
    if metric == "mean_reward":
        return float(stats.total_reward) / stats.length
    raise ValueError(f"unknown metric {metric!r}")


def run_episodic(settings: dict, trials: int, metric: str, seed: int) -> RunRecord:
    rng = np.random.default_rng(seed)
    env = build_env(settings["env"])
    model = build_model(settings["model"], env, rng)
    agent = Agent(model, build_hyper(settings["agent"]), rng, build_sampler(settings["agent"]))
    rec = RunRecord(seed, [])
    for _ in range(trials):
        stats = run_episode(agent, env)
        rec.lengths.append(stats.length)
        rec.returns.append(stats.total_reward)
        rec.trials.append(_metric(stats, metric))
    return rec


def run_policy_sampling(settings: dict, steps: int, seed: int) -> RunRecord:
    """RL mode trains on one Boltzmann-sampled action per state; control mode on the whole row."""
    rng = np.random.default_rng(seed)
    task = build_env(settings["env"])
    model = build_model(settings["model"], task, rng)
    t = settings.get("task", {})
    mode = get_str(t, "mode", "rl")
    batch = get_int(t, "batch_size", 10)
    beta = get_float(t, "beta", 1.0)
    every = get_int(t, "eval_every", steps)
    n_eval = get_int(t, "eval_states", 1000)
    opt = Adam(lr=get_float(t, "learning_rate", 1e-3))
    eval_states = rng.integers(task.n_states, size=n_eval)
    target, codes = task.target, task.state_codes
    n_actions = task.n_actions
    rec = RunRecord(seed, [])
    for step in range(1, steps + 1):
        idx = task.sample_states(rng, batch)
        S = codes[idx]
        if mode == "rl":
            rows = model.all_merits(S)
            acts = sample_actions(rows.astype(float), beta, rng)
            resid = rows[np.arange(batch), acts] - target[idx, acts]
            grads = model.grad(S, acts, smoothed_l1_grad(resid) / batch)
        elif mode == "control":
            rows = model.all_merits(S)
            G = smoothed_l1_grad(rows - target[idx]) / (batch * n_actions)
            if model.kind == "dqn":
                grads = model.backward(S, G.astype(model.dtype))
            else:
                S_rep = np.repeat(S, n_actions, axis=0)
                A_rep = np.tile(np.arange(n_actions), batch)
                grads = model.grad(S_rep, A_rep, G.ravel())
        else:
            raise ValueError(f"unknown policy-sampling mode {mode!r}")
        opt.step(model.params, grads)
        if step % every == 0 or step == steps:
            rec.trials.append(testing_loss(model, target, codes, eval_states, "smoothed-l1"))
            rec.checkpoints.append(step)
    rec.final_loss = rec.trials[-1]
    return rec


def run_reward_discounting(settings: dict, steps: int, seed: int) -> RunRecord:
    """SARSA evaluation of the fixed behaviour policy; ``steps`` counts learning updates."""
    rng = np.random.default_rng(seed)
    task = build_env(settings["env"])
    model = build_model(settings["model"], task, rng)
    hyper = build_hyper({**settings["agent"], "rule": "sarsa", "gamma": str(task.gamma)})
    agent = Agent(model, hyper, rng)
    t = settings.get("task", {})
    every = get_int(t, "eval_every", steps)
    truth = task.true_merits()
    codes = task.state_codes
    all_states = np.arange(task.n_states)
    stream = task.stream(rng)
    rec = RunRecord(seed, [])
    while agent.updates < steps:
        s, a, r, s2, a2 = next(stream)
        agent.memory.append(Transition(codes[s], a, r, codes[s2], False, a_next=a2, key=s, key_next=s2))
        before = agent.updates
        agent.on_step()
        if agent.updates != before and (agent.updates % every == 0 or agent.updates == steps):
            rec.trials.append(testing_loss(model, truth, codes, all_states, "l2"))
            rec.checkpoints.append(agent.updates)
    rec.final_loss = rec.trials[-1]
    return rec


def run_arm(settings: dict, kind: str, trials: int, metric: str, seed: int) -> RunRecord:
    start = time.perf_counter()
    if kind == "episodic":
        rec = run_episodic(settings, trials, metric, seed)
    elif kind == "policy-sampling":
        rec = run_policy_sampling(settings, trials, seed)
    elif kind == "reward-discounting":
        rec = run_reward_discounting(settings, trials, seed)
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    rec.wall = time.perf_counter() - start
    return rec


def _run_task(args):
    return run_arm(*args)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_config(config: ExperimentConfig, workers: int | None = None) -> dict:
    """Run every arm for every agent seed; returns {arm name: [RunRecord, ...]}."""
    workers = worker_count() if workers is None else workers
    jobs = [
        (arm.name, (arm.settings, config.kind, config.trials, config.metric, config.seed + i))
        for arm in config.arms
        for i in range(config.agents)
    ]
    if workers == 1:
        outputs = [run_arm(*args) for _, args in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_task, [args for _, args in jobs]))
    results: dict = {arm.name: [] for arm in config.arms}
    for (name, _), rec in zip(jobs, outputs):
        results[name].append(rec)
    return results


def final_value(rec: RunRecord, kind: str, window: int) -> float:
    if kind == "episodic":
        return float(np.mean(rec.trials[-window:]))
    return float(rec.final_loss)


def summarize_curve(records: list) -> np.ndarray:
    """Rows of (index, mean, std, min, max) across agents."""
    data = np.array([r.trials for r in records], dtype=float)
    index = records[0].checkpoints or range(1, data.shape[1] + 1)
    return np.column_stack([
        np.asarray(index, dtype=float),
        data.mean(axis=0),
        data.std(axis=0),
        data.min(axis=0),
        data.max(axis=0),
    ])

