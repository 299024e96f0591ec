"""Result files, separation statistics and the quantum verification sweep."""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig
from .experiments import final_value, summarize_curve

CSV_SCHEMA = "trial,mean,std,min,max/v1"
CURVE_HEADER = ["trial", "mean", "std", "min", "max"]
FINAL_HEADER = ["arm", "group", "label", "agent", "seed", "final"]


def _fmt(x: float) -> str:
    # repr round-trips doubles exactly, which keeps reruns byte-identical
    return repr(float(x))


def write_results(config: ExperimentConfig, results: dict, out_dir) -> dict:
    """One curve CSV per arm, a final.csv of per-agent values and manifest.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ValueError(f"cannot create output directory {out}: {err}") from None
    files = {}
    for arm in config.arms:
        records = results[arm.name]
        path = out / f"{arm.name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_HEADER)
            for row in summarize_curve(records):
                w.writerow([int(row[0])] + [_fmt(x) for x in row[1:]])
        files[arm.name] = path.name
    with open(out / "final.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FINAL_HEADER)
        for arm in config.arms:
            for i, rec in enumerate(results[arm.name]):
                value = final_value(rec, config.kind, config.window)
                w.writerow([arm.name, arm.group, arm.label, i, rec.seed, _fmt(value)])
    manifest = {
        "config": config.to_dict(),
        "source": config.source,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "csv_schema": CSV_SCHEMA,
        "seeds": [config.seed + i for i in range(config.agents)],
        "files": files,
        "wall_seconds": {name: [r.wall for r in recs] for name, recs in results.items()},
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def read_results(out_dir) -> tuple[dict, dict]:
    """Manifest plus {arm: {"group", "label", "values"}} from final.csv."""
    out = Path(out_dir)
    try:
        manifest = json.loads((out / "manifest.json").read_text())
        rows = list(csv.DictReader(open(out / "final.csv", encoding="utf-8")))
    except FileNotFoundError as err:
        raise ValueError(f"{out} is not a result directory ({err.filename} missing)") from None
    arms: dict = {}
    for row in rows:
        entry = arms.setdefault(row["arm"], {"group": row["group"], "label": row["label"], "values": []})
        entry["values"].append(float(row["final"]))
    return manifest, arms


# ---------------------------------------------------------------------------
# separation statistics


def separation(a, b) -> dict:
    """Mean difference a - b, pooled sigma and whether the +-1 sigma bands are disjoint."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty result set")
    ma, mb = float(a.mean()), float(b.mean())
    sa, sb = float(a.std()), float(b.std())
    diff = ma - mb
    pooled = float(np.sqrt((sa**2 + sb**2) / 2))
    disjoint = (ma + sa < mb - sb) or (mb + sb < ma - sa)
    return {
        "mean_a": ma,
        "mean_b": mb,
        "std_a": sa,
        "std_b": sb,
        "difference": diff,
        "pooled_std": pooled,
        "separated": bool(disjoint),
        "sign": int(np.sign(diff)) if disjoint else 0,
    }


def _protocol(manifest: dict) -> tuple:
    c = manifest["config"]
    return c["kind"], c["trials"], c["metric"], c["window"]


def compare_results(manifest_a: dict, arms_a: dict, manifest_b: dict | None = None, arms_b: dict | None = None) -> dict:
    """Separation per group (one directory) or per shared arm name (two directories)."""
    out = {}
    if manifest_b is None:
        groups: dict = {}
        for name, entry in arms_a.items():
            groups.setdefault(entry["group"], []).append(name)
        for group, names in groups.items():
            if len(names) != 2:
                continue
            first, second = names
            stats = separation(arms_a[first]["values"], arms_a[second]["values"])
            out[group] = {"a": first, "b": second, **stats}
        return out
    if _protocol(manifest_a) != _protocol(manifest_b):
        raise ValueError("mismatched protocols: kind, trials, metric and window must agree")
    shared = [n for n in arms_a if n in arms_b]
    if not shared:
        raise ValueError("the two result sets share no arm names")
    for name in shared:
        out[name] = {"a": name, "b": name, **separation(arms_a[name]["values"], arms_b[name]["values"])}
    return out


def compare_report(dir_a, dir_b=None) -> dict:
    ma, aa = read_results(dir_a)
    if dir_b is None:
        return compare_results(ma, aa)
    mb, ab = read_results(dir_b)
    return compare_results(ma, aa, mb, ab)


# ---------------------------------------------------------------------------
# quantum verification


def _suite_phase_gap(rng, chains: int) -> dict:
    from ..quantum.walks import build_walk_operator, phase_gap
    from ..samplers import build_gibbs_chain

    margins, overlaps, unit = [], [], []
    for _ in range(chains):
        bits = int(rng.integers(3, 6))
        f = rng.normal(0, 1, 2**bits)
        walk = build_walk_operator(build_gibbs_chain(f, float(rng.uniform(0.2, 2.0))))
        rep = phase_gap(walk)
        margins.append(rep.margin)
        overlaps.append(rep.stationary_overlap)
        unit.append(rep.unitarity_error)
    ok = min(margins) >= 0 and min(overlaps) >= 1 - 1e-9 and max(unit) <= 1e-9
    return {
        "passed": bool(ok),
        "chains": chains,
        "min_margin": float(min(margins)),
        "min_stationary_overlap": float(min(overlaps)),
        "max_unitarity_error": float(max(unit)),
    }


def _random_hamiltonian(rng, transverse: float):
    from ..quantum.boltzmann import PauliHamiltonian

    n_s, n_a = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    hidden = [int(rng.integers(1, 3)) for _ in range(int(rng.integers(1, 3)))]
    H = PauliHamiltonian.layered(n_s, n_a, hidden, rng, scale=0.5, transverse=transverse)
    s = rng.integers(0, 2, n_s)
    a = rng.integers(0, 2, n_a)
    return H, s, a


def _suite_qbm_grad(rng, instances: int, h: float = 1e-5) -> dict:
    from ..quantum.boltzmann import qbm_free_energy_logtrace, qbm_gradient

    errors = []
    for _ in range(instances):
        H, s, a = _random_hamiltonian(rng, transverse=1.0)
        theta = H.theta
        g = qbm_gradient(H, s, a)
        fd = np.empty_like(theta)
        for j in range(len(theta)):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd[j] = (qbm_free_energy_logtrace(H.with_theta(tp), s, a) - qbm_free_energy_logtrace(H.with_theta(tm), s, a)) / (2 * h)
        errors.append(float(np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-12)))
    hist, edges = np.histogram(np.log10(np.maximum(errors, 1e-16)), bins=8)
    return {
        "passed": bool(max(errors) <= 1e-5),
        "instances": instances,
        "max_relative_error": float(max(errors)),
        "log10_error_histogram": {"counts": hist.tolist(), "edges": edges.tolist()},
    }


def _suite_free_energy(rng, instances: int) -> dict:
    from ..quantum.boltzmann import (
        dbm_free_energy,
        dbm_free_energy_expanded,
        projected_free_energy,
        qbm_free_energy,
        qbm_free_energy_logtrace,
    )

    dual, proj, gamma0 = [], [], []
    for _ in range(instances):
        H, s, a = _random_hamiltonian(rng, transverse=0.0)
        dual.append(abs(dbm_free_energy(H, s, a) - dbm_free_energy_expanded(H, s, a)))
        gamma0.append(abs(qbm_free_energy(H, s, a) - dbm_free_energy(H, s, a)))
        Hq, sq, aq = _random_hamiltonian(rng, transverse=1.0)
        proj.append(abs(qbm_free_energy(Hq, sq, aq) - projected_free_energy(Hq, sq, aq)))
        proj.append(abs(qbm_free_energy_logtrace(Hq, sq, aq) - projected_free_energy(Hq, sq, aq)))
    ok = max(dual) <= 1e-9 and max(proj) <= 1e-8 and max(gamma0) <= 1e-9
    return {
        "passed": bool(ok),
        "instances": instances,
        "dbm_dual_forms": float(max(dual)),
        "qbm_vs_projected_trace": float(max(proj)),
        "gamma_zero_vs_dbm": float(max(gamma0)),
    }


def _suite_overlaps(rng, instances: int, ratio: float = 1.25, beta_first: float = 0.1, beta_final: float = 5.0) -> dict:
    from ..quantum.states import annealing_overlaps, geometric_schedule

    betas = geometric_schedule(beta_final, ratio, beta_first)
    worst = []
    for _ in range(instances):
        f = rng.normal(0, 1, 2**6)
        worst.append(float(annealing_overlaps(f, betas).min()))
    return {
        "passed": bool(min(worst) >= 0.9),
        "instances": instances,
        "ratio": ratio,
        "schedule_length": len(betas) - 1,
        "min_overlap": float(min(worst)),
    }


SUITES = {
    "phase-gap": _suite_phase_gap,
    "qbm-grad": _suite_qbm_grad,
    "free-energy": _suite_free_energy,
    "overlaps": _suite_overlaps,
}
DEFAULT_SIZES = {"phase-gap": 100, "qbm-grad": 20, "free-energy": 50, "overlaps": 20}


def verify_quantum(suite: str | None = None, chains: int | None = None, seed: int = 0) -> dict:
    """Run one suite (or all); ``chains`` overrides the instance count."""
    if suite and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r} (choose from {', '.join(SUITES)})")
    names = [suite] if suite else list(SUITES)
    rng = np.random.default_rng(seed)
    report = {name: SUITES[name](rng, chains or DEFAULT_SIZES[name]) for name in names}
    report["passed"] = all(r["passed"] for r in report.values())
    return report
