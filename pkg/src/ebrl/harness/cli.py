"""Command-line entry point: ``ebrl run | verify-quantum | compare | sample-diagnostics | presets``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .config import load_config, preset_names
from .experiments import build_env, build_model, final_value, run_config
from .report import compare_report, verify_quantum, write_results

log = logging.getLogger("ebrl")


def _cmd_run(args) -> int:
    config = load_config(args.config, full=args.full)
    if args.seed is not None:
        config.seed = args.seed
    if args.agents is not None:
        if args.agents < 1:
            raise ValueError("--agents must be positive")
        config.agents = args.agents
    out = args.out or f"results/{config.name}"
    log.info("running %s: %d arm(s) x %d agent(s), %d trials", config.name, len(config.arms), config.agents, config.trials)
    results = run_config(config, args.workers)
    write_results(config, results, out)
    for arm in config.arms:
        values = [final_value(r, config.kind, config.window) for r in results[arm.name]]
        print(f"{arm.name:>24s}  mean {np.mean(values):.4f}  std {np.std(values):.4f}")
    print(f"wrote {out}")
    return 0


def _cmd_verify(args) -> int:
    report = verify_quantum(args.suite, args.chains, args.seed)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0 if report["passed"] else 1


def _cmd_compare(args) -> int:
    report = compare_report(args.dir_a, args.dir_b)
    print(json.dumps(report, indent=2))
    return 0


def _cmd_diagnostics(args) -> int:
    from ..samplers import diagnostics_report

    config = load_config(args.config)
    arm = config.arms[0]
    rng = np.random.default_rng(config.seed)
    env = build_env(arm.settings["env"])
    model = build_model(arm.settings["model"], env, rng)
    # merits of the freshly initialised model in one state, padded to a power of two
    if model.kind == "tabular":
        merits = model.table[0].astype(float)
    else:
        state = env.encode(env.reset(rng)) if hasattr(env, "encode") else env.state_codes[0]
        merits = np.asarray(model.all_merits(np.atleast_2d(state))[0], dtype=float)
    width = max(1, math.ceil(math.log2(len(merits))))
    if width > 12:
        raise ValueError(f"{len(merits)} actions is too many for explicit chain diagnostics")
    f = np.full(2**width, -np.inf)
    f[: len(merits)] = merits
    report = diagnostics_report(f, args.beta, args.eps)
    if not args.curve:
        report.pop("tv_curve")
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ebrl", description="Energy-based RL experiments and quantum verification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset or an INI config")
    p.add_argument("config", help="preset name or path to an .ini file")
    p.add_argument("--seed", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--full", action="store_true", help="apply the [full] full-scale overrides")
    p.add_argument("--out", help="output directory (default results/<name>)")
    p.add_argument("--workers", type=int, help="worker processes (default $EBRL_WORKERS or 1)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify-quantum", help="run the dense quantum verification suites")
    p.add_argument("--suite", help="phase-gap, qbm-grad, free-energy or overlaps (default: all)")
    p.add_argument("--chains", type=int, help="instances per suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("compare", help="separation statistics for one or two result directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b", nargs="?")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sample-diagnostics", help="Gibbs-chain diagnostics for a config's initial merits")
    p.add_argument("config")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--curve", action="store_true", help="include the TV-distance curve")
    p.set_defaults(func=_cmd_diagnostics)

    p = sub.add_parser("presets", help="list the shipped presets")
    p.set_defaults(func=lambda args: print("\n".join(preset_names())) or 0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
