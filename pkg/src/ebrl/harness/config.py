"""Experiment configuration files.

A config is an INI file::

    [experiment]      name, kind, agents, trials, seed, metric, window, arms
    [env]             environment parameters
    [model]           model kind, widths or budget/depth
    [agent]           update rule and hyperparameters
    [task]            extra knobs for the non-episodic probes
    [arm NAME]        overrides written as ``section.key = value``
    [full]            overrides applied with ``--full`` (same dotted form)

Each arm resolves to a plain ``{section: {key: value}}`` dict, which is what
gets recorded in the manifest and is enough to rerun the arm.
"""
from __future__ import annotations

import configparser
import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

SECTIONS = ("env", "model", "agent", "task")
KINDS = ("episodic", "policy-sampling", "reward-discounting")


@dataclass
class ArmSpec:
    name: str
    group: str
    label: str
    settings: dict


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    agents: int
    trials: int
    seed: int
    metric: str
    window: int
    arms: list = field(default_factory=list)
    source: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "agents": self.agents,
            "trials": self.trials,
            "seed": self.seed,
            "metric": self.metric,
            "window": self.window,
            "arms": [
                {"name": a.name, "group": a.group, "label": a.label, "settings": a.settings}
                for a in self.arms
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        arms = [ArmSpec(a["name"], a["group"], a["label"], a["settings"]) for a in d["arms"]]
        return cls(d["name"], d["kind"], d["agents"], d["trials"], d["seed"], d["metric"], d["window"], arms)


def preset_names() -> list:
    folder = resources.files("ebrl.harness") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def _read_text(name_or_path: str) -> tuple[str, str]:
    path = Path(name_or_path)
    if path.suffix == ".ini" and path.exists():
        return path.read_text(), str(path)
    folder = resources.files("ebrl.harness") / "presets"
    candidate = folder / f"{name_or_path}.ini"
    if candidate.is_file():
        return candidate.read_text(), f"preset:{name_or_path}"
    raise ValueError(f"no preset or config file named {name_or_path!r} (presets: {', '.join(preset_names())})")


def _apply(settings: dict, dotted: dict) -> None:
    for key, value in dotted.items():
        section, _, field_name = key.partition(".")
        if section not in SECTIONS or not field_name:
            raise ValueError(f"override {key!r} must look like <{'|'.join(SECTIONS)}>.<key>")
        settings.setdefault(section, {})[field_name] = value


def parse_config(text: str, full: bool = False, source: str = "") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    cp.read_string(text)
    if "experiment" not in cp:
        raise ValueError("config needs an [experiment] section")
    exp = dict(cp["experiment"])
    base = {s: dict(cp[s]) if s in cp else {} for s in SECTIONS}
    top = {}
    if full and "full" in cp:
        for key, value in cp["full"].items():
            if key.startswith("experiment."):
                top[key.split(".", 1)[1]] = value
            else:
                _apply(base, {key: value})
    exp.update(top)
    kind = exp.get("kind", "episodic")
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    try:
        agents = int(exp.get("agents", 10))
        trials = int(exp.get("trials", 100))
        seed = int(exp.get("seed", 0))
        window = int(exp.get("window", 50))
    except ValueError as err:
        raise ValueError(f"invalid [experiment] field: {err}") from None
    if agents < 1 or trials < 1:
        raise ValueError("agents and trials must be positive")
    arm_names = [a.strip() for a in exp.get("arms", "").split(",") if a.strip()]
    if not arm_names:
        arm_names = [s.split(None, 1)[1] for s in cp.sections() if s.startswith("arm ")] or ["main"]
    arms = []
    for name in arm_names:
        settings = copy.deepcopy(base)
        section = f"arm {name}"
        overrides = dict(cp[section]) if section in cp else {}
        group = overrides.pop("group", "all")
        label = overrides.pop("label", name)
        _apply(settings, overrides)
        arms.append(ArmSpec(name, group, label, settings))
    return ExperimentConfig(
        exp.get("name", "experiment"), kind, agents, trials, seed,
        exp.get("metric", "length"), window, arms, source,
    )


def load_config(name_or_path: str, full: bool = False) -> ExperimentConfig:
    text, source = _read_text(name_or_path)
    return parse_config(text, full=full, source=source)


# ---------------------------------------------------------------------------
# typed accessors


def get_float(d: dict, key: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ValueError(f"missing setting {key!r}")
        return float(default)
    return float(d[key])


def get_int(d: dict, key: str, default=None) -> int:
    if key not in d:
        if default is None:
            raise ValueError(f"missing setting {key!r}")
        return int(default)
    return int(d[key])


def get_ints(d: dict, key: str) -> list:
    return [int(x) for x in str(d[key]).replace(",", " ").split()]


def get_str(d: dict, key: str, default: str | None = None) -> str:
    if key not in d:
        if default is None:
            raise ValueError(f"missing setting {key!r}")
        return default
    return str(d[key]).strip()
