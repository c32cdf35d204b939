"""Run configuration.

One YAML file drives every subcommand.  The file is validated up front and
every complaint is anchored to the line it came from, so a bad config fails
fast with something grep-able instead of a traceback halfway into a run.
The canonical hash of the merged config goes into the run manifest, which
together with the seed makes a run reproducible from the file alone.
"""

import copy
import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import yaml

from .curriculum import GateConfig
from .evaluate import BASELINES, DIRECTIVE_FORMS, EvalConfig
from .ppo import ABLATIONS, PPOConfig

CONFIG_VERSION = 1

DEFAULTS = {
    "version": CONFIG_VERSION,
    "run": {"seed": 0, "workers": None, "out_dir": "runs/latest"},
    "model": {"path": None},
    "motions": {"dir": None},
    "train": {
        "ablation": "full",
        "iterations": {1: 40, 2: 30, 3: 30},
        "checkpoint_every": 10,
        "aux_target_input": False,
        "gate": None,
        "ppo": asdict(PPOConfig()),
    },
    "eval": {
        "directive": "FULL",
        "episodes_per_motion": 20,
        "cycles": 3,
        "max_steps": 2500,
        "seed": None,
        "baseline": None,
        "randomize": True,
    },
    "serve": {"host": "127.0.0.1", "port": 8765, "rate_hz": 20.0, "speed": 1.0},
}


class ConfigError(ValueError):
    """Carries one diagnostic line per problem found."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


def _key_lines(node, prefix="", out=None):
    # Maps dotted key paths to 1-based source lines from the YAML node tree.
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _key_lines(value_node, path, out)
    return out


def _merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


class _Checker:
    def __init__(self, path: str, lines: dict):
        self.path = path
        self.lines = lines
        self.errors: list[str] = []

    def complain(self, dotted: str, message: str) -> None:
        line = self.lines.get(dotted)
        where = f"{self.path}:{line}" if line is not None else self.path
        self.errors.append(f"{where}: {dotted}: {message}")

    def require(self, ok: bool, dotted: str, message: str) -> bool:
        if not ok:
            self.complain(dotted, message)
        return ok


def _check_section_keys(chk: _Checker, cfg: dict) -> None:
    for section, value in cfg.items():
        if section not in DEFAULTS:
            chk.complain(section, "unknown section")
        elif isinstance(DEFAULTS[section], dict):
            if not chk.require(isinstance(value, dict), section, "must be a mapping"):
                continue
            for key in value:
                if key not in DEFAULTS[section]:
                    chk.complain(f"{section}.{key}", "unknown key")


def _check_train(chk: _Checker, train: dict) -> None:
    if not isinstance(train, dict):
        return
    ablation = train.get("ablation")
    chk.require(ablation in ABLATIONS, "train.ablation",
                f"must be one of {sorted(ABLATIONS)}, got {ablation!r}")
    iters = train.get("iterations")
    if chk.require(isinstance(iters, dict), "train.iterations",
                   "must be a mapping of stage id to iteration count"):
        for key, count in iters.items():
            dotted = f"train.iterations.{key}"
            try:
                stage_id = int(key)
            except (TypeError, ValueError):
                chk.complain(dotted, f"stage id must be an integer, got {key!r}")
                continue
            chk.require(stage_id in (1, 2, 3), dotted, "stage id must be 1, 2, or 3")
            chk.require(_is_int(count) and count >= 0, dotted,
                        f"iteration count must be a non-negative integer, got {count!r}")
    chk.require(_is_int(train.get("checkpoint_every")) and train["checkpoint_every"] >= 1,
                "train.checkpoint_every", "must be a positive integer")
    chk.require(isinstance(train.get("aux_target_input"), bool),
                "train.aux_target_input", "must be true or false")

    gate = train.get("gate")
    if gate is not None:
        if chk.require(isinstance(gate, dict), "train.gate", "must be a mapping or null"):
            for key in gate:
                if key not in ("min_episodes", "completion_threshold", "reward_threshold"):
                    chk.complain(f"train.gate.{key}", "unknown key")
            if "min_episodes" in gate:
                chk.require(_is_int(gate["min_episodes"]) and gate["min_episodes"] >= 1,
                            "train.gate.min_episodes", "must be a positive integer")
            for key in ("completion_threshold", "reward_threshold"):
                if key in gate:
                    chk.require(_is_num(gate[key]), f"train.gate.{key}", "must be a number")

    ppo = train.get("ppo")
    if chk.require(isinstance(ppo, dict), "train.ppo", "must be a mapping"):
        known = set(DEFAULTS["train"]["ppo"])
        for key, value in ppo.items():
            dotted = f"train.ppo.{key}"
            if key not in known:
                chk.complain(dotted, "unknown key")
            elif key in ("buffer_size", "epochs", "episodes_per_batch"):
                chk.require(_is_int(value), dotted, f"must be an integer, got {value!r}")
            else:
                chk.require(_is_num(value), dotted, f"must be a number, got {value!r}")
        if not chk.errors:
            try:
                PPOConfig(**ppo)
            except ValueError as exc:
                chk.complain("train.ppo", str(exc))


def _check_eval(chk: _Checker, ev: dict) -> None:
    if not isinstance(ev, dict):
        return
    directive = ev.get("directive")
    chk.require(isinstance(directive, str) and directive.upper() in DIRECTIVE_FORMS,
                "eval.directive", f"must be one of {list(DIRECTIVE_FORMS)}, got {directive!r}")
    for key in ("episodes_per_motion", "cycles", "max_steps"):
        chk.require(_is_int(ev.get(key)) and ev[key] >= 1, f"eval.{key}",
                    "must be a positive integer")
    baseline = ev.get("baseline")
    if baseline is not None:
        chk.require(baseline in BASELINES, "eval.baseline",
                    f"must be one of {list(BASELINES)} or null, got {baseline!r}")
    if ev.get("seed") is not None:
        chk.require(_is_int(ev["seed"]) and ev["seed"] >= 0, "eval.seed",
                    "must be a non-negative integer or null")
    chk.require(isinstance(ev.get("randomize"), bool), "eval.randomize",
                "must be true or false")


def validate_config(cfg: dict, path: str = "<config>", lines: dict | None = None) -> list[str]:
    """Returns diagnostics for a merged config; empty means valid."""
    chk = _Checker(path, lines or {})
    version = cfg.get("version")
    if not chk.require(version == CONFIG_VERSION, "version",
                       f"unsupported config version {version!r}, expected {CONFIG_VERSION}"):
        return chk.errors
    _check_section_keys(chk, cfg)

    run = cfg.get("run", {})
    if isinstance(run, dict):
        chk.require(_is_int(run.get("seed")) and run["seed"] >= 0, "run.seed",
                    "must be a non-negative integer")
        if run.get("workers") is not None:
            chk.require(_is_int(run["workers"]) and run["workers"] >= 1, "run.workers",
                        "must be a positive integer or null for all cores")
        chk.require(isinstance(run.get("out_dir"), str) and run["out_dir"],
                    "run.out_dir", "must be a non-empty string")

    model = cfg.get("model", {})
    if isinstance(model, dict) and model.get("path") is not None:
        chk.require(isinstance(model["path"], str), "model.path",
                    "must be a string or null")
    motions = cfg.get("motions", {})
    if isinstance(motions, dict) and motions.get("dir") is not None:
        chk.require(isinstance(motions["dir"], str), "motions.dir",
                    "must be a string or null")

    _check_train(chk, cfg.get("train", {}))
    _check_eval(chk, cfg.get("eval", {}))

    serve = cfg.get("serve", {})
    if isinstance(serve, dict):
        chk.require(isinstance(serve.get("host"), str) and serve["host"],
                    "serve.host", "must be a non-empty string")
        chk.require(_is_int(serve.get("port")) and 1 <= serve["port"] <= 65535,
                    "serve.port", "must be an integer in [1, 65535]")
        chk.require(_is_num(serve.get("rate_hz")) and serve["rate_hz"] > 0,
                    "serve.rate_hz", "must be a positive number")
        chk.require(_is_num(serve.get("speed")) and serve["speed"] > 0,
                    "serve.speed", "must be a positive number")
    return chk.errors


def _normalize(cfg: dict) -> dict:
    cfg["train"]["iterations"] = {
        int(k): int(v) for k, v in cfg["train"]["iterations"].items()}
    cfg["eval"]["directive"] = cfg["eval"]["directive"].upper()
    cfg["serve"]["rate_hz"] = float(cfg["serve"]["rate_hz"])
    cfg["serve"]["speed"] = float(cfg["serve"]["speed"])
    return cfg


def load_config(path) -> dict:
    """Read, merge over defaults, validate, and normalize one YAML config."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    try:
        raw = yaml.safe_load(text)
        tree = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{where}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: top level must be a mapping")

    lines = _key_lines(tree) if tree is not None else {}
    merged = _merge(DEFAULTS, raw)
    # Version must come from the file, not from the defaults.
    if "version" not in raw:
        raise ConfigError(f"{path}: version: missing (expected {CONFIG_VERSION})")
    errors = validate_config(merged, str(path), lines)
    if errors:
        raise ConfigError(errors)
    return _normalize(merged)


def default_config() -> dict:
    """The merged defaults, as if loaded from a file containing only them."""
    return _normalize(copy.deepcopy(DEFAULTS))


def worker_count(cfg: dict, override: int | None = None) -> int:
    """Explicit flag wins, then the config; null means every logical core."""
    if override is not None:
        return max(1, int(override))
    workers = cfg["run"]["workers"]
    if workers is None:
        return os.cpu_count() or 1
    return int(workers)


def config_hash(cfg: dict) -> str:
    """sha256 over the canonical JSON form; stable across key order."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def ppo_config(cfg: dict) -> PPOConfig:
    return PPOConfig(**cfg["train"]["ppo"])


def gate_config(cfg: dict) -> GateConfig | None:
    gate = cfg["train"]["gate"]
    return GateConfig(**gate) if gate is not None else None


def eval_config(cfg: dict, **overrides) -> EvalConfig:
    ev = cfg["eval"]
    fields = {
        "directive": ev["directive"],
        "episodes_per_motion": ev["episodes_per_motion"],
        "cycles": ev["cycles"],
        "max_steps": ev["max_steps"],
        "seed": ev["seed"] if ev["seed"] is not None else cfg["run"]["seed"],
        "baseline": ev["baseline"],
        "randomize": ev["randomize"],
    }
    fields.update(overrides)
    return EvalConfig(**fields)
