"""Experiment configuration read from INI-style files.

Schema (every key optional unless noted)::

    [run]
    task = attack-ensemble      ; required, one of TASKS
    seed = 0
    out = results

    [data]
    source = mnist              ; mnist | blobs | moons
    images = data/mnist/train-images-idx3-ubyte.gz
    labels = data/mnist/train-labels-idx1-ubyte.gz
    test_images = data/mnist/t10k-images-idx3-ubyte.gz
    test_labels = data/mnist/t10k-labels-idx1-ubyte.gz
    limit = 1000
    test_limit = 500
    n = 400                     ; synthetic only
    d = 8
    classes = 2

    [model]
    paths = a.txt, b.txt        ; checkpoints; when empty, models are trained here
    widths = 0.25, 0.5          ; one natural model per width
    epochs = 20
    lr = 0.3
    batch = 32
    save = model.txt            ; train-* tasks: checkpoint written under out/

    [attack]
    norm = inf
    eps = 0.2
    alpha = 0.25
    beta = 0.02
    gamma = 3
    iters = 50
    init = zeros
    learn_weights = true
    loss = cw
    images = 100
    groups = 4                  ; universal: number of groups
    group_size = 4              ; universal: images per group (= K)
    transforms = ori, flh, flv, bri, gam, crop, rot
    stochastic = false
    mc_samples = 8

    [at]
    attacks = inf:0.2, 2:1.0
    steps = 20
    alpha = 0.1667
    beta = 0.02
    gamma = 4
    lr = 0.1
    epochs = 5
    batch = 32
    adv_ratio = 0.5
    lam = 0.1                   ; diversity weight, 0 disables it
    learn_weights = true
    eval_steps = 20

    [project]                   ; task = project
    norm = 1
    eps = 1.0
    vector = 0.5, -0.2, 0.9
    lower = -1, -1, -1
    upper = 1, 1, 1

All validation happens in :func:`load_config` / :func:`validate` so a bad
file fails before any data or model is loaded.
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from minmax import transforms
from minmax.errors import ConfigError
from minmax.models import LOSS_KINDS
from minmax.projections import ConstraintSet, parse_norm

TASKS = ("attack-ensemble", "attack-universal", "attack-transform", "train-at", "train-natural", "project")
SOURCES = ("mnist", "blobs", "moons")

_DEFAULTS = {
    "run": {"task": "", "seed": "0", "out": "results"},
    "data": {
        "source": "mnist",
        "images": "data/mnist/train-images-idx3-ubyte.gz",
        "labels": "data/mnist/train-labels-idx1-ubyte.gz",
        "test_images": "data/mnist/t10k-images-idx3-ubyte.gz",
        "test_labels": "data/mnist/t10k-labels-idx1-ubyte.gz",
        "limit": "1000",
        "test_limit": "500",
        "n": "400",
        "d": "8",
        "classes": "2",
    },
    "model": {"paths": "", "widths": "0.25, 0.5", "epochs": "20", "lr": "0.3", "batch": "32", "save": "model.txt"},
    "attack": {
        "norm": "inf",
        "eps": "0.2",
        "alpha": "0.25",
        "beta": "0.02",
        "gamma": "3",
        "iters": "50",
        "init": "zeros",
        "learn_weights": "true",
        "loss": "cw",
        "images": "100",
        "groups": "4",
        "group_size": "4",
        "transforms": "ori, flh, flv, bri, gam, crop, rot",
        "stochastic": "false",
        "mc_samples": "8",
    },
    "at": {
        "attacks": "inf:0.2",
        "steps": "20",
        "alpha": str(1 / 6),
        "beta": "0.02",
        "gamma": "4",
        "lr": "0.1",
        "epochs": "5",
        "batch": "32",
        "adv_ratio": "0.5",
        "lam": "0.1",
        "learn_weights": "true",
        "eval_steps": "20",
    },
    "project": {"norm": "2", "eps": "1", "vector": "", "lower": "", "upper": ""},
}


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    out: Path
    sections: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def get(self, section, key):
        return self.sections[section][key]

    def path(self, section, key):
        p = Path(self.get(section, key))
        return p if p.is_absolute() else self.base_dir / p

    def model_paths(self):
        return [p if p.is_absolute() else self.base_dir / p for p in map(Path, names(self.get("model", "paths")))]

    def resolved(self):
        """Plain-dict view used for the run manifest."""
        return {"task": self.task, "seed": self.seed, "out": str(self.out), **self.sections}


def floats(text):
    return [float(t) for t in text.replace(",", " ").split()] if text.strip() else []


def names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_attacks(text):
    """``"inf:0.2, 2:1.0"`` -> ``[(inf, 0.2), (2, 1.0)]``."""
    out = []
    for item in names(text):
        p, sep, eps = item.partition(":")
        if not sep:
            raise ConfigError(f"attack {item!r} is not of the form norm:eps")
        out.append((parse_norm(p), float(eps)))
    return out


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _number(sections, section, key, kind, lo=None, strict=False):
    raw = sections[section][key]
    try:
        val = kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from None
    if lo is not None and (val <= lo if strict else val < lo):
        rel = ">" if strict else ">="
        raise ConfigError(f"[{section}] {key} must be {rel} {lo}, got {val}")
    return val


def validate(cfg):
    """Check every field the task will touch; raise :class:`ConfigError` on the first problem."""
    s = cfg.sections
    task = cfg.task
    try:
        if task != "project":
            src = s["data"]["source"]
            if src not in SOURCES:
                raise ConfigError(f"[data] source must be one of {SOURCES}, got {src!r}")
            if src == "mnist":
                # attacks without checkpoints train their models first
                needs_train = task.startswith("train") or not names(s["model"]["paths"])
                files = ["images", "labels"] if needs_train else []
                files += ["test_images", "test_labels"]
                for key in files:
                    if not cfg.path("data", key).is_file():
                        raise ConfigError(f"[data] {key}: file not found: {cfg.path('data', key)}")
                _number(s, "data", "limit", int, 1)
                _number(s, "data", "test_limit", int, 1)
            else:
                n = _number(s, "data", "n", int, 1)
                _number(s, "data", "d", int, 2)
                classes = _number(s, "data", "classes", int, 2)
                if n < classes:
                    raise ConfigError("[data] n must be at least classes")
            for p in cfg.model_paths():
                if not p.is_file():
                    raise ConfigError(f"[model] checkpoint not found: {p}")
            if any(w <= 0 for w in floats(s["model"]["widths"])):
                raise ConfigError("[model] widths must be positive")
            _number(s, "model", "epochs", int, 0)
            _number(s, "model", "lr", float, 0)
            _number(s, "model", "batch", int, 1)

        if task.startswith("attack"):
            a = "attack"
            eps = _number(s, a, "eps", float)
            ConstraintSet(s[a]["norm"], eps, np.zeros(1), np.ones(1))
            for key in ("alpha", "beta"):
                _number(s, a, key, float, 0, strict=True)
            _number(s, a, "gamma", float, 0)
            _number(s, a, "iters", int, 1)
            _number(s, a, "images", int, 1)
            _number(s, a, "mc_samples", int, 1)
            if s[a]["init"] not in ("zeros", "random"):
                raise ConfigError("[attack] init must be zeros or random")
            if s[a]["loss"] not in LOSS_KINDS:
                raise ConfigError(f"[attack] loss must be one of {LOSS_KINDS}")
            _bool(s[a]["learn_weights"])
            _bool(s[a]["stochastic"])
            if task == "attack-ensemble" and len(names(s["model"]["paths"])) + len(floats(s["model"]["widths"])) < 1:
                raise ConfigError("attack-ensemble needs at least one model")
            if task == "attack-universal":
                _number(s, a, "groups", int, 1)
                _number(s, a, "group_size", int, 1)
            if task == "attack-transform":
                if s["data"]["source"] != "mnist":
                    raise ConfigError("attack-transform needs image data (source = mnist)")
                bad = [t for t in names(s[a]["transforms"]) if t not in transforms.SUITE_NAMES]
                if bad or not names(s[a]["transforms"]):
                    raise ConfigError(f"[attack] unknown or missing transforms: {bad}")

        if task == "train-at":
            attacks = parse_attacks(s["at"]["attacks"])
            if not attacks:
                raise ConfigError("[at] attacks is empty")
            for p, eps in attacks:
                ConstraintSet(p, eps, np.zeros(1), np.ones(1))
            for key in ("alpha", "beta"):
                _number(s, "at", key, float, 0, strict=True)
            for key in ("gamma", "lr", "lam"):
                _number(s, "at", key, float, 0)
            for key in ("steps", "batch", "eval_steps"):
                _number(s, "at", key, int, 1)
            _number(s, "at", "epochs", int, 0)
            ratio = _number(s, "at", "adv_ratio", float, 0)
            if ratio > 1:
                raise ConfigError("[at] adv_ratio must lie in [0, 1]")
            _bool(s["at"]["learn_weights"])

        if task == "project":
            pr = s["project"]
            vec, lo, up = floats(pr["vector"]), floats(pr["lower"]), floats(pr["upper"])
            if not vec:
                raise ConfigError("[project] vector is empty")
            lo = lo or list(-np.abs(vec))
            up = up or list(np.abs(vec))
            if not len(vec) == len(lo) == len(up):
                raise ConfigError("[project] vector, lower and upper differ in length")
            ConstraintSet(pr["norm"], _number(s, "project", "eps", float), lo, up)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, task=None, seed=None, out=None, overrides=None):
    """Read, merge with defaults, apply CLI overrides and validate."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    sections = {}
    for name, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        if parser.has_section(name):
            unknown = set(parser[name]) - set(defaults)
            if unknown:
                raise ConfigError(f"[{name}] unknown keys: {sorted(unknown)}")
            merged.update(parser[name])
        sections[name] = merged
    extra = set(parser.sections()) - set(_DEFAULTS)
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    for (sec, key), val in (overrides or {}).items():
        sections[sec][key] = str(val)
    run = sections.pop("run")
    task = task or run["task"]
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    if seed is None:
        try:
            seed = int(run["seed"])
        except ValueError:
            raise ConfigError(f"[run] seed = {run['seed']!r} is not an integer") from None
    cfg = ExperimentConfig(task, int(seed), Path(out if out is not None else run["out"]), sections, base_dir)
    return validate(cfg)
