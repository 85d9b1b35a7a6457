"""Task runners behind the command line.

Each runner takes a validated :class:`~minmax.harness.config.ExperimentConfig`
and returns a :class:`RunResult`; :func:`write_results` serializes it.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from minmax import transforms
from minmax.attack import (
    ApgdConfig,
    apgd_solve,
    ensemble_oracles,
    transform_oracles,
    universal_constraint,
    universal_oracles,
)
from minmax.defense import AtConfig, adversarial_correctness, ampgd_train
from minmax.harness import metrics
from minmax.harness.config import _bool, floats, names, parse_attacks
from minmax.harness.data import load_idx, make_synthetic
from minmax.models import MlpModel, accuracy, load_checkpoint, model_a_dims, save_checkpoint, train_natural
from minmax.numkit import make_rng
from minmax.projections import ConstraintSet, norm_name, parse_norm, project

# substream ids for make_rng(seed, STREAM, ...)
DATA_STREAM = 1
INIT_STREAM = 2
TRAIN_STREAM = 3
MC_STREAM = 4

METRIC_FIELDS = ("metric", "value", "norm", "eps", "k", "seed", "iter")
WEIGHT_FIELDS = ("iter", "domain", "weight")


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    # (iters, K) mean domain weights
    weights: np.ndarray = None
    # per-instance solver traces (attack tasks) for in-process inspection
    traces: list = field(default_factory=list)
    models: list = field(default_factory=list)
    output: np.ndarray = None

    def add(self, name, value, **tags):
        self.records.append(metrics.MetricRecord(name, float(value), **tags))

    def metric(self, name):
        return [r.value for r in self.records if r.name == name]


def load_data(cfg):
    """``(train, test)`` datasets; synthetic sources split one draw 75/25."""
    src = cfg.get("data", "source")
    if src == "mnist":
        needs_train = cfg.task.startswith("train") or not cfg.model_paths()
        train = None
        if needs_train:
            train = load_idx(cfg.path("data", "images"), cfg.path("data", "labels"), int(cfg.get("data", "limit")))
        test = load_idx(cfg.path("data", "test_images"), cfg.path("data", "test_labels"),
                        int(cfg.get("data", "test_limit")))
        return train, test
    n, d, classes = (int(cfg.get("data", k)) for k in ("n", "d", "classes"))
    full = make_synthetic(src, n, d, classes, make_rng(cfg.seed, DATA_STREAM))
    cut = max(classes, (3 * n) // 4)
    return full.subset(slice(0, cut)), full.subset(slice(cut, n))


def _num_classes(*datasets):
    return max(int(d.labels.max()) + 1 for d in datasets if d is not None and len(d))


def natural_models(cfg, train, classes):
    """Checkpoints listed in ``[model] paths``, else one trained model per width."""
    paths = cfg.model_paths()
    if paths:
        return [load_checkpoint(p) for p in paths]
    out = []
    for i, width in enumerate(floats(cfg.get("model", "widths"))):
        model = MlpModel.init(model_a_dims(train.dim, classes, width), make_rng(cfg.seed, INIT_STREAM, i))
        model, _ = train_natural(
            model,
            train,
            epochs=int(cfg.get("model", "epochs")),
            lr=float(cfg.get("model", "lr")),
            batch=int(cfg.get("model", "batch")),
            rng=make_rng(cfg.seed, TRAIN_STREAM, i),
        )
        out.append(model)
    return out


def apgd_config(cfg, constraint):
    a = cfg.sections["attack"]
    return ApgdConfig(
        constraint,
        alpha=float(a["alpha"]),
        beta=float(a["beta"]),
        gamma=float(a["gamma"]),
        iters=int(a["iters"]),
        init_delta=a["init"],
        seed=cfg.seed,
        learn_weights=_bool(a["learn_weights"]),
    )


def _attack_tags(cfg, k):
    a = cfg.sections["attack"]
    return {"norm": norm_name(parse_norm(a["norm"])), "eps": float(a["eps"]), "k": k, "seed": cfg.seed,
            "iter": int(a["iters"])}


def _mean_weights(traces):
    return np.mean([np.array(t.weights) for t in traces], axis=0)


def run_attack_ensemble(cfg):
    train, test = load_data(cfg)
    models = natural_models(cfg, train, _num_classes(train, test))
    a = cfg.sections["attack"]
    n = min(int(a["images"]), len(test))
    res = RunResult(models=models)
    success = np.zeros((n, len(models)), dtype=bool)
    for i in range(n):
        x, y = test.inputs[i], int(test.labels[i])
        oracles = ensemble_oracles(models, x, y, a["loss"])
        trace = apgd_solve(oracles, apgd_config(cfg, ConstraintSet.around(a["norm"], float(a["eps"]), x)))
        success[i] = [int(m.predict(x + trace.delta)) != y for m in models]
        res.traces.append(trace)
    tags = _attack_tags(cfg, len(models))
    res.add("asr_all", metrics.asr_all(success), **tags)
    res.add("asr_avg", 100.0 * success.mean(), **tags)
    for k in range(len(models)):
        res.add(f"asr_model{k}", 100.0 * success[:, k].mean(), **tags)
    res.weights = _mean_weights(res.traces)
    return res


def run_attack_universal(cfg):
    train, test = load_data(cfg)
    model = natural_models(cfg, train, _num_classes(train, test))[0]
    a = cfg.sections["attack"]
    groups, size = int(a["groups"]), int(a["group_size"])
    if groups * size > len(test):
        raise ValueError(f"need {groups * size} test images for {groups} groups of {size}, have {len(test)}")
    res = RunResult(models=[model])
    success = np.zeros((groups, size), dtype=bool)
    for g in range(groups):
        X = test.inputs[g * size : (g + 1) * size]
        Y = test.labels[g * size : (g + 1) * size]
        oracles = universal_oracles(model, zip(X, (int(y) for y in Y)), a["loss"])
        cs = universal_constraint(a["norm"], float(a["eps"]), X)
        trace = apgd_solve(oracles, apgd_config(cfg, cs))
        success[g] = model.predict(X + trace.delta) != Y
        res.traces.append(trace)
    tags = _attack_tags(cfg, size)
    asr_avg, asr_gp = metrics.asr_group(success)
    res.add("asr_avg", asr_avg, **tags)
    res.add("asr_gp", asr_gp, **tags)
    res.weights = _mean_weights(res.traces)
    return res


def _transform_success(model, img, y, spec, rng, draws):
    """Deterministic: fooled under the transform. Stochastic: fooled on a majority of fresh draws."""
    if not spec.stochastic:
        return int(model.predict(transforms.apply(spec, img).ravel())) != y
    hits = [int(model.predict(transforms.apply(transforms.sample(spec, rng), img).ravel())) != y for _ in range(draws)]
    return 2 * sum(hits) > draws


def run_attack_transform(cfg):
    train, test = load_data(cfg)
    model = natural_models(cfg, train, _num_classes(train, test))[0]
    a = cfg.sections["attack"]
    suite = transforms.stochastic_suite if _bool(a["stochastic"]) else transforms.deterministic_suite
    specs = suite(names(a["transforms"]))
    mc = int(a["mc_samples"])
    n = min(int(a["images"]), len(test))
    res = RunResult(models=[model])
    success = np.zeros((n, len(specs)), dtype=bool)
    for i in range(n):
        x, y = test.inputs[i], int(test.labels[i])
        # each image gets its own Monte Carlo seed so the draws differ across images
        mc_seed = int(make_rng(cfg.seed, MC_STREAM, i).integers(2**31))
        oracles = transform_oracles(model, x, y, specs, test.shape, mc, mc_seed, a["loss"])
        trace = apgd_solve(oracles, apgd_config(cfg, ConstraintSet.around(a["norm"], float(a["eps"]), x)))
        img = (x + trace.delta).reshape(test.shape)
        eval_rng = make_rng(cfg.seed, DATA_STREAM, i)
        success[i] = [_transform_success(model, img, y, s, eval_rng, mc) for s in specs]
        res.traces.append(trace)
    tags = _attack_tags(cfg, len(specs))
    res.add("asr_all", metrics.asr_all(success), **tags)
    res.add("asr_avg", 100.0 * success.mean(), **tags)
    res.weights = _mean_weights(res.traces)
    return res


def run_train_natural(cfg):
    train, test = load_data(cfg)
    classes = _num_classes(train, test)
    width = floats(cfg.get("model", "widths"))[0]
    model = MlpModel.init(model_a_dims(train.dim, classes, width), make_rng(cfg.seed, INIT_STREAM, 0))
    model, hist = train_natural(
        model,
        train,
        epochs=int(cfg.get("model", "epochs")),
        lr=float(cfg.get("model", "lr")),
        batch=int(cfg.get("model", "batch")),
        rng=make_rng(cfg.seed, TRAIN_STREAM, 0),
    )
    res = RunResult(models=[model])
    for epoch, (loss, acc) in enumerate(zip(hist.loss, hist.accuracy), start=1):
        res.add("train_loss", loss, seed=cfg.seed, iter=epoch)
        res.add("train_acc", 100.0 * acc, seed=cfg.seed, iter=epoch)
    res.add("test_acc", 100.0 * accuracy(model, test.inputs, test.labels), seed=cfg.seed, iter=len(hist.loss))
    return res


def at_config(cfg):
    s = cfg.sections["at"]
    return AtConfig(
        parse_attacks(s["attacks"]),
        steps=int(s["steps"]),
        alpha=float(s["alpha"]),
        beta=float(s["beta"]),
        gamma=float(s["gamma"]),
        lr=float(s["lr"]),
        epochs=int(s["epochs"]),
        batch=int(s["batch"]),
        adv_ratio=float(s["adv_ratio"]),
        lam=float(s["lam"]),
        learn_weights=_bool(s["learn_weights"]),
        seed=cfg.seed,
    )


def run_train_at(cfg):
    train, test = load_data(cfg)
    classes = _num_classes(train, test)
    width = floats(cfg.get("model", "widths"))[0]
    at = at_config(cfg)
    model = MlpModel.init(model_a_dims(train.dim, classes, width), make_rng(cfg.seed, INIT_STREAM, 0))
    model, trace = ampgd_train(model, train, at)
    res = RunResult(models=[model])
    K = len(at.attacks)
    for epoch, loss in enumerate(trace.loss, start=1):
        res.add("train_loss", loss, k=K, seed=cfg.seed, iter=epoch)
    epochs = len(trace.loss)
    correct = adversarial_correctness(model, test, at.attacks, int(cfg.get("at", "eval_steps")), at.alpha)
    acc_max, acc_avg = metrics.acc_adv(correct)
    res.add("test_acc", 100.0 * accuracy(model, test.inputs, test.labels), k=K, seed=cfg.seed, iter=epochs)
    res.add("acc_adv_max", acc_max, k=K, seed=cfg.seed, iter=epochs)
    res.add("acc_adv_avg", acc_avg, k=K, seed=cfg.seed, iter=epochs)
    for atk, col in zip(at.attacks, correct.T):
        res.add("acc_adv", 100.0 * col.mean(), norm=norm_name(atk.p), eps=atk.eps, k=K, seed=cfg.seed, iter=epochs)
    if epochs:
        # one row per epoch: the weights averaged over that epoch's batches
        res.weights = np.array([np.mean(w, axis=0) for w in trace.batch_weights])
    return res


def run_project(cfg):
    s = cfg.sections["project"]
    vec = np.array(floats(s["vector"]))
    # an omitted bound defaults to |vector|, which never binds: projections shrink magnitudes
    lower = np.array(floats(s["lower"])) if floats(s["lower"]) else -np.abs(vec)
    upper = np.array(floats(s["upper"])) if floats(s["upper"]) else np.abs(vec)
    cs = ConstraintSet(s["norm"], float(s["eps"]), lower, upper)
    out = project(vec, cs)
    res = RunResult(output=out)
    for i, v in enumerate(out):
        res.add(f"x{i}", v, norm=norm_name(cs.p), eps=cs.eps, seed=cfg.seed)
    return res


RUNNERS = {
    "attack-ensemble": run_attack_ensemble,
    "attack-universal": run_attack_universal,
    "attack-transform": run_attack_transform,
    "train-natural": run_train_natural,
    "train-at": run_train_at,
    "project": run_project,
}


def _fmt(v):
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_results(cfg, res):
    """Write ``metrics.csv``, ``weights.csv``, ``manifest.json`` (and a checkpoint for train tasks)."""
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    seen = set()
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in res.records:
            if r.key in seen:
                raise ValueError(f"duplicate metric record {r.key}")
            seen.add(r.key)
            w.writerow([r.name, _fmt(r.value), r.norm, _fmt(r.eps), _fmt(r.k), _fmt(r.seed), _fmt(r.iter)])
    with open(out / "weights.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEIGHT_FIELDS)
        if res.weights is not None:
            for t, row in enumerate(res.weights):
                for k, val in enumerate(row):
                    w.writerow([t, k, _fmt(float(val))])
    files = ["metrics.csv", "weights.csv"]
    if cfg.task.startswith("train") and res.models:
        save_checkpoint(res.models[0], out / cfg.get("model", "save"))
        files.append(cfg.get("model", "save"))
    manifest = {"config": cfg.resolved(), "files": files}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg):
    """Run the configured task and write its outputs; returns the :class:`RunResult`."""
    res = RUNNERS[cfg.task](cfg)
    write_results(cfg, res)
    return res
