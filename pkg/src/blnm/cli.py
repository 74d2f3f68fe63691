"""Command-line entry point: ``blnm <command> [options]``.

Exit codes: 0 success, 2 invalid input or usage, 1 runtime or I/O failure.
Options may also come from a JSON ``--config`` file; flags win over it.
The environment variable ``BLNM_SEED`` supplies the seed when neither does.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from .data import load_dataset, save_dataset
from .errors import BLNMError, ValidationError
from .estimate import DEConfig, Observation, estimate
from .net import ArchitectureSpec, count_params, load_model, save_model
from .synth import generate_dataset
from .train import TrainConfig, evaluate, save_report, train
from .tune import SearchSpace, format_table, save_tune_report, tune

CONFIG_SECTIONS = {
    "seed": None,
    "jobs": None,
    "paths": {"data", "test_data", "model", "report_dir", "observation"},
    "architecture": {"n_par", "n_dyn", "n_layers", "n_neurons", "n_states", "n_physical",
                     "disentanglement", "activation"},
    "train": {"max_iters", "grad_tol", "c1", "c2", "max_ls", "seed"},
    "tune": {"n_configs", "K", "iters_per_fold", "layers", "neurons", "states"},
    "de": {"pop_size", "p_best", "c", "archive", "max_generations", "max_evals",
           "target_loss", "seed", "restarts"},
    "generate": {"n", "dt_ms", "t_ms"},
}


def load_run_config(path):
    """Read and validate a JSON run configuration; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: top level must be an object")
    for key, value in cfg.items():
        if key not in CONFIG_SECTIONS:
            raise ValidationError(f"{path}: unknown key {key!r}")
        allowed = CONFIG_SECTIONS[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise ValidationError(f"{path}: section {key!r} must be an object")
            unknown = set(value) - allowed
            if unknown:
                raise ValidationError(f"{path}: unknown keys in {key!r}: {sorted(unknown)}")
    return cfg


def _pick(flag, cfg, section, key, default=None):
    if flag is not None:
        return flag
    return cfg.get(section, {}).get(key, default)


def _seed(args, cfg):
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("BLNM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"BLNM_SEED must be an integer, got {env!r}") from None
    return 0


def _require_path(path, what, kind="any"):
    if path is None:
        raise ValidationError(f"missing {what} path")
    if kind == "dir" and not os.path.isdir(path):
        raise ValidationError(f"{what} directory not found: {path}")
    if kind == "file" and not os.path.isfile(path):
        raise ValidationError(f"{what} file not found: {path}")
    if kind == "any" and not os.path.exists(path):
        raise ValidationError(f"{what} not found: {path}")
    return path


def _out_dir_ok(path, what):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ValidationError(f"directory for {what} does not exist: {parent}")
    return path


def _spec_from(args, cfg, n_par, n_physical):
    arch = cfg.get("architecture", {})
    n_states = _pick(args.states, cfg, "architecture", "n_states", 10)
    if n_physical is None:
        n_physical = min(9, n_states)
    return ArchitectureSpec(
        n_par=_pick(getattr(args, "n_par", None), cfg, "architecture", "n_par", n_par),
        n_layers=_pick(args.layers, cfg, "architecture", "n_layers", 7),
        n_neurons=_pick(args.neurons, cfg, "architecture", "n_neurons", 19),
        n_states=n_states,
        n_physical=_pick(getattr(args, "physical", None), cfg, "architecture", "n_physical", n_physical),
        disentanglement=_pick(args.level, cfg, "architecture", "disentanglement", 2),
        n_dyn=arch.get("n_dyn", 1),
        activation=arch.get("activation", "tanh"),
    )


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# -- commands ---------------------------------------------------------------------------

def cmd_generate(args, cfg):
    n = _pick(args.n, cfg, "generate", "n", 200)
    dt = _pick(args.dt_ms, cfg, "generate", "dt_ms", 5.0)
    T = _pick(args.t_ms, cfg, "generate", "t_ms", 600.0)
    out = _pick(args.out, cfg, "paths", "data")
    if out is None:
        raise ValidationError("missing --out")
    ds = generate_dataset(n, dt, T, _seed(args, cfg))
    save_dataset(ds, out)
    print(f"wrote {ds.n_samples} samples x {ds.times.size} time points x "
          f"{ds.n_channels} channels to {out}")


def cmd_train(args, cfg):
    data = _require_path(_pick(args.data, cfg, "paths", "data"), "dataset", "dir")
    test_path = _pick(args.test_data, cfg, "paths", "test_data")
    if test_path is not None:
        _require_path(test_path, "test dataset", "dir")
    out_model = _out_dir_ok(_pick(args.out_model, cfg, "paths", "model", "model.json"), "model")
    ds = load_dataset(data)
    spec = _spec_from(args, cfg, ds.n_par, ds.n_channels)
    seed = _seed(args, cfg)
    tc = dict(cfg.get("train", {}))
    tc.setdefault("seed", seed)
    if args.seed is not None:
        tc["seed"] = args.seed
    if args.iters is not None:
        tc["max_iters"] = args.iters
    tc.setdefault("max_iters", 50_000)
    weights, norm, report = train(ds, spec, TrainConfig(**tc))
    save_model(out_model, weights, norm)
    extra = {"architecture": spec.to_dict(), "n_params": count_params(spec), "data": data,
             "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    row = {"train_mse": report.final_loss}
    if test_path is not None:
        row["test_mse"] = evaluate(weights, norm, load_dataset(test_path))
        extra["test_mse"] = row["test_mse"]
    report_path = args.report or os.path.splitext(out_model)[0] + ".report.json"
    save_report(report_path, report, extra)
    print(f"iterations {report.iterations_used} ({report.termination_reason}), "
          f"{report.wall_time:.1f} s")
    print(format_table([row], list(row)))


def cmd_tune(args, cfg):
    data = _require_path(_pick(args.data, cfg, "paths", "data"), "dataset", "dir")
    out = _out_dir_ok(args.out_report or "tune_report.json", "report")
    k = _pick(args.k, cfg, "tune", "K", 5)
    if k < 2:
        raise ValidationError(f"--k must be at least 2, got {k}")
    t = cfg.get("tune", {})
    space = SearchSpace(tuple(t.get("layers", (1, 8))), tuple(t.get("neurons", (10, 30))),
                        tuple(t.get("states", (9, 12))))
    ds = load_dataset(data)
    result = tune(ds, space, _pick(args.configs, cfg, "tune", "n_configs", 50), k,
                  _pick(args.iters, cfg, "tune", "iters_per_fold", 10_000), _seed(args, cfg),
                  jobs=args.jobs or cfg.get("jobs", 1))
    save_tune_report(out, result)
    rows = [{"config": c["index"], "layers": c["architecture"]["n_layers"],
             "neurons": c["architecture"]["n_neurons"], "states": c["architecture"]["n_states"],
             "level": c["architecture"]["disentanglement"], "params": c["n_params"],
             "cv_mse": c["mean_loss"] if c["mean_loss"] is not None else "failed"}
            for c in result.configs]
    print(format_table(rows, list(rows[0])))
    print(f"best configuration: {result.best_index}")


def cmd_eval(args, cfg):
    model = _require_path(_pick(args.model, cfg, "paths", "model"), "model", "file")
    data = _require_path(_pick(args.data, cfg, "paths", "data"), "dataset", "dir")
    weights, norm = load_model(model)
    if norm is None:
        raise ValidationError(f"{model} carries no normalization")
    ds = load_dataset(data)
    steps = args.dt_ms or [ds.dt]
    for dt in steps:
        if not 0 < dt <= ds.T:
            raise ValidationError(f"--dt-ms {dt} outside (0, {ds.T}]")
    rows = [{"dt_ms": float(dt), "mse": evaluate(weights, norm, ds, dt)} for dt in steps]
    print(format_table(rows, ["dt_ms", "mse"]))


def _load_observation(path, sample):
    if os.path.isdir(path):
        ds = load_dataset(path)
        if not 0 <= sample < ds.n_samples:
            raise ValidationError(f"--sample {sample} outside 0..{ds.n_samples - 1}")
        return Observation.from_dataset(ds, sample), ds.params[sample]
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return Observation(arr[:, 0], arr[:, 1:]), None


def cmd_estimate(args, cfg):
    model = _require_path(_pick(args.model, cfg, "paths", "model"), "model", "file")
    obs_path = _require_path(_pick(args.observation, cfg, "paths", "observation"), "observation")
    weights, norm = load_model(model)
    if norm is None:
        raise ValidationError(f"{model} carries no normalization")
    obs, data_truth = _load_observation(obs_path, args.sample)
    truth = None
    if args.truth is not None:
        if args.truth == "data":
            if data_truth is None:
                raise ValidationError("--truth without values needs a dataset observation")
            truth = norm.params(data_truth)
        else:
            truth = norm.params(np.array([float(v) for v in args.truth.split(",")]))
    de = dict(cfg.get("de", {}))
    restarts = de.pop("restarts", 1)
    if args.restarts is not None:
        restarts = args.restarts
    if restarts < 1:
        raise ValidationError(f"--restarts must be at least 1, got {restarts}")
    for key, val in (("pop_size", args.de_pop), ("p_best", args.de_p), ("c", args.de_c),
                     ("max_generations", args.de_generations), ("target_loss", args.de_target)):
        if val is not None:
            de[key] = val
    if args.de_no_archive:
        de["archive"] = False
    base_seed = _seed(args, cfg)
    best = None
    for r in range(restarts):
        de["seed"] = base_seed + r
        result = estimate(weights, norm, obs, DEConfig(**de), truth)
        if best is None or result.best_loss < best.best_loss:
            best = result
    doc = best.to_dict()
    doc["theta_hat_raw"] = norm.params_inv(best.theta_hat).tolist()
    if args.out_report:
        _out_dir_ok(args.out_report, "report")
        _write_json(args.out_report, doc)
    print(f"best loss {best.best_loss:.6e} after {best.generations} generations "
          f"({best.wall_time:.2f} s)")
    rows = [{"param": k, "theta_hat": float(best.theta_hat[k]),
             "theta_hat_raw": doc["theta_hat_raw"][k]} for k in range(weights.spec.n_par)]
    if best.abs_error is not None:
        for k, row in enumerate(rows):
            row["abs_error"] = float(best.abs_error[k])
    print(format_table(rows, list(rows[0])))


def cmd_count_params(args, cfg):
    spec = _spec_from(args, cfg, 7, None)
    print(count_params(spec))


# -- parser -----------------------------------------------------------------------------

def _spec_flags(p, with_par=False):
    p.add_argument("--layers", type=int, help="hidden layers (default 7)")
    p.add_argument("--neurons", type=int, help="neurons per hidden layer (default 19)")
    p.add_argument("--states", type=int, help="total outputs, physical plus latent (default 10)")
    p.add_argument("--level", type=int, help="disentanglement level, 0 = fully connected (default 2)")
    if with_par:
        p.add_argument("--n-par", type=int, dest="n_par", help="parameter inputs (default 7)")
        p.add_argument("--physical", type=int, help="physical outputs (default: min(9, states))")


def build_parser():
    parser = argparse.ArgumentParser(prog="blnm", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic pseudo-ECG dataset")
    p.add_argument("--n", type=int)
    p.add_argument("--dt-ms", type=float, dest="dt_ms")
    p.add_argument("--t-ms", type=float, dest="t_ms")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a BLNM with BFGS")
    p.add_argument("--data")
    p.add_argument("--test-data", dest="test_data")
    _spec_flags(p)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-model", dest="out_model")
    p.add_argument("--report", help="training report path (default <model>.report.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="latin hypercube hyperparameter search with K-fold CV")
    p.add_argument("--data")
    p.add_argument("--configs", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out-report", dest="out_report")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="test MSE at one or more sampling steps")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--dt-ms", type=float, dest="dt_ms", nargs="+")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("estimate", help="recover parameters of an observation")
    p.add_argument("--model")
    p.add_argument("--observation", help="dataset directory or t_ms,<channels> CSV")
    p.add_argument("--sample", type=int, default=0, help="sample index in a dataset observation")
    p.add_argument("--truth", nargs="?", const="data",
                   help="raw true parameters, comma separated; bare flag takes them from the dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--de-pop", type=int, dest="de_pop")
    p.add_argument("--de-p", type=float, dest="de_p")
    p.add_argument("--de-c", type=float, dest="de_c")
    p.add_argument("--de-generations", type=int, dest="de_generations")
    p.add_argument("--de-target", type=float, dest="de_target")
    p.add_argument("--de-no-archive", action="store_true", dest="de_no_archive")
    p.add_argument("--restarts", type=int, help="independent DE runs, best kept (default 1)")
    p.add_argument("--out-report", dest="out_report")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("count-params", help="number of trainable parameters")
    _spec_flags(p, with_par=True)
    p.set_defaults(func=cmd_count_params)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        args.func(args, cfg)
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BLNMError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
