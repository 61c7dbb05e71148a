"""Command-line entry point.

Every subcommand writes its results under ``--out``: result bodies that are
byte-identical across runs with the same arguments, plus ``run_meta.json``
holding the timestamp and host details.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bench import run_sinusoid_benchmark
from .errors import ConfigError, MetaRegError
from .evaluation import evaluate_baseline, evaluate_target, result_to_dict, write_metrics_csv, write_trace_csv
from .hpo import SearchSpace, random_search, write_trial_log
from .meta import MetaCheckpoint, MetaConfig, meta_train
from .net import NetworkSpec
from .synthetic import gpr_task_family
from .tasks import DEFAULT_BOUNDS, NormalizationBounds, load_task_csv, write_task_csv

SEED_ENV = "METAREG_SEED"

# dests holding paths that must exist when the command starts
FILE_ARGS = ("checkpoint", "target", "seed_csv", "tasks")
REQUIRED = {
    "synth-tasks": ("seed_csv",),
    "meta-train": ("tasks",),
    "eval": ("checkpoint", "target"),
    "baseline": ("tasks", "target"),
    "hpo": ("tasks",),
}


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", default=None, help="JSON run configuration; keys mirror the long flags")


def _add_net(p, hidden="64,64,64"):
    p.add_argument("--hidden", default=hidden, help="comma-separated hidden widths")
    p.add_argument("--activation", default="tanh", choices=("tanh", "relu"))
    p.add_argument("--bounds", default=",".join(str(b) for b in DEFAULT_BOUNDS),
                   help="feature maxima: power W, speed mm/min, powder g/min, wire g/min")


def _add_meta(p):
    d = MetaConfig()
    p.add_argument("--algo", default="maml", choices=("maml", "reptile"))
    p.add_argument("--inner-lr", type=float, default=d.inner_lr)
    p.add_argument("--outer-lr", type=float, default=d.outer_lr)
    p.add_argument("--inner-steps", type=int, default=d.inner_steps)
    p.add_argument("--adaptation-steps", type=int, default=d.adaptation_steps)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--support-fraction", type=float, default=d.support_fraction)
    p.add_argument("--outer-optimizer", default=d.outer_optimizer, choices=("sgd", "adam"))
    p.add_argument("--first-order", action="store_true", help="MAML without second-order terms")
    p.add_argument("--lr-schedule", default=d.lr_schedule, choices=("constant", "cosine"))
    p.add_argument("--reptile-average", action="store_true", help="average Reptile displacements")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metareg", description="Few-shot regression with MAML and Reptile")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-sinusoid", help="sinusoid regression benchmark")
    _add_common(p)
    p.add_argument("--algo", default="maml", choices=("maml", "reptile"))
    p.add_argument("--max-iterations", type=int, default=10000)
    p.add_argument("--support", type=int, default=10, help="support points per task")
    p.add_argument("--n-test", type=int, default=100, help="held-out test tasks")
    p.add_argument("--eval-steps", type=int, default=10)

    p = sub.add_parser("synth-tasks", help="synthesize related tasks from a seed CSV via GPR")
    _add_common(p)
    p.add_argument("--seed-csv", default=None)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--points", type=int, default=30, help="samples per synthesized task")
    p.add_argument("--additive-std", type=float, default=0.02)
    p.add_argument("--multiplicative-std", type=float, default=0.05)
    p.add_argument("--bounds", default=",".join(str(b) for b in DEFAULT_BOUNDS))

    p = sub.add_parser("meta-train", help="meta-train on task CSVs and write a checkpoint")
    _add_common(p)
    p.add_argument("--tasks", nargs="+", default=None)
    _add_net(p)
    _add_meta(p)

    p = sub.add_parser("eval", help="adapt a checkpoint to a target task with the resampling protocol")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--target", default=None)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--resamples", type=int, default=5)
    p.add_argument("--steps", type=int, default=None, help="adaptation steps (default: checkpoint config)")
    p.add_argument("--lr", type=float, default=None, help="adaptation rate (default: checkpoint inner rate)")

    p = sub.add_parser("baseline", help="vanilla network baselines")
    _add_common(p)
    p.add_argument("--tasks", nargs="+", default=None, help="source task CSVs for the pooled configuration")
    p.add_argument("--target", default=None)
    p.add_argument("--mode", default="both", choices=("pooled", "target_only", "both"))
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--resamples", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    _add_net(p)

    p = sub.add_parser("hpo", help="random search with task-level cross-validation")
    _add_common(p)
    p.add_argument("--tasks", nargs="+", default=None)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-val", type=int, default=2)
    p.add_argument("--space", default=None, help="JSON search space (keys: inner_lr, outer_lr, batch_size, inner_steps)")
    _add_net(p)
    _add_meta(p)
    return parser


def _apply_config(parser, sub_parser, args, argv):
    """Re-parse with values from ``--config`` as defaults; explicit flags still win."""
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    dests = {a.dest for a in sub_parser._actions} - {"help", "config"}
    values = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise ConfigError(f"unknown config key {key!r}")
        if dest in ("tasks",) and isinstance(value, str):
            value = [value]
        values[dest] = value
    sub_parser.set_defaults(**values)
    return parser.parse_args(argv)


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _resolve_seed(args):
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"${SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_run_meta(out, argv, command):
    _write_json(out / "run_meta.json", {
        "command": command,
        "argv": list(argv),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "host": platform.node(),
        "python": platform.python_version(),
        "version": __version__,
    })


def _bounds(args):
    return NormalizationBounds(_floats(args.bounds))


def _net(args, input_dim=4):
    return NetworkSpec(input_dim, _ints(args.hidden), 1, args.activation)


def _meta_config(args, seed):
    return MetaConfig(
        inner_lr=args.inner_lr, outer_lr=args.outer_lr, inner_steps=args.inner_steps,
        adaptation_steps=args.adaptation_steps, batch_size=args.batch_size, epochs=args.epochs,
        support_fraction=args.support_fraction, outer_optimizer=args.outer_optimizer,
        second_order=not args.first_order, lr_schedule=args.lr_schedule,
        reptile_average=args.reptile_average, seed=seed,
    )


def _load_tasks(paths, bounds):
    return [load_task_csv(p, bounds, task_id=Path(p).stem) for p in paths]


def cmd_bench_sinusoid(args, seed, out):
    def progress(it, loss):
        print(f"iteration {it}: mean query loss {loss:.4f}", file=sys.stderr)

    ckpt, report = run_sinusoid_benchmark(args.algo, seed, args.max_iterations, n_support=args.support,
                                          n_test=args.n_test, eval_steps=args.eval_steps, progress=progress)
    ckpt.save(out / "checkpoint.json")
    _write_json(out / "report.json", report)
    print(f"post-adaptation MSE after {args.eval_steps} steps: {report['post_adaptation_mse']:.4f}")


def cmd_synth_tasks(args, seed, out):
    bounds = _bounds(args)
    seed_task = load_task_csv(args.seed_csv, bounds)
    tasks, models = gpr_task_family(seed_task, args.n_train + args.n_test, args.points, bounds,
                                    args.additive_std, args.multiplicative_std, seed)
    for sub, chunk in (("train", tasks[:args.n_train]), ("test", tasks[args.n_train:])):
        (out / sub).mkdir(exist_ok=True)
        for t in chunk:
            write_task_csv(t, out / sub / f"{t.task_id}.csv")
    m = models[0]
    _write_json(out / "report.json", {
        "seed_csv": Path(args.seed_csv).name,
        "n_train": args.n_train,
        "n_test": args.n_test,
        "points": args.points,
        "additive_std": args.additive_std,
        "multiplicative_std": args.multiplicative_std,
        "gpr": {"lengthscales": m.lengthscales.tolist(), "signal_var": m.signal_var, "noise_var": m.noise_var},
        "seed": seed,
    })
    print(f"wrote {args.n_train} training and {args.n_test} test tasks to {out}")


def cmd_meta_train(args, seed, out):
    bounds = _bounds(args)
    tasks = _load_tasks(args.tasks, bounds)
    ckpt = meta_train(tasks, _net(args, bounds.dim), _meta_config(args, seed), args.algo, bounds, "log1p")
    ckpt.save(out / "checkpoint.json")
    _write_json(out / "report.json", {
        "algo": args.algo,
        "tasks": [t.task_id for t in tasks],
        "history": list(ckpt.history),
        "final_query_loss": ckpt.history[-1],
        "config": ckpt.config.to_dict(),
    })
    print(f"final mean query loss {ckpt.history[-1]:.6f}")


def cmd_eval(args, seed, out):
    ckpt = MetaCheckpoint.load(args.checkpoint)
    target = load_task_csv(args.target, ckpt.bounds or NormalizationBounds())
    res = evaluate_target(ckpt, target, args.fraction, args.resamples, args.steps, args.lr, seed)
    write_metrics_csv(res, out / "metrics.csv")
    write_trace_csv(res, out / "trace.csv")
    _write_json(out / "report.json", {
        "checkpoint": Path(args.checkpoint).name,
        "target": Path(args.target).name,
        "protocol": {"fraction": args.fraction, "resamples": args.resamples,
                     "steps": args.steps if args.steps is not None else ckpt.config.adaptation_steps,
                     "lr": args.lr if args.lr is not None else ckpt.config.inner_lr, "base_seed": seed},
        "algo": ckpt.algo,
        "results": result_to_dict(res),
    })
    print(f"mean R2 {res.mean.r2}, MSE {res.mean.mse_mm2:.6f} mm^2, MAE {res.mean.mae_mm:.6f} mm")


def cmd_baseline(args, seed, out):
    bounds = _bounds(args)
    sources = _load_tasks(args.tasks, bounds)
    target = load_task_csv(args.target, bounds)
    net = _net(args, bounds.dim)
    modes = ("pooled", "target_only") if args.mode == "both" else (args.mode,)
    report = {"target": Path(args.target).name, "net": net.to_dict(), "epochs": args.epochs, "lr": args.lr,
              "fraction": args.fraction, "resamples": args.resamples, "results": {}}
    for mode in modes:
        res = evaluate_baseline(target, net, mode, sources, bounds, "log1p", args.fraction, args.resamples,
                                args.epochs, args.lr, seed)
        write_metrics_csv(res, out / f"metrics_{mode}.csv")
        report["results"][mode] = result_to_dict(res)
        print(f"{mode}: mean R2 {res.mean.r2}, MSE {res.mean.mse_mm2:.6f} mm^2")
    _write_json(out / "report.json", report)


def cmd_hpo(args, seed, out):
    bounds = _bounds(args)
    tasks = _load_tasks(args.tasks, bounds)
    space = SearchSpace()
    if args.space:
        try:
            raw = json.loads(Path(args.space).read_text(encoding="utf-8"))
            space = SearchSpace(**{k: tuple(v) for k, v in raw.items()})
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid search space {args.space}: {exc}") from None
    best, log = random_search(space, tasks, _net(args, bounds.dim), args.algo, args.trials, seed,
                              _meta_config(args, seed), args.folds, args.n_val, bounds, "log1p")
    write_trial_log(log, out / "trials.csv")
    _write_json(out / "best_config.json", best.to_dict())
    print(f"best objective {min(r['objective'] for r in log):.6f} over {len(log)} trials")


COMMANDS = {
    "bench-sinusoid": cmd_bench_sinusoid,
    "synth-tasks": cmd_synth_tasks,
    "meta-train": cmd_meta_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "hpo": cmd_hpo,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    sub_parser = _subparser(parser, args.command)
    try:
        if args.config:
            args = _apply_config(parser, sub_parser, args, argv)
        missing = [d for d in REQUIRED.get(args.command, ()) if not getattr(args, d)]
        if missing:
            sub_parser.print_usage(sys.stderr)
            print(f"metareg {args.command}: error: the following arguments are required: "
                  + ", ".join("--" + d.replace("_", "-") for d in missing), file=sys.stderr)
            return 2
        for dest in FILE_ARGS:
            value = getattr(args, dest, None)
            for path in ([value] if isinstance(value, str) else value or []):
                if not Path(path).is_file():
                    raise ConfigError(f"--{dest.replace('_', '-')}: file not found: {path}")
        seed = _resolve_seed(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"metareg {args.command}: error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, seed, out)
    except ConfigError as exc:
        print(f"metareg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MetaRegError, OSError) as exc:
        print(f"metareg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _write_run_meta(out, argv, args.command)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
