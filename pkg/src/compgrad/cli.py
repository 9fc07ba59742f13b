"""``compgrad`` command line: thin adapters over :mod:`compgrad.harness`.

Exit codes: 0 success, 1 gradient check above tolerance, 2 usage error,
3 unknown task, 4 malformed config, 5 numeric abort, 6 I/O error,
7 other library error. Failures print one JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from compgrad import __version__, harness
from compgrad.envs import gradcheck, load_env_config, make_env, parse_value
from compgrad.errors import CompGradError, ConfigError, NumericError, UnknownTaskError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_UNKNOWN_TASK = 3
EXIT_CONFIG = 4
EXIT_NUMERIC = 5
EXIT_IO = 6
EXIT_OTHER = 7

EXPERIMENT_COMMANDS = {
    "landscape": "landscape",
    "optimize": "optimize",
    "sweep-c": "sweep_c",
    "sweep-gamma": "sweep_gamma",
    "table1": "table1",
    "ivwh-train": "ivwh",
}
DEFAULT_PRESETS = {"table1": "table1", "ivwh": "ivwh_bouncing"}
GRADCHECK_TOL = 1e-5


def _kv(text):
    key, sep, val = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), parse_value(val)


def build_parser():
    parser = argparse.ArgumentParser(prog="compgrad", description="Composite gradient estimators: experiments, checks and plots.")
    parser.add_argument("--version", action="version", version=f"compgrad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENT_COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="preset name or path to a key = value file")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
        p.add_argument("--task", help="override the task name")
        p.add_argument("--set", dest="overrides", type=_kv, action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key (repeatable)")

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--task", required=True, help="environment name")
    p.add_argument("--config", help="environment constants (key = value file)")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for gradcheck.json")
    p.add_argument("--set", dest="overrides", type=_kv, action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("plot", help="emit SVG line charts from a harness CSV")
    p.add_argument("--input", required=True, help="CSV written by an experiment")
    p.add_argument("--metric", default="sqrt_error", help="column(s) to plot, comma separated")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--task", help="task name used in the file name and title")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--log", dest="log_y", action="store_true", default=None)
    scale.add_argument("--linear", dest="log_y", action="store_false")

    sub.add_parser("presets", help="list available presets")
    return parser


def _experiment_config(args, experiment):
    overrides = dict(args.overrides)
    overrides["experiment"] = experiment
    if args.task:
        overrides["task"] = args.task
    if args.seed is not None:
        overrides["seed"] = args.seed
    name = args.config or DEFAULT_PRESETS.get(experiment)
    if name is None:
        if not args.task:
            raise ConfigError("give --config (preset or file) or --task")
        return harness.ExperimentConfig.from_mapping(overrides)
    return harness.load_config(name, **overrides)


def cmd_experiment(args, experiment):
    config = _experiment_config(args, experiment)
    path = harness.run_experiment(config, args.out, jobs=args.jobs)
    print(path)
    return EXIT_OK


def cmd_gradcheck(args):
    if args.config:
        objective = load_env_config(args.config)
        if objective.name != args.task:
            raise ConfigError(f"config describes {objective.name!r}, not {args.task!r}")
    else:
        objective = make_env(args.task, **dict(args.overrides))
    res = gradcheck(objective, n_points=args.points, seed=args.seed)
    report = {
        "task": res.task,
        "points": res.points,
        "excluded": res.excluded,
        "max_rel_error": res.max_rel_error,
        "tolerance": GRADCHECK_TOL,
        "passed": res.max_rel_error < GRADCHECK_TOL,
    }
    text = json.dumps(report, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"gradcheck_{res.task}.json").write_text(text + "\n")
    return EXIT_OK if report["passed"] else EXIT_CHECK_FAILED


def cmd_plot(args):
    from compgrad.plot import emit_plot

    src = Path(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = args.task or src.stem
    for metric in filter(None, (m.strip() for m in args.metric.split(","))):
        target = out / f"{task}_{metric}.svg"
        emit_plot(src, metric, target, log_y=args.log_y, title=f"{task}: {metric}")
        print(target)
    return EXIT_OK


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command in EXPERIMENT_COMMANDS:
            return cmd_experiment(args, EXPERIMENT_COMMANDS[args.command])
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "plot":
            return cmd_plot(args)
        print("\n".join(harness.list_presets()))
        return EXIT_OK
    except UnknownTaskError as exc:
        return _fail(exc, EXIT_UNKNOWN_TASK)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except NumericError as exc:
        return _fail(exc, EXIT_NUMERIC, location=exc.location)
    except OSError as exc:
        return _fail(exc, EXIT_IO)
    except CompGradError as exc:
        return _fail(exc, EXIT_OTHER)


def _fail(exc, code, **extra):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    record.update({k: (v if isinstance(v, (int, float, str)) or v is None else str(v)) for k, v in extra.items()})
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
