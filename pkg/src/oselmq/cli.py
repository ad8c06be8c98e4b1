"""Command-line entry point: ``oselmq train | bench | oracle``.

Settings come from the design's canonical config, then an optional key=value
file (``--config``), then explicit flags. Exit status is 0 on success, 2 for
bad configuration and 1 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError
from .harness import (
    ALGOS,
    RunConfig,
    aggregate,
    benchmark_ops,
    canonical_agent_config,
    run_trial,
    trial_seeds,
    write_csv,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    v = str(text).strip().lower()
    if v in ("", "none", "null"):
        return None
    return float(v)


# setting key -> (AgentConfig field, parser)
AGENT_KEYS = {
    "hidden": ("n_tilde", int),
    "seed": ("seed", int),
    "delta": ("delta", float),
    "eps1": ("eps1", float),
    "eps2": ("eps2", float),
    "gamma": ("gamma", float),
    "update_step": ("update_step", int),
    "terminal_reward": ("terminal_reward", _opt_float),
    "store_terminal": ("store_terminal", _bool),
}
RUN_KEYS = {
    "algo": str,
    "trials": int,
    "max_episodes": int,
    "reset_after": int,
    "solve_threshold": float,
    "out": str,
    "workers": int,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys become underscores."""
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in AGENT_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(settings: dict[str, str]) -> tuple[RunConfig, dict]:
    """Turn merged string settings into a validated RunConfig plus extras."""
    try:
        algo = settings.get("algo", "oselm-l2-lipschitz")
        overrides = {}
        for key, (fname, conv) in AGENT_KEYS.items():
            if key in settings:
                overrides[fname] = conv(settings[key])
        run = {}
        for key in ("trials", "max_episodes", "reset_after", "solve_threshold"):
            if key in settings:
                run[key] = RUN_KEYS[key](settings[key])
        extras = {
            "out": settings.get("out"),
            "workers": int(settings.get("workers", 1)),
            "seed": overrides.get("seed", 0),
        }
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if extras["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    agent = canonical_agent_config(algo, **overrides)
    return RunConfig(algo, agent, out_dir=extras["out"], **run), extras


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file; flags override it")
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--hidden", type=str, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oselmq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run training trials and write curves")
    _add_common(train)
    for flag in ("seed", "trials", "max-episodes", "delta", "eps1", "eps2", "gamma",
                 "update-step", "terminal-reward", "store-terminal", "reset-after",
                 "solve-threshold", "workers"):
        train.add_argument(f"--{flag}", type=str)
    train.add_argument("--out", help="output directory")

    bench = sub.add_parser("bench", help="time single operations")
    _add_common(bench)
    bench.add_argument("--reps", type=int, default=1000)
    bench.add_argument("--out", help="JSON report path")

    oracle = sub.add_parser("oracle", help="check the library against reference implementations")
    oracle.add_argument("--seed", type=int, default=0)
    return parser


def _merged_settings(args) -> dict[str, str]:
    settings = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("command", "config", "reps") or value is None:
            continue
        settings[key] = str(value)
    return settings


def cmd_train(args) -> int:
    cfg, extras = resolve(_merged_settings(args))
    seeds = trial_seeds(extras["seed"], cfg.trials)
    if extras["workers"] > 1:
        with ProcessPoolExecutor(max_workers=extras["workers"]) as pool:
            results = list(pool.map(run_trial, [cfg] * len(seeds), seeds))
    else:
        results = [run_trial(cfg, s) for s in seeds]
    for r in results:
        status = f"solved at episode {r.episodes_to_solve}" if r.solved else "not solved"
        print(f"seed {r.seed}: {status}, {len(r.steps)} episodes, {r.resets} resets, "
              f"final moving average {r.moving_average:.1f}")
    report = {"algo": cfg.algo, "aggregate": aggregate(results),
              "trials": [r.summary() for r in results]}
    agg = report["aggregate"]
    print(f"{cfg.algo}: solved {agg['solved']}/{agg['trials']}")
    if extras["out"]:
        out = Path(extras["out"])
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            write_csv(r, out / f"{cfg.algo}_seed{r.seed}.csv")
        (out / "summary.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    settings = _merged_settings(args)
    cfg, _ = resolve(settings)
    if args.reps < 1:
        raise ConfigError("--reps must be positive")
    report = benchmark_ops(cfg, reps=args.reps)
    text = json.dumps(report, indent=2) + "\n"
    if settings.get("out"):
        Path(settings["out"]).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle_suite import run_all

    results = run_all(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_RUNTIME


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"train": cmd_train, "bench": cmd_bench, "oracle": cmd_oracle}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
