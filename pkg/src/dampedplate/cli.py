"""Command line: ``dampedplate {simulate,equilibria,diagnose,sweep,spectrum}``.

Exit status 0 on success, 2 for configuration errors and 3 for numerical
failures; errors are also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ENV_PREFIX, ConfigError, parse_config, shipped_config
from .diagnostics import EquilibriumNotFound
from .forces import AiryConvergenceError, ForceEvaluationError
from .integrator import IntegrationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("simulate", "equilibria", "diagnose", "sweep", "spectrum")


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name, default)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dampedplate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=_env("CONFIG"),
                        help="config path, or the name of a bundled config (env DAMPEDPLATE_CONFIG)")
        sp.add_argument("--out", default=_env("OUT"), help="output directory (env DAMPEDPLATE_OUT)")
        sp.add_argument("--seed", type=int, default=_env("SEED"), help="run seed (env DAMPEDPLATE_SEED)")
        sp.add_argument("--deterministic", action="store_true", default=_env("DETERMINISTIC", "0") not in ("0", ""),
                        help="fixed dt sequence (env DAMPEDPLATE_DETERMINISTIC=1)")
        sp.add_argument("--threads", type=int, default=_env("THREADS"),
                        help="worker processes for sweeps (env DAMPEDPLATE_THREADS)")
        sp.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                        help="override a config entry; VALUE is parsed as TOML")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            sp.add_argument("--resume", help="continue from a checkpoint file")
            sp.add_argument("--stop-at", type=float, help="halt at this sample time, leaving a checkpoint")
        if name == "diagnose":
            sp.add_argument("--select", help="comma-separated diagnostics, overriding the config")
        if name == "spectrum":
            sp.add_argument("--count", type=int, default=20, help="rows to print")
    return p


def _overrides(args) -> dict:
    from .config import parse_value

    out = {}
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError("override", f"--set expects TABLE.KEY=VALUE, got {item!r}")
        out[key.strip()] = parse_value(raw.strip())
    if args.seed is not None:
        out["run.seed"] = int(args.seed)
    if args.deterministic:
        out["run.deterministic"] = True
    return out


def _resolve_config(arg: str | None) -> Path:
    if not arg:
        raise ConfigError("missing-config", "no config given (use --config or DAMPEDPLATE_CONFIG)")
    p = Path(arg)
    if p.exists():
        return p
    try:
        return shipped_config(arg)
    except FileNotFoundError:
        raise ConfigError("io", f"config {arg!r} not found") from None


def _fail(code: int, payload: dict, out: str | None) -> int:
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from . import runs

    try:
        cfg = parse_config(_resolve_config(args.config), _overrides(args))
        out = args.out or os.path.join(cfg.out_dir, args.command)
        if args.threads:
            os.environ.setdefault("OMP_NUM_THREADS", "1")
        if args.command == "simulate":
            res = runs.run_simulate(cfg, out, resume=args.resume, stop_at=args.stop_at)
            print(json.dumps(runs.jsonable(res["summary"]), sort_keys=True))
            return EXIT_OK if all(c["pass"] for c in res["checks"].values()) else EXIT_NUMERICAL
        if args.command == "equilibria":
            res = runs.run_equilibria(cfg, out)
            print(json.dumps({"count": res["count"], "out": str(out)}))
        elif args.command == "diagnose":
            select = [s.strip() for s in args.select.split(",")] if args.select else None
            if select:
                from .config import DIAGNOSTICS

                bad = [s for s in select if s not in DIAGNOSTICS]
                if bad:
                    raise ConfigError("diagnostics-select", f"unknown diagnostic(s) {bad}")
            res = runs.run_diagnose(cfg, out, select)
            print(json.dumps({"diagnostics": sorted(res), "out": str(out)}))
        elif args.command == "sweep":
            res = runs.run_sweep(cfg, out, workers=args.threads)
            print(json.dumps({"points": len(res["points"]), "count_changes": res["count_changes"], "out": str(out)}))
        elif args.command == "spectrum":
            print(f"{'rank':>5} {'mode':>10} {'lambda':>24} {'laplace':>24}")
            for rank, mode, lam, mu in runs.spectrum_table(cfg, args.count):
                print(f"{rank:>5} {mode:>10} {lam!r:>24} {mu!r:>24}")
        return EXIT_OK
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc.to_dict(), None)
    except CheckpointError as exc:
        return _fail(EXIT_CONFIG, {"error": "checkpoint", "message": str(exc)}, None)
    except IntegrationError as exc:
        return _fail(EXIT_NUMERICAL, {"error": "numerical", "kind": "integration", "message": str(exc)}, args.out)
    except (EquilibriumNotFound, AiryConvergenceError, ForceEvaluationError, FloatingPointError,
            ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, {"error": "numerical", "kind": type(exc).__name__, "message": str(exc)},
                     args.out)


if __name__ == "__main__":
    sys.exit(main())
