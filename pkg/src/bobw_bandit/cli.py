"""Command-line entry point: ``bobw-bandit {run,sweep,bounds,verify}``.

Exit codes: 0 success, 2 configuration or schema error, 3 numeric
verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import harness, theory, verification
from .core import BanditError, ConfigError
from .environments import TheoryInstance

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3

BOUNDS_SCHEMA = {
    "type": "object",
    "required": ["formula"],
    "properties": {
        "formula": {"enum": [f.value for f in theory.FormulaId] + ["h_of_z", "delta_of_epsilon"]},
        "mu": {"type": "array", "minItems": 2, "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "sigma_sq": {"type": "array", "minItems": 2, "items": {"type": "number", "minimum": 0}},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        "horizon": {"type": "integer", "minimum": 2},
        "K": {"type": "integer", "minimum": 1},
        "L_star": {"type": "number", "minimum": 0},
        "Q_infty": {"type": "number", "minimum": 0},
        "V1": {"type": "number", "minimum": 0},
        "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "z": {"type": "number", "minimum": 0},
        "R": {"type": "number", "minimum": 0},
        "C": {"type": "number", "minimum": 0},
        "allow_zero_variance": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_REQUIRED = {
    "stochastic_upper": ("mu", "sigma_sq", "horizon"),
    "adversarial_upper": ("K", "horizon", "L_star", "Q_infty"),
    "pathlength": ("K", "horizon", "L_star", "Q_infty", "V1", "eta"),
    "lower_bound_simplified": ("mu", "sigma_sq"),
    "lower_bound_approx": ("z",),
    "corrupted_shape": ("R", "C"),
    "h_of_z": ("z",),
    "delta_of_epsilon": (),
}


def evaluate_bound(spec: dict) -> dict:
    """Evaluate one bound request; raises ConfigError on malformed input."""
    try:
        jsonschema.validate(spec, BOUNDS_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"bounds input schema error: {exc.message}") from None
    formula = spec["formula"]
    missing = [k for k in _REQUIRED[formula] if k not in spec]
    if missing:
        raise ConfigError(f"formula {formula} needs fields {missing}")
    eps = float(spec.get("epsilon", 0.2))
    if "mu" in spec and len(spec["mu"]) != len(spec.get("sigma_sq", [])):
        raise ConfigError("mu and sigma_sq must have equal length")
    if formula == "stochastic_upper":
        inst = TheoryInstance(tuple(spec["mu"]), tuple(spec["sigma_sq"]))
        return theory.upper_bound_stochastic(inst, eps, spec["horizon"]).to_json()
    if formula == "adversarial_upper":
        return theory.upper_bound_adversarial(spec["K"], spec["horizon"], spec["L_star"],
                                              spec["Q_infty"]).to_json()
    if formula == "pathlength":
        return theory.upper_bound_pathlength(spec["K"], spec["horizon"], spec["L_star"],
                                             spec["Q_infty"], spec["V1"], spec["eta"]).to_json()
    if formula == "lower_bound_simplified":
        inst = TheoryInstance(tuple(spec["mu"]), tuple(spec["sigma_sq"]))
        return theory.lower_bound_simplified(inst, spec.get("allow_zero_variance", False)).to_json()
    if formula == "lower_bound_approx":
        z = spec["z"]
        return {"formula_id": formula, "value": theory.lower_bound_approx(z),
                "refined": theory.lower_bound_approx_refined(z),
                "supremum": theory.lower_bound_sup_limit(z)}
    if formula == "corrupted_shape":
        return theory.corrupted_shape(spec["R"], spec["C"]).to_json()
    if formula == "h_of_z":
        return {"formula_id": formula, "value": theory.h_of_z(spec["z"], eps), "epsilon": eps,
                "threshold": theory.h_threshold(eps), "c": theory.c_constant(eps)}
    return {"formula_id": formula, "value": theory.delta_of_epsilon(eps), "epsilon": eps}


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def cmd_run(args: argparse.Namespace) -> int:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
        cfg.raw["master_seed"] = args.seed
    result = harness.run_experiment(cfg, args.workers)
    out = args.out or cfg.output_dir or "out"
    csv_path, json_path = harness.write_outputs(result, out)
    print(f"{cfg.name}: final regret {result.final_mean:.4f} +- {result.final_se:.4f} "
          f"({len(cfg.seeds)} trials, {result.wall_clock:.1f}s)")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    raw = _read_json(args.config)
    rows = harness.run_sweep(raw, Path(args.config).parent, args.workers, args.seed)
    out = args.out or raw.get("output_dir") or "out"
    csv_path, _ = harness.write_sweep(rows, out, raw.get("name", "sweep"))
    for row in rows:
        print(f"{row['name']} {json.dumps(row['params'], sort_keys=True)}: "
              f"{row['final_mean_regret']:.4f} +- {row['final_se_regret']:.4f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    spec = _read_json(args.config)
    requests = spec if isinstance(spec, list) else [spec]
    reports = [evaluate_bound(r) for r in requests]
    text = json.dumps(reports if isinstance(spec, list) else reports[0], indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    results = verification.run_suite(args.approx_threshold, args.refined_threshold,
                                     args.instances, args.draws)
    for r in results:
        print(r.line())
    if args.out:
        Path(args.out).write_text(json.dumps([r.__dict__ for r in results], indent=2) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bobw-bandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
        p.add_argument("--config", required=needs_config, help="JSON input file")
        p.add_argument("--out", help="output directory (run, sweep) or file (bounds, verify)")

    for name, helptext in (("run", "run one experiment"), ("sweep", "run a parameter grid")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--workers", type=int, default=None, help="parallel trials (default: all cores)")
        p.add_argument("--seed", type=int, default=None, help="master seed override (u64)")
    common(sub.add_parser("bounds", help="evaluate a bound formula from an instance JSON"))
    p = sub.add_parser("verify", help="run the numeric-claim suite")
    p.add_argument("--out", help="write a JSON report here")
    p.add_argument("--approx-threshold", type=float, default=0.06)
    p.add_argument("--refined-threshold", type=float, default=0.006)
    p.add_argument("--instances", type=int, default=10_000, help="moment-equivalence instances")
    p.add_argument("--draws", type=int, default=1000, help="random draws per closed-form oracle")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_CONFIG
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "bounds": cmd_bounds, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except BanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
