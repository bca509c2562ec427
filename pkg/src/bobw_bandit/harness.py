"""Experiment orchestration: config parsing, seeded trials, outputs.

Each trial ``j`` draws from its own generators derived from
``SeedSequence(master_seed, spawn_key=(j,))``: child 0 feeds the environment
and child 1 the policy's per-round uniforms. Adding trials never perturbs
existing ones, and results do not depend on worker count or completion order.
"""
from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import numpy as np

from . import __version__, _kernels
from .baselines import (
    BaselineConfig,
    TsallisInfIW,
    TsallisInfRV,
    Ucb1,
    UcbV,
    UniformRandom,
    make_baseline,
)
from .core import ConfigError, SpecError
from .environments import (
    Bernoulli,
    Beta,
    Constant,
    CorruptionSpec,
    Discrete,
    Environment,
    FlipOptimalPrefix,
    RandomSpikes,
    Scripted,
    StochasticallyConstrained,
    StochasticSpec,
    TheoryInstance,
    WorstCaseSwitch,
    ground_truth,
)
from .metrics import (
    RegretMode,
    TrialRecord,
    aggregate,
    compute_C,
    compute_Q_infty,
    compute_V1,
    regret_trajectory,
    write_trajectory_csv,
)
from .policy import BobwPolicy, EmpiricalMean, Ewma, PolicyConfig
from .solver import DEFAULT_TOL
from . import theory

SCHEMA_PATH = Path(__file__).with_name("config_schema.json")
Q_INFTY_MAX_ROWS = 1_000_000
CHECKPOINTS = (1_000, 10_000, 100_000)


def load_schema() -> dict:
    with open(SCHEMA_PATH) as fh:
        return json.load(fh)


# --- config parsing -----------------------------------------------------------

def _parse_arm(d: dict):
    kind = d["dist"]
    if kind == "bernoulli":
        return Bernoulli(float(d["mu"]))
    if kind == "beta":
        return Beta(float(d["a"]), float(d["b"]))
    if kind == "discrete":
        return Discrete(tuple(d["points"]), tuple(d["probs"]))
    if kind == "constant":
        return Constant(float(d["v"]))
    raise ConfigError(f"unknown arm distribution {kind!r}")


def parse_environment(d: dict, base_dir: Path | None = None):
    kind = d["type"]
    if kind == "stochastic":
        return StochasticSpec(tuple(_parse_arm(a) for a in d["arms"]))
    if kind == "corrupted":
        strategy = d.get("strategy", "flip_optimal_prefix")
        strat = FlipOptimalPrefix() if strategy == "flip_optimal_prefix" else RandomSpikes(float(d["rate"]))
        base = StochasticSpec(tuple(_parse_arm(a) for a in d["arms"]))
        return CorruptionSpec(base, float(d["budget"]), strat)
    if kind == "scripted":
        if "csv" in d:
            path = Path(d["csv"])
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            return Scripted.from_csv(path)
        return Scripted(np.asarray(d["losses"], dtype=np.float64))
    if kind == "stochastically_constrained":
        return StochasticallyConstrained(
            StochasticSpec(tuple(_parse_arm(a) for a in d["first"])),
            StochasticSpec(tuple(_parse_arm(a) for a in d["second"])),
            tuple(d["switch_rounds"]))
    if kind == "worst_case_switch":
        return WorstCaseSwitch(int(d["switch_round"]), tuple(d["before"]), tuple(d["after"]))
    raise ConfigError(f"unknown environment type {kind!r}")


def parse_policy(d: dict, num_arms: int, horizon: int) -> PolicyConfig | BaselineConfig:
    kind = d["kind"]
    if kind == "bobw":
        hint = EmpiricalMean()
        if d.get("hint_mode", "empirical_mean") == "ewma":
            hint = Ewma(float(d["eta"]))
        return PolicyConfig(num_arms, horizon, float(d.get("epsilon", 0.2)), hint)
    kinds = {"ucb1": Ucb1(), "tsallis_inf_iw": TsallisInfIW(), "tsallis_inf_rv": TsallisInfRV(),
             "uniform": UniformRandom()}
    if kind == "ucb_v":
        return BaselineConfig(UcbV(float(d.get("zeta", 1.2))), num_arms, horizon)
    if kind in kinds:
        return BaselineConfig(kinds[kind], num_arms, horizon)
    raise ConfigError(f"unknown policy kind {kind!r}")


@dataclass
class ExperimentConfig:
    name: str
    policy: PolicyConfig | BaselineConfig
    environment: Any
    horizon: int
    seeds: list[int]
    master_seed: int = 0
    output_dir: str | None = None
    overlays: list[str] = field(default_factory=list)
    regret_mode: RegretMode = RegretMode.PSEUDO
    check_invariants: bool = False
    raw: dict = field(default_factory=dict)

    @property
    def num_arms(self) -> int:
        return self.environment.num_arms


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate against the JSON schema and build typed specs.

    Raises:
        ConfigError: on any schema or semantic violation.
    """
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config schema error at '{path}': {exc.message}") from None
    try:
        env = parse_environment(raw["environment"], base_dir)
        horizon = int(raw["horizon"])
        policy = parse_policy(raw["policy"], env.num_arms, horizon)
    except (SpecError, ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    if isinstance(env, Scripted) and env.losses.shape[0] < horizon:
        raise ConfigError(f"scripted sequence has {env.losses.shape[0]} rows but horizon is {horizon}")
    seeds = raw.get("seeds", 1)
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    stochastic = isinstance(env, (StochasticSpec, CorruptionSpec))
    mode = raw.get("regret_mode") or ("pseudo" if stochastic else "realized")
    if mode == "pseudo" and not stochastic:
        raise ConfigError("pseudo-regret needs a stochastic or corrupted environment")
    default_overlays = ["adversarial_upper"]
    if isinstance(env, StochasticSpec):
        default_overlays = ["stochastic_upper"]
    elif isinstance(env, CorruptionSpec):
        default_overlays = ["stochastic_upper", "corrupted_shape"]
    return ExperimentConfig(
        name=raw.get("name", "experiment"),
        policy=policy,
        environment=env,
        horizon=horizon,
        seeds=seeds,
        master_seed=int(raw.get("master_seed", 0)),
        output_dir=raw.get("output_dir"),
        overlays=list(raw.get("overlays", default_overlays)),
        regret_mode=RegretMode(mode),
        check_invariants=bool(raw.get("check_invariants", False)),
        raw=copy.deepcopy(raw),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw, path.parent)


# --- trials -----------------------------------------------------------------

def trial_generators(master_seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    env_ss, policy_ss = ss.spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(policy_ss)


def make_policy(spec: PolicyConfig | BaselineConfig, tol: float = DEFAULT_TOL):
    if isinstance(spec, PolicyConfig):
        return BobwPolicy(spec, tol)
    return make_baseline(spec)


def policy_name(spec: PolicyConfig | BaselineConfig) -> str:
    if isinstance(spec, PolicyConfig):
        if isinstance(spec.hint_mode, Ewma):
            return f"bobw(eps={spec.epsilon},ewma={spec.hint_mode.eta})"
        return f"bobw(eps={spec.epsilon})"
    return make_baseline(spec).name


def run_generic(policy, env: Environment, horizon: int, uniforms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Round-by-round protocol loop; works with any environment."""
    arms = np.empty(horizon, dtype=np.int64)
    losses = np.empty((horizon, env.num_arms))
    history: list = []
    for t in range(1, horizon + 1):
        loss, _ = env.gen_round(t, history)
        arm = policy.select(float(uniforms[t - 1]))
        policy.update(arm, float(loss[arm]))
        arms[t - 1] = arm
        losses[t - 1] = loss
        history.append((loss, arm))
    return arms, losses


def run_fast(spec: PolicyConfig | BaselineConfig, losses: np.ndarray, uniforms: np.ndarray,
             check: bool = False, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, dict]:
    """Compiled whole-trial loop on a precomputed loss matrix."""
    losses = np.ascontiguousarray(losses, dtype=np.float64)
    extras: dict = {}
    if isinstance(spec, PolicyConfig):
        arms, probs, diag, alpha_sums, counts = _kernels.run_bobw_trial(
            losses, uniforms, spec.epsilon, math.log(spec.horizon), spec.ewma_eta, tol, check)
        if check:
            extras["diagnostics"] = diag.tolist()
            extras["alpha_sums"] = alpha_sums.tolist()
            extras["probs"] = probs
        return arms, extras
    kind = spec.kind
    if isinstance(kind, (TsallisInfIW, TsallisInfRV)):
        return _kernels.run_tsallis_trial(losses, uniforms, isinstance(kind, TsallisInfRV)), extras
    if isinstance(kind, (Ucb1, UcbV)):
        zeta = kind.zeta if isinstance(kind, UcbV) else 1.2
        return _kernels.run_ucb_trial(losses, zeta, isinstance(kind, UcbV)), extras
    return _kernels.run_uniform_trial(losses.shape[1], uniforms), extras


def run_trial(config: ExperimentConfig, trial: int) -> TrialRecord:
    env_rng, pol_rng = trial_generators(config.master_seed, trial)
    env = Environment(config.environment)
    env.reset(config.horizon, env_rng)
    uniforms = pol_rng.random(config.horizon)
    extras: dict = {}
    if env.oblivious:
        losses = env.loss_matrix()
        arms, extras = run_fast(config.policy, losses, uniforms, config.check_invariants)
    else:
        arms, losses = run_generic(make_policy(config.policy), env, config.horizon, uniforms)
    gaps = None
    if isinstance(config.environment, (StochasticSpec, CorruptionSpec)):
        gaps = np.asarray(ground_truth(config.environment).gaps)
    return TrialRecord(losses=losses, arms=arms, policy=policy_name(config.policy),
                       environment=type(config.environment).__name__, seed=trial, gaps=gaps,
                       clean_losses=env.clean_matrix, attack_window=env.attack_window,
                       extras=extras)


@dataclass
class TrialSummary:
    seed: int
    trajectory: np.ndarray
    column_sums: np.ndarray
    pulls: np.ndarray
    v1: float
    corruption: float
    diagnostics: list[float] | None
    losses: np.ndarray | None


def _summarise(config: ExperimentConfig, trial: int, keep_losses: bool) -> TrialSummary:
    rec = run_trial(config, trial)
    traj = regret_trajectory(rec, config.regret_mode)
    corr = compute_C(rec.clean_losses, rec.losses) if rec.clean_losses is not None else 0.0
    return TrialSummary(
        seed=trial,
        trajectory=traj,
        column_sums=rec.losses.sum(axis=0),
        pulls=np.bincount(rec.arms, minlength=rec.losses.shape[1]),
        v1=compute_V1(rec.losses),
        corruption=corr,
        diagnostics=rec.extras.get("diagnostics"),
        losses=rec.losses if keep_losses else None,
    )


def _summarise_star(args):
    return _summarise(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    mean: np.ndarray
    se: np.ndarray
    final_regrets: np.ndarray
    quantities: dict
    bounds: list[dict]
    diagnostics: dict | None
    wall_clock: float
    checkpoints: dict = field(default_factory=dict)

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_se(self) -> float:
        return float(self.se[-1])

    def summary(self) -> dict:
        return {
            "name": self.config.name,
            "policy": policy_name(self.config.policy),
            "final_mean_regret": self.final_mean,
            "final_se_regret": self.final_se,
            "regret_mode": self.config.regret_mode.value,
            "num_trials": len(self.config.seeds),
            "checkpoints": self.checkpoints,
            "data_dependent_quantities": self.quantities,
            "bounds": self.bounds,
            "invariant_diagnostics": self.diagnostics,
            "wall_clock_seconds": self.wall_clock,
            "config": self.config.raw,
            "code_version": __version__,
        }


_DIAG_NAMES = ["max_kkt_residual", "min_probability", "max_simplex_sum_error",
               "max_beta_recurrence_error", "beta_decreases", "alpha_out_of_range",
               "p_not_interior", "max_alpha"]


def _merge_diagnostics(diags: list[list[float]]) -> dict:
    arr = np.asarray(diags)
    out = {}
    for j, name in enumerate(_DIAG_NAMES):
        col = arr[:, j]
        out[name] = float(col.min() if name == "min_probability" else
                          (col.sum() if name in ("beta_decreases", "alpha_out_of_range",
                                                 "p_not_interior") else col.max()))
    out["trials_checked"] = int(arr.shape[0])
    return out


def evaluate_overlays(config: ExperimentConfig, quantities: dict) -> list[dict]:
    out = []
    k, horizon = config.num_arms, config.horizon
    env = config.environment
    inst: TheoryInstance | None = None
    if isinstance(env, (StochasticSpec, CorruptionSpec)):
        inst = ground_truth(env)
    eps = config.policy.epsilon if isinstance(config.policy, PolicyConfig) else 0.2
    for name in config.overlays:
        try:
            if name == "stochastic_upper" and inst is not None:
                rep = theory.upper_bound_stochastic(inst, eps, horizon)
                out.append(rep.to_json() | {"epsilon": eps, "horizon": horizon,
                                            "mu": list(inst.mu), "sigma_sq": list(inst.sigma_sq)})
            elif name == "corrupted_shape" and inst is not None:
                base = theory.upper_bound_stochastic(inst, eps, horizon).value
                rep = theory.corrupted_shape(base, quantities["C_realized"])
                out.append(rep.to_json() | {"C": quantities["C_realized"]})
            elif name == "adversarial_upper":
                rep = theory.upper_bound_adversarial(k, horizon, quantities["L_star"],
                                                     quantities["q_infty_upper"])
                out.append(rep.to_json() | {"K": k, "horizon": horizon,
                                            "L_star": quantities["L_star"],
                                            "Q_infty": quantities["q_infty_upper"]})
            elif name == "pathlength":
                pol = config.policy
                eta = pol.hint_mode.eta if isinstance(pol, PolicyConfig) and isinstance(pol.hint_mode, Ewma) else 0.25
                rep = theory.upper_bound_pathlength(k, horizon, quantities["L_star"],
                                                    quantities["q_infty_upper"], quantities["V_1"], eta)
                out.append(rep.to_json() | {"eta": eta, "V_1": quantities["V_1"]})
            elif name == "lower_bound_simplified" and inst is not None:
                rep = theory.lower_bound_simplified(inst, allow_zero_variance=True)
                out.append(rep.to_json() | {"log_T": math.log(horizon),
                                            "times_log_T": rep.value * math.log(horizon)})
            elif name == "lower_bound_approx" and inst is not None:
                comps = [theory.lower_bound_approx(inst.sigma_sq[i] / inst.gaps[i])
                         if inst.sigma_sq[i] > 0 else 1.0 for i in inst.suboptimal()]
                out.append({"formula_id": "lower_bound_approx", "value": sum(comps),
                            "components": comps, "times_log_T": sum(comps) * math.log(horizon)})
        except Exception as exc:  # recorded in the summary rather than aborting the run
            out.append({"formula_id": name, "error": str(exc)})
    return out


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    start = time.perf_counter()
    workers = workers or os.cpu_count() or 1
    q_trials = max(1, min(len(config.seeds), Q_INFTY_MAX_ROWS // config.horizon))
    jobs = [(config, s, i < q_trials) for i, s in enumerate(config.seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_summarise_star, jobs))
    else:
        summaries = [_summarise(*job) for job in jobs]
    summaries.sort(key=lambda s: config.seeds.index(s.seed))

    mean, se = aggregate([s.trajectory for s in summaries])
    n = len(summaries)
    stacked = np.concatenate([s.losses for s in summaries if s.losses is not None])
    q_value, _ = compute_Q_infty(stacked)
    pulls = np.sum([s.pulls for s in summaries], axis=0)
    quantities = {
        "L_star": float(np.mean([s.column_sums for s in summaries], axis=0).min()),
        "q_infty_upper": q_value / q_trials,
        "q_infty_trials_used": q_trials,
        "V_1": float(np.mean([s.v1 for s in summaries])),
        "C_realized": float(np.mean([s.corruption for s in summaries])),
        "C_realized_per_trial": [s.corruption for s in summaries],
        "P_i": (pulls / n).tolist(),
        "total_pulls": int(pulls.sum()),
    }
    diags = [s.diagnostics for s in summaries if s.diagnostics is not None]
    checkpoints = {}
    finals = np.array([s.trajectory[-1] for s in summaries])
    for c in CHECKPOINTS:
        if c <= config.horizon:
            vals = np.array([s.trajectory[c - 1] for s in summaries])
            checkpoints[str(c)] = {"mean": float(vals.mean()),
                                   "se": float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0}
    return ExperimentResult(
        config=config, mean=mean, se=se, final_regrets=finals, quantities=quantities,
        bounds=evaluate_overlays(config, quantities),
        diagnostics=_merge_diagnostics(diags) if diags else None,
        wall_clock=time.perf_counter() - start, checkpoints=checkpoints,
    )


def write_outputs(result: ExperimentResult, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{result.config.name}_trajectory.csv"
    json_path = out / f"{result.config.name}_summary.json"
    write_trajectory_csv(csv_path, result.mean, result.se)
    with open(json_path, "w") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
    return csv_path, json_path


# --- sweeps -------------------------------------------------------------------

def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for key in keys[:-1]:
        d = d.setdefault(key, {})
    d[keys[-1]] = value


def expand_grid(raw: dict) -> list[tuple[dict, dict]]:
    """Cartesian product over ``grid``; values at dotted paths replace the base."""
    grid = raw.get("grid", {})
    base = {k: v for k, v in raw.items() if k != "grid"}
    if not grid:
        return [(base, {})]
    keys = list(grid)
    variants = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cfg = copy.deepcopy(base)
        params = dict(zip(keys, combo))
        for key, value in params.items():
            _set_path(cfg, key, copy.deepcopy(value))
        cfg["name"] = f"{base.get('name', 'sweep')}_{len(variants):03d}"
        variants.append((cfg, params))
    return variants


def run_sweep(raw: dict, base_dir: Path | None = None, workers: int | None = None,
              master_seed: int | None = None) -> list[dict]:
    rows = []
    for cfg_raw, params in expand_grid(raw):
        if master_seed is not None:
            cfg_raw["master_seed"] = master_seed
        cfg = parse_config(cfg_raw, base_dir)
        res = run_experiment(cfg, workers)
        row = {"name": cfg.name, "params": params, "policy": policy_name(cfg.policy),
               "horizon": cfg.horizon, "final_mean_regret": res.final_mean,
               "final_se_regret": res.final_se,
               "regret_over_log_T": res.final_mean / math.log(cfg.horizon),
               "bounds": {b["formula_id"]: b.get("value") for b in res.bounds}}
        rows.append(row)
    return rows


def write_sweep(rows: Iterable[dict], out_dir: str | Path, name: str) -> tuple[Path, Path]:
    rows = list(rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formulas = sorted({f for r in rows for f in r["bounds"]})
    csv_path = out / f"{name}_sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "params", "policy", "horizon", "final_mean_regret",
                    "final_se_regret", "regret_over_log_T", *formulas])
        for r in rows:
            w.writerow([r["name"], json.dumps(r["params"], sort_keys=True), r["policy"], r["horizon"],
                        repr(r["final_mean_regret"]), repr(r["final_se_regret"]),
                        repr(r["regret_over_log_T"]), *[r["bounds"].get(f) for f in formulas]])
    json_path = out / f"{name}_sweep.json"
    with open(json_path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
    return csv_path, json_path
