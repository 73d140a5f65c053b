"""Monte Carlo experiment runner.

A plan sweeps one scenario parameter (task count or generative score) and
runs every mechanism on the same sampled scenarios (common random numbers).
Seed index ``r`` maps to scenario seed ``SeedSequence(master_seed,
spawn_key=(r,))``, independent of the sweep point, so cells can run in any
order or in parallel and still give the same numbers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .distributions import Distribution
from .errors import ConfigError, MechanismFailure, PvsyncError
from .market import ScenarioConfig, sample_scenario
from .mechanism.auction import DEFAULT_MC_SAMPLES, MECHANISMS, get_mechanism, truthful_bids
from .sync import PairTable

__all__ = [
    "METRICS", "SWEEP_VARS", "ExperimentPlan", "ExperimentResult", "run_experiment", "truthful_bids",
    "scenario_seed", "parse_sweep", "plan_from_config", "deadline_violations",
]

METRICS = ("total_surplus", "dt_surplus", "ar_surplus", "revenue", "dt_revenue", "feasibility", "sync_rate")
SWEEP_VARS = ("tasks", "gen_score")
DEFAULT_MECHANISMS = ("mtepvisa", "epvisa", "pvisa")

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "sweep": {"type": "string"},
        "seeds": {"type": "integer", "minimum": 1},
        "seed_start": {"type": "integer", "minimum": 0},
        "mechanisms": {"type": "array", "items": {"enum": sorted(MECHANISMS)}, "minItems": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "n_samples": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}


def scenario_seed(master_seed: int, index: int) -> int:
    """Counter-based split of the master seed: one 64-bit scenario seed per seed index."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def parse_sweep(text: str):
    """``tasks:1..10``, ``gen_score:0.25,0.5,0.75`` or ``var:value`` into ``(var, values)``."""
    var, sep, rng_text = text.partition(":")
    var = var.strip()
    if not sep or var not in SWEEP_VARS:
        raise ConfigError(f"bad sweep {text!r}", [f"expected <var>:<range> with var in {SWEEP_VARS}"])
    try:
        if ".." in rng_text:
            lo, hi = rng_text.split("..")
            values = tuple(range(int(lo), int(hi) + 1))
        else:
            values = tuple(float(x) for x in rng_text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad sweep range {rng_text!r}", [str(exc)]) from None
    if var == "tasks":
        if any(float(v) != int(v) for v in values):
            raise ConfigError("task counts must be integers", [rng_text])
        values = tuple(int(v) for v in values)
    return var, values


def _apply(config: ScenarioConfig, var: str, value) -> ScenarioConfig:
    if var == "tasks":
        return config.replace(n_tasks=int(value))
    return config.replace(gen_score=Distribution.constant(float(value)))


@dataclass(frozen=True)
class ExperimentPlan:
    mechanisms: tuple = DEFAULT_MECHANISMS
    sweep_var: str = "tasks"
    sweep_values: tuple = tuple(range(1, 11))
    seeds: int = 100
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    master_seed: int = 0
    seed_start: int = 0
    n_samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        problems = []
        if self.seeds < 1:
            problems.append("seeds must be >= 1")
        if self.seed_start < 0:
            problems.append("seed_start must be >= 0")
        if len(self.sweep_values) < 1:
            problems.append("sweep needs at least one point")
        if self.sweep_var not in SWEEP_VARS:
            problems.append(f"sweep variable must be one of {SWEEP_VARS}")
        elif self.sweep_var == "tasks" and any(not 1 <= int(v) <= 10 for v in self.sweep_values):
            problems.append("task counts must lie in [1, 10]")
        elif self.sweep_var == "gen_score" and any(not 0 <= float(v) <= 1 for v in self.sweep_values):
            problems.append("generative scores must lie in [0, 1]")
        unknown = [m for m in self.mechanisms if m not in MECHANISMS]
        if unknown or not self.mechanisms:
            problems.append(f"mechanisms must be a non-empty subset of {sorted(MECHANISMS)}")
        if self.n_samples < 1:
            problems.append("n_samples must be >= 1")
        if problems:
            raise ConfigError("invalid experiment plan", problems)

    @property
    def seed_indices(self):
        return range(self.seed_start, self.seed_start + self.seeds)

    def point_config(self, value) -> ScenarioConfig:
        return _apply(self.config, self.sweep_var, value)


def plan_from_config(config: ScenarioConfig, raw: dict, **overrides) -> ExperimentPlan:
    """Build a plan from the optional ``experiment`` block of a config file."""
    block = raw.get("experiment", {}) if raw else {}
    errors = list(jsonschema.Draft202012Validator(EXPERIMENT_SCHEMA).iter_errors(block))
    if errors:
        raise ConfigError("experiment block does not match schema",
                          [f"experiment/{'/'.join(map(str, e.path))}: {e.message}" for e in errors])
    kw = {}
    if "sweep" in block:
        kw["sweep_var"], kw["sweep_values"] = parse_sweep(block["sweep"])
    for key in ("seeds", "seed_start", "master_seed", "n_samples"):
        if key in block:
            kw[key] = block[key]
    if "mechanisms" in block:
        kw["mechanisms"] = tuple(block["mechanisms"])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if "sweep_var" not in kw:
        kw["sweep_var"], kw["sweep_values"] = "tasks", (config.n_tasks,)
    return ExperimentPlan(config=config, **kw)


def deadline_violations(outcome, scenario) -> int:
    """Number of the winner's tasks whose total delay exceeds its true deadline."""
    if outcome.winner_av is None:
        return 0
    i = outcome.winner_av
    d = scenario.fleet.task_deadline[i][scenario.fleet.task_mask[i]]
    return int(np.sum(np.asarray(outcome.per_task_delays) > d))


def _metrics(outcome, scenario):
    return (
        outcome.surplus_total,
        outcome.surplus_dt,
        outcome.surplus_total - outcome.surplus_dt,
        outcome.pay_av + outcome.pay_mar,
        outcome.pay_av,
        float(deadline_violations(outcome, scenario) == 0),
        float(outcome.winner_av is not None),
    )


def _run_block(plan: ExperimentPlan, point: int, indices):
    """Raw metrics for one sweep point over a block of seed indices, shape (M, R, metrics)."""
    cfg = plan.point_config(plan.sweep_values[point])
    mechs = [get_mechanism(m, n_samples=plan.n_samples) for m in plan.mechanisms]
    out = np.empty((len(mechs), len(indices), len(METRICS)))
    for r, idx in enumerate(indices):
        seed = scenario_seed(plan.master_seed, idx)
        try:
            scenario = sample_scenario(cfg, seed)
            table = PairTable(scenario)
            bids = truthful_bids(scenario, plan.n_samples, table=table)
            for j, mech in enumerate(mechs):
                outcome = mech.clear(mech.prepare(scenario, bids, table), bids)
                out[j, r] = _metrics(outcome, scenario)
        except ConfigError:
            raise
        except PvsyncError as exc:
            raise MechanismFailure(f"seed index {idx} (scenario seed {seed}) failed: {exc}", seed=seed) from exc
        except (FloatingPointError, ValueError, ZeroDivisionError) as exc:
            raise MechanismFailure(f"seed index {idx} (scenario seed {seed}) failed: {exc}", seed=seed) from exc
    return out


def _run_block_star(args):
    return _run_block(*args)


@dataclass
class ExperimentResult:
    """Raw per-seed metrics; ``raw[m]`` has shape (points, seeds, metrics)."""

    plan: ExperimentPlan
    seed_indices: np.ndarray
    raw: dict

    @property
    def mechanisms(self):
        return self.plan.mechanisms

    def values(self, mechanism, point, metric):
        p = self.plan.sweep_values.index(point)
        return self.raw[mechanism][p, :, METRICS.index(metric)]

    def mean(self, mechanism, point, metric) -> float:
        return float(np.mean(self.values(mechanism, point, metric)))

    def stderr(self, mechanism, point, metric) -> float:
        v = self.values(mechanism, point, metric)
        if v.size < 2:
            return 0.0
        return float(np.std(v, ddof=1) / math.sqrt(v.size))

    @property
    def n_seeds(self):
        return int(self.seed_indices.size)

    def records(self):
        """One flat row per (mechanism, sweep point, metric)."""
        rows = []
        for m in self.mechanisms:
            for point in self.plan.sweep_values:
                for metric in METRICS:
                    rows.append({
                        "mechanism": m, "sweep_var": self.plan.sweep_var, "sweep_value": point,
                        "metric": metric, "mean": self.mean(m, point, metric),
                        "stderr": self.stderr(m, point, metric), "n_seeds": self.n_seeds,
                    })
        return rows

    def merge(self, other: "ExperimentResult") -> "ExperimentResult":
        """Pool two runs of the same plan over disjoint seed ranges."""
        a, b = self.plan, other.plan
        same = (a.mechanisms, a.sweep_var, a.sweep_values, a.config, a.master_seed, a.n_samples) == \
               (b.mechanisms, b.sweep_var, b.sweep_values, b.config, b.master_seed, b.n_samples)
        if not same:
            raise ValueError("can only merge results of the same plan")
        if np.intersect1d(self.seed_indices, other.seed_indices).size:
            raise ValueError("seed ranges overlap")
        idx = np.concatenate([self.seed_indices, other.seed_indices])
        order = np.argsort(idx, kind="stable")
        raw = {m: np.concatenate([self.raw[m], other.raw[m]], axis=1)[:, order] for m in self.mechanisms}
        start = int(idx.min())
        plan = ExperimentPlan(
            mechanisms=a.mechanisms, sweep_var=a.sweep_var, sweep_values=a.sweep_values, seeds=int(idx.size),
            config=a.config, master_seed=a.master_seed, seed_start=start, n_samples=a.n_samples,
        )
        return ExperimentResult(plan, idx[order], raw)

    def to_dict(self):
        return {
            "sweep_var": self.plan.sweep_var,
            "sweep_values": list(self.plan.sweep_values),
            "mechanisms": list(self.mechanisms),
            "master_seed": self.plan.master_seed,
            "n_seeds": self.n_seeds,
            "records": self.records(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, ExperimentResult):
            return NotImplemented
        return (np.array_equal(self.seed_indices, other.seed_indices)
                and self.mechanisms == other.mechanisms
                and all(np.array_equal(self.raw[m], other.raw[m]) for m in self.mechanisms))


def run_experiment(plan: ExperimentPlan, parallel: int = 1, block_size: int = 25) -> ExperimentResult:
    """Sample, bid truthfully and clear every (mechanism, sweep point, seed) cell."""
    indices = list(plan.seed_indices)
    blocks = [(plan, p, indices[i:i + block_size])
              for p in range(len(plan.sweep_values)) for i in range(0, len(indices), block_size)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(_run_block_star, blocks))
    else:
        parts = [_run_block_star(b) for b in blocks]
    per_point = [[] for _ in plan.sweep_values]
    for (_, p, _), part in zip(blocks, parts):
        per_point[p].append(part)
    stacked = np.stack([np.concatenate(chunks, axis=1) for chunks in per_point])  # (P, M, R, metrics)
    raw = {m: np.ascontiguousarray(stacked[:, j]) for j, m in enumerate(plan.mechanisms)}
    return ExperimentResult(plan, np.asarray(indices, dtype=np.int64), raw)
