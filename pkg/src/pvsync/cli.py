"""Command line: ``pvsync run | verify | inspect``.

Exit status is 0 on success, 1 on a runtime failure or a failed check and 2
on a configuration error. Config paths that do not exist as given are looked
up in ``$PVSYNC_CONFIG_DIR`` and then among the packaged configs, so
``--config default.json`` always works.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, PvsyncError
from .market import load_config, sample_scenario
from .mechanism.auction import DEFAULT_MC_SAMPLES, MECHANISMS, get_mechanism
from .proplab import (
    check_adverse_selection,
    check_individual_rationality,
    check_strategy_proofness,
    scenario_batch,
    summarize_deviations,
)
from .simulator import METRICS, ExperimentResult, parse_sweep, plan_from_config, run_experiment

CONFIG_DIR_ENV = "PVSYNC_CONFIG_DIR"
PACKAGED_CONFIGS = Path(__file__).resolve().parent / "configs"
CSV_HEADER = ("mechanism", "sweep_var", "sweep_value", "metric", "mean", "stderr", "n_seeds")
CHECKS = ("strategy-proofness", "ir", "adverse-selection")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def resolve_config(path) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    for base in (os.environ.get(CONFIG_DIR_ENV), PACKAGED_CONFIGS):
        if base and (Path(base) / p).exists():
            return Path(base) / p
    return p


def _load(path):
    if path is None:
        raise ConfigError("no config given", ["pass --config <path>"])
    return load_config(resolve_config(path))


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(x):
    # repr round-trips floats exactly
    return repr(float(x)) if isinstance(x, float) else str(x)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_fmt(r[k]) for k in CSV_HEADER])
    return buf.getvalue()


def parse_csv(text: str) -> list:
    """Inverse of :func:`records_to_csv`."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        v = r["sweep_value"]
        out.append({
            "mechanism": r["mechanism"], "sweep_var": r["sweep_var"],
            "sweep_value": int(v) if r["sweep_var"] == "tasks" else float(v),
            "metric": r["metric"], "mean": float(r["mean"]), "stderr": float(r["stderr"]),
            "n_seeds": int(r["n_seeds"]),
        })
    return out


def _write(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def format_result(result: ExperimentResult, fmt: str) -> str:
    if fmt == "csv":
        return records_to_csv(result.records())
    return result.to_json() + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    config, raw = _load(args.config)
    overrides = {"seeds": args.seeds, "master_seed": args.master_seed, "n_samples": args.n_samples}
    if args.sweep:
        overrides["sweep_var"], overrides["sweep_values"] = parse_sweep(args.sweep)
    if args.mechanisms:
        overrides["mechanisms"] = tuple(m.strip() for m in args.mechanisms.split(",") if m.strip())
    plan = plan_from_config(config, raw, **overrides)
    result = run_experiment(plan, parallel=args.parallel)
    _write(format_result(result, args.format), args.out)
    return EXIT_OK


def _verify_lines(args, config, raw):
    checks = [c.strip() for c in (args.checks or "").split(",") if c.strip()]
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigError("unknown check", [f"{c} (choose from {', '.join(CHECKS)})" for c in unknown])
    n_samples = args.n_samples or raw.get("experiment", {}).get("n_samples", DEFAULT_MC_SAMPLES)
    lines, ok = [], True
    for check in checks:
        if check == "strategy-proofness":
            reports = []
            for s in scenario_batch(config, args.scenarios, args.master_seed):
                reports.extend(check_strategy_proofness(s, args.grid, args.tolerance, args.mechanism, n_samples))
            summary = summarize_deviations(reports, args.scenarios)
            for r in reports:
                if r.flagged or args.all_reports:
                    lines.append({"type": "deviation", **json.loads(r.to_json())})
            lines.append({"type": "summary", "check": check, "mechanism": args.mechanism,
                          "passed": summary.passed, "n_scenarios": summary.n_scenarios,
                          "n_reports": summary.n_reports, "flagged": summary.flagged,
                          "flagged_scenarios": summary.flagged_scenarios, "max_gain": summary.max_gain})
            ok &= summary.passed
        elif check == "ir":
            rep = check_individual_rationality(scenario_batch(config, args.ir_scenarios, args.master_seed),
                                               args.mechanism, n_samples)
            lines.append({"type": "summary", "check": check, "mechanism": args.mechanism, "passed": rep.passed,
                          "n_scenarios": rep.n_scenarios, "violations": rep.violations, "details": rep.details})
            ok &= rep.passed
        else:
            rep = check_adverse_selection(scenario_batch(config, args.as_scenarios, args.master_seed), n_samples)
            lines.append({"type": "summary", "check": check, "mechanism": "mtepvisa", **rep.to_dict()})
            ok &= rep.passed
    return lines, ok


def cmd_verify(args) -> int:
    config, raw = _load(args.config)
    lines, ok = _verify_lines(args, config, raw)
    _write("".join(json.dumps(line, sort_keys=True) + "\n" for line in lines), args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_inspect(args) -> int:
    path = args.config_opt or args.config
    seed = args.seed_opt if args.seed_opt is not None else args.seed
    if seed is None:
        raise ConfigError("no seed given", ["pass a seed, e.g. `inspect default.json 7`"])
    config, raw = _load(path)
    n_samples = args.n_samples or raw.get("experiment", {}).get("n_samples", DEFAULT_MC_SAMPLES)
    scenario = sample_scenario(config, seed)
    outcome = get_mechanism(args.mechanism, n_samples=n_samples).run(scenario)
    doc = {"seed": seed, **outcome.to_dict()}
    _write(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pvsync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    mechs = sorted(MECHANISMS)

    run = sub.add_parser("run", help="run a Monte Carlo experiment and emit CSV or JSON")
    run.add_argument("--config", help="JSON config (scenario parameters plus optional experiment block)")
    run.add_argument("--sweep", help="tasks:1..10 or gen_score:0.25,0.5,0.75")
    run.add_argument("--seeds", type=int, help="seeds per sweep point")
    run.add_argument("--mechanisms", help=f"comma list from {', '.join(mechs)}")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--out", help="output file (default stdout)")
    run.add_argument("--parallel", type=int, default=1, help="worker processes")
    run.add_argument("--master-seed", type=int, dest="master_seed")
    run.add_argument("--n-samples", type=int, dest="n_samples", help="Monte Carlo draws per estimate")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run property checks; exit 0 iff all pass")
    ver.add_argument("--config")
    ver.add_argument("--checks", default=",".join(CHECKS), help=f"comma list from {', '.join(CHECKS)}")
    ver.add_argument("--mechanism", choices=mechs, default="mtepvisa")
    ver.add_argument("--out", help="JSON-lines report (default stdout)")
    ver.add_argument("--scenarios", type=int, default=20, help="scenarios for the deviation search")
    ver.add_argument("--ir-scenarios", type=int, default=1000, dest="ir_scenarios")
    ver.add_argument("--as-scenarios", type=int, default=1000, dest="as_scenarios")
    ver.add_argument("--grid", type=int, default=50)
    ver.add_argument("--tolerance", type=float, default=1e-9)
    ver.add_argument("--master-seed", type=int, default=0, dest="master_seed")
    ver.add_argument("--n-samples", type=int, dest="n_samples")
    ver.add_argument("--all-reports", action="store_true", help="emit every deviation report, not only flagged")
    ver.set_defaults(func=cmd_verify)

    ins = sub.add_parser("inspect", help="print one scenario's auction outcome as JSON")
    ins.add_argument("config", nargs="?")
    ins.add_argument("seed", nargs="?", type=int)
    ins.add_argument("--config", dest="config_opt")
    ins.add_argument("--seed", type=int, dest="seed_opt")
    ins.add_argument("--mechanism", choices=mechs, default="mtepvisa")
    ins.add_argument("--n-samples", type=int, dest="n_samples")
    ins.add_argument("--out")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for d in exc.diagnostics:
            print(f"  {d}", file=sys.stderr)
        return EXIT_CONFIG
    except PvsyncError as exc:
        seed = getattr(exc, "seed", None)
        suffix = f" (seed {seed})" if seed is not None else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
