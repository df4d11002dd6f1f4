"""Command-line interface.

Subcommands: ``generate`` (emit a synthetic case-study scenario), ``run``
(full pipeline; writes report JSON, trace CSVs, and figures), ``clear``
(forward clearing of a scenario with given parameters, optionally
cross-checked against the QP oracle), ``amplify`` (curvature amplification
of a saved report), and ``day`` (a directory of hourly scenarios).

Exit codes: 0 success, 1 validation error, 2 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .consensus import ConsensusConfig
from .errors import ConvergenceError, P2PMarketError, PipelineStepError, ScenarioSchemaError
from .market import CostParams, clear_market, qp_oracle
from .pipeline import (
    amplification_experiment,
    daily_traded_energy,
    report_from_dict,
    run_algorithm1,
    run_day,
)
from .scenario import (
    FORMAT_VERSION,
    generate_case_study,
    load_results,
    load_scenario,
    save_results,
    save_scenario,
    save_trace,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p2pmarket",
        description="Cooperative parameter learning and masked clearing for P2P energy markets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="emit the synthetic 55-node case-study scenario")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", type=Path, required=True, help="scenario JSON path")

    p_run = sub.add_parser("run", help="run the full learning pipeline on a scenario")
    p_run.add_argument("--scenario", type=Path, required=True)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--k", type=float, default=None, help="override the negotiated shape parameter")
    p_run.add_argument("--alpha", type=float, default=0.8, help="noise decay rate in (0, 1)")
    p_run.add_argument("--tol", type=float, default=1e-9, help="consensus stop tolerance")
    p_run.add_argument("--max-iter", type=int, default=10_000)
    p_run.add_argument("--strategy", choices=("average", "minmax"), default="average")
    p_run.add_argument("--out", type=Path, required=True, help="output directory")
    p_run.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p_clear = sub.add_parser("clear", help="forward clearing with explicit cost parameters")
    p_clear.add_argument("--scenario", type=Path, required=True)
    p_clear.add_argument("--params", type=Path, required=True, help="JSON file with per-prosumer a, b")
    p_clear.add_argument("--oracle", action="store_true", help="cross-check against the QP oracle")
    p_clear.add_argument("--tol", type=float, default=1e-8, help="oracle KKT tolerance")

    p_amp = sub.add_parser("amplify", help="curvature amplification of a saved report")
    p_amp.add_argument("--report", type=Path, required=True)
    p_amp.add_argument("--factor", type=float, required=True)
    p_amp.add_argument("--out", type=Path, default=None, help="write comparison JSON here")
    p_amp.add_argument("--plot", type=Path, default=None, help="write a before/after figure here")

    p_day = sub.add_parser("day", help="run every hourly scenario in a directory")
    p_day.add_argument("--series", type=Path, required=True, help="directory of scenario JSON files")
    p_day.add_argument("--seed", type=int, default=0)
    p_day.add_argument("--k", type=float, default=None)
    p_day.add_argument("--out", type=Path, default=None, help="output directory for per-hour reports")

    return parser


def _cmd_generate(args) -> int:
    scenario = generate_case_study(args.seed)
    save_scenario(scenario, args.out)
    print(f"wrote {scenario.n}-prosumer scenario '{scenario.label}' to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = ConsensusConfig(tol=args.tol, max_iter=args.max_iter, alpha=args.alpha)
    report = run_algorithm1(scenario, cfg, seed=args.seed, k=args.k, strategy=args.strategy)

    outdir = args.out
    outdir.mkdir(parents=True, exist_ok=True)
    save_results(report.to_dict(), outdir / "report.json")
    save_results(
        {"format_version": FORMAT_VERSION, "seconds": report.timings}, outdir / "timings.json"
    )
    save_trace(report.step1_trace, outdir / "step1_price_negotiation.csv")
    save_trace(report.step3_trace, outdir / "step3_masked_clearing.csv")
    if not args.no_plots:
        from . import figures

        figures.render_report_figures(report, outdir)

    print(f"negotiated price range: [{report.negotiated.lower:.4f}, {report.negotiated.upper:.4f}]")
    print(f"demand-supply ratio: {report.xi:.4f}  k: {report.k:.4f}")
    print(f"clearing price: {report.lambda_star:.6f} (analytic {report.analytic_lambda:.6f})")
    print(f"feasible: {report.feasible}  outputs in {outdir}")
    return EXIT_OK


def _load_params(path: Path, n: int) -> list[CostParams]:
    doc = load_results(path)
    if not isinstance(doc, dict) or "params" not in doc:
        raise ScenarioSchemaError("params file needs a top-level 'params' list")
    entries = {e.get("id"): e for e in doc["params"]}
    params = []
    for i in range(n):
        if i not in entries:
            raise ScenarioSchemaError(f"params file missing prosumer {i}")
        e = entries[i]
        try:
            params.append(CostParams(a=float(e["a"]), b=float(e["b"])))
        except (KeyError, TypeError, ValueError) as err:
            raise ScenarioSchemaError(f"prosumer {i}: bad cost parameters: {err}") from err
    return params


def _cmd_clear(args) -> int:
    scenario = load_scenario(args.scenario)
    params = _load_params(args.params, scenario.n)
    result = clear_market(params, scenario.bounds(), scenario.roles())
    print(f"clearing price: {result.lambda_star:.6f}")
    print(f"feasible: {result.feasible}")
    for i, tag in result.violations:
        print(f"  violation: prosumer {i} ({tag})")
    for i in sorted(result.trades):
        print(f"  trade[{i}] = {result.trades[i]: .6f}")
    if args.oracle:
        oracle = qp_oracle(params, scenario.bounds(), scenario.roles(), tol=args.tol)
        dev = max(
            abs(result.lambda_star - oracle.lambda_star),
            max(abs(result.trades[i] - oracle.trades[i]) for i in result.trades),
        )
        print(f"max |analytic - oracle| = {dev:.3e}")
    return EXIT_OK


def _cmd_amplify(args) -> int:
    report = report_from_dict(load_results(args.report))
    amp = amplification_experiment(report, args.factor)
    print(f"factor {amp.factor}: price {amp.lambda_before:.6f} -> {amp.lambda_after:.6f}")
    print(f"all trade magnitudes increased: {amp.all_magnitudes_increased}")
    print(f"feasible after: {amp.feasible_after}")
    if args.out is not None:
        save_results(amp.to_dict(), args.out)
        print(f"wrote comparison to {args.out}")
    if args.plot is not None:
        from . import figures

        figures.plot_amplification(report, amp, args.plot)
        print(f"wrote figure to {args.plot}")
    return EXIT_OK


def _cmd_day(args) -> int:
    paths = sorted(args.series.glob("*.json"))
    if not paths:
        raise ScenarioSchemaError(f"no scenario files in {args.series}")
    scenarios = [load_scenario(p) for p in paths]
    results = run_day(scenarios, seed=args.seed, k=args.k)
    summary = {"format_version": FORMAT_VERSION, "hours": []}
    for r in results:
        entry = {"hour": r.hour, "label": r.label, "skipped": r.skipped}
        if r.skipped:
            entry["reason"] = r.reason
            print(f"hour {r.hour:3d} [{r.label}] skipped: {r.reason}")
        elif r.error is not None:
            entry["error"] = r.error
            print(f"hour {r.hour:3d} [{r.label}] error: {r.error}")
        else:
            entry["lambda_star"] = r.report.lambda_star
            entry["feasible"] = r.report.feasible
            print(
                f"hour {r.hour:3d} [{r.label}] price {r.report.lambda_star:.4f} "
                f"feasible={r.report.feasible}"
            )
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                save_results(r.report.to_dict(), args.out / f"report_hour{r.hour:02d}.json")
        summary["hours"].append(entry)
    summary["daily_traded_kwh"] = daily_traded_energy(results)
    print(f"daily traded energy: {summary['daily_traded_kwh']:.4f} kWh")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        save_results(summary, args.out / "day_summary.json")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "run": _cmd_run,
    "clear": _cmd_clear,
    "amplify": _cmd_amplify,
    "day": _cmd_day,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PipelineStepError as err:
        print(f"error: {err}", file=sys.stderr)
        if isinstance(err.cause, ConvergenceError):
            return EXIT_CONVERGENCE
        return EXIT_VALIDATION
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except P2PMarketError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
