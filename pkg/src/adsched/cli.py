"""Command-line entry point: ``adsched analyze | enumerate | simulate | validate``.

Every subcommand reads one configuration document (see
:mod:`adsched.config`), writes its results under ``--out`` and prints a
short summary.  Command-line flags override values from the document.

Exit status: 0 on success, 1 when a validation property fails, 2 for
configuration errors, 3 when a resource cap is exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .config import Bundle, load_bundle, parse_initial_state
from .errors import ConfigError, ModelError, TooLarge
from .model import lift_threshold, state_label
from .optimizer import ENUMERATION_CAP, lambda_star, optimality_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_TOO_LARGE = 0, 1, 2, 3
FORMATS = ("json", "csv")


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


class Output:
    """Writes named artifacts into the output directory, honoring ``--format``."""

    def __init__(self, directory, formats):
        self.dir = Path(directory)
        self.formats = formats
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.dir}: {exc.strerror}", field="out") from exc
        self.written: list[Path] = []

    def write(self, name: str, kind: str, text: str):
        if kind not in self.formats:
            return
        path = self.dir / name
        path.write_text(text)
        self.written.append(path)


def _formats(value: str) -> tuple[str, ...]:
    out = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [v for v in out if v not in FORMATS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"formats must be a comma list of {', '.join(FORMATS)}")
    return out


def _u64(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def _tolerance(value: str) -> tuple[str, float]:
    name, sep, tol = value.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected NAME=VALUE")
    return name.strip(), float(tol)


def _pick(flag, block: dict, key: str, default=None):
    return flag if flag is not None else block.get(key, default)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="configuration document (bare model or bundle)")
    common.add_argument("--out", default="adsched_out", help="output directory")
    common.add_argument("--format", type=_formats, default=FORMATS, help="comma list of json,csv")
    common.add_argument("--seed", type=_u64, default=None)

    parser = argparse.ArgumentParser(prog="adsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", parents=[common], help="threshold search for the critical arrival rate")

    p = sub.add_parser("enumerate", parents=[common], help="exhaustive search over deterministic policies")
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP, help="largest n_s to enumerate")

    rate = argparse.ArgumentParser(add_help=False)
    rate.add_argument("--lambda", dest="lam", type=float, default=None, help="arrival probability per epoch")
    rate.add_argument("--poisson-rate", type=float, default=None, help="Poisson rate; needs --delta")
    rate.add_argument("--delta", type=float, default=None, help="epoch length for --poisson-rate")
    rate.add_argument("--tau", type=int, default=None, help="threshold policy (default: optimal)")
    rate.add_argument("--horizon", type=int, default=None)
    rate.add_argument("--replications", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common, rate], help="Monte Carlo run of the full system")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--path-stride", type=int, default=None, help="record the queue every N epochs")
    p.add_argument("--workers", type=int, default=None, help="threads across replications")

    p = sub.add_parser("validate", parents=[common, rate], help="run the property suite")
    p.add_argument("--q-max", type=int, default=None, help="queue truncation for the exact chain")
    p.add_argument("--only", action="append", default=None, help="property name (repeatable or comma list)")
    p.add_argument("--tol", action="append", type=_tolerance, default=None, metavar="NAME=VALUE",
                   help="override a property tolerance")
    p.add_argument("--cap", type=int, default=ENUMERATION_CAP)
    return parser


def _arrival_rate(args, block: dict) -> float | None:
    if (args.poisson_rate is None) != (args.delta is None):
        raise ConfigError("--poisson-rate and --delta go together", field="poisson_rate")
    if args.poisson_rate is not None:
        if args.lam is not None:
            raise ConfigError("give either --lambda or --poisson-rate/--delta", field="lambda")
        from .simulator import rate_from_poisson

        lam = rate_from_poisson(args.poisson_rate, args.delta)
    else:
        lam = _pick(args.lam, block, "lambda")
    if lam is None:
        return None
    if isinstance(lam, bool) or not isinstance(lam, (int, float)) or not 0.0 < lam < 1.0:
        raise ConfigError(f"arrival probability {lam!r} must lie in (0, 1)", field="lambda")
    return float(lam)


def _policy(args, bundle: Bundle):
    """Policy and its threshold (``None`` for table policies); defaults to the optimal threshold."""
    if args.tau is not None:
        try:
            return lift_threshold(args.tau, bundle.model.n_s), args.tau
        except ModelError as exc:
            raise ConfigError(f"invalid tau: {exc}", field="tau") from exc
    if bundle.policy is not None:
        return bundle.policy, bundle.tau
    tau = lambda_star(bundle.model).tau_star
    return lift_threshold(tau, bundle.model.n_s), tau


def cmd_analyze(args, bundle: Bundle, out: Output) -> int:
    sweep = lambda_star(bundle.model)
    doc = {"model": bundle.model.to_dict(), **sweep.to_dict()}
    out.write("analyze_summary.json", "json", dump_json(doc))
    out.write("analyze_sweep.csv", "csv", sweep.to_csv())
    print(f"lambda_star={sweep.lambda_star:.12g} tau_star={sweep.tau_star}")
    return EXIT_OK


def cmd_enumerate(args, bundle: Bundle, out: Output) -> int:
    report = optimality_report(bundle.model, cap=args.cap)
    doc = {"model": bundle.model.to_dict(), **report.to_dict()}
    out.write("enumerate.json", "json", dump_json(doc))
    rows = [(report.sweep.lambda_star, report.sweep.tau_star, report.enumeration.lambda_double_star,
             report.gap, report.enumeration.policies_evaluated)]
    out.write("enumerate.csv", "csv",
              _csv(["lambda_star", "tau_star", "lambda_double_star", "gap", "policies_evaluated"], rows))
    print(f"lambda_star={report.sweep.lambda_star:.12g} lambda_double_star="
          f"{report.enumeration.lambda_double_star:.12g} gap={report.gap:.3g}")
    return EXIT_OK


def _sim_config(args, bundle: Bundle, lam: float):
    from .simulator import SimConfig

    block = bundle.simulation
    stride = _pick(args.path_stride, block, "path_stride")
    try:
        return SimConfig(
            lam=lam,
            horizon=_pick(args.horizon, block, "horizon", 1_000_000),
            seed=_pick(args.seed, block, "seed", 0),
            replications=_pick(args.replications, block, "replications", 20),
            initial_state=parse_initial_state(block.get("initial_state")),
            record_queue_path=stride is not None or bool(block.get("record_queue_path", False)),
            burn_in=_pick(args.burn_in, block, "burn_in"),
            path_stride=1 if stride is None else stride,
            workers=_pick(args.workers, block, "workers", 1),
        )
    except ModelError as exc:
        name = f"simulation.{exc.field}" if exc.field else "simulation"
        raise ConfigError(f"invalid {name}: {exc}", field=name) from exc


def cmd_simulate(args, bundle: Bundle, out: Output) -> int:
    from .simulator import (
        departure_rate,
        empirical_server_pmf,
        estimate_projection,
        simulate,
        stability_diagnostic,
    )

    lam = _arrival_rate(args, bundle.simulation)
    if lam is None:
        raise ConfigError("simulate needs an arrival rate (--lambda or simulation.lambda)", field="lambda")
    policy, tau = _policy(args, bundle)
    cfg = _sim_config(args, bundle, lam)
    runs = simulate(bundle.model, policy, cfg)
    stability = stability_diagnostic(runs) if len(runs) >= 2 else None
    pmf = empirical_server_pmf(runs)
    doc = {
        "model": bundle.model.to_dict(),
        "lambda": lam,
        "policy": {"kind": "threshold", "tau": tau} if tau is not None else {"kind": "table"},
        "horizon": cfg.horizon,
        "burn_in": cfg.burn_in,
        "seed": cfg.seed,
        "replications": [r.to_dict() for r in runs],
        "aggregate": {
            "departure_rate": departure_rate(runs),
            "server_pmf": {state_label(i): float(p) for i, p in enumerate(pmf)},
            "projection": estimate_projection(runs).to_dict(),
        },
        "stability": None if stability is None else stability.to_dict(),
    }
    out.write("simulate.json", "json", dump_json(doc))
    rows = [(r.replication, r.arrivals, r.departures, r.final_queue, r.max_queue, r.queue_slope,
             departure_rate(r)) for r in runs]
    out.write("simulate.csv", "csv", _csv(
        ["replication", "arrivals", "departures", "final_queue", "max_queue", "queue_slope", "departure_rate"], rows))
    if cfg.record_queue_path:
        for r in runs:
            out.write(f"queue_path_rep{r.replication}.csv", "csv", r.queue_path_csv())
    verdict = "n/a (one replication)" if stability is None else stability.verdict.value
    print(f"lambda={lam:.12g} departure_rate={departure_rate(runs):.6g} verdict={verdict}")
    return EXIT_OK


def cmd_validate(args, bundle: Bundle, out: Output) -> int:
    from .validation import PROPERTIES, Context, run_properties

    block = bundle.validate
    only = None
    if args.only:
        only = [n.strip() for item in args.only for n in item.split(",") if n.strip()]
    tolerances = dict(block.get("tolerances", {}))
    tolerances.update(dict(args.tol or []))
    unknown = [n for n in list(only or []) + list(tolerances) if n not in PROPERTIES]
    if unknown:
        raise ConfigError(f"unknown properties: {', '.join(unknown)}; known: {', '.join(PROPERTIES)}",
                          field="only")
    ctx = Context(
        bundle.model,
        seed=_pick(args.seed, block, "seed", 0),
        q_max=_pick(args.q_max, block, "q_max", 200),
        horizon=_pick(args.horizon, block, "horizon", 1_000_000),
        replications=_pick(args.replications, block, "replications", 20),
        enumeration_cap=args.cap,
    )
    if args.tau is not None:
        raise ConfigError("validate always uses the optimal threshold; drop --tau", field="tau")
    lam = _arrival_rate(args, block)
    if lam is not None:
        if lam >= ctx.sweep.lambda_star:
            raise ConfigError(f"--lambda {lam} must be below lambda_star={ctx.sweep.lambda_star:.6g}",
                              field="lambda")
        ctx.lam_stable = lam
    outcomes = run_properties(ctx, only, tolerances)
    failed = [o for o in outcomes if not o.passed]
    doc = {
        "model": bundle.model.to_dict(),
        "lambda_stable": ctx.stable_rate,
        "lambda_unstable": ctx.unstable_rate,
        "properties": [o.to_dict() for o in outcomes],
        "passed": not failed,
    }
    out.write("validate.json", "json", dump_json(doc))
    out.write("validate.csv", "csv", _csv(
        ["property", "measured", "comparison", "tolerance", "passed"],
        [(o.name, o.measured, o.comparison, o.tolerance, o.passed) for o in outcomes]))
    for o in outcomes:
        print(o.line())
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "enumerate": cmd_enumerate, "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        bundle = load_bundle(args.model)
        out = Output(args.out, args.format)
        return COMMANDS[args.command](args, bundle, out)
    except (ConfigError, ModelError) as exc:
        field = getattr(exc, "field", None)
        print(f"adsched: config error{f' [{field}]' if field else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TooLarge as exc:
        print(f"adsched: resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE


if __name__ == "__main__":
    sys.exit(main())
