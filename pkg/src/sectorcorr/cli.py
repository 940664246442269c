"""Command-line interface: ``sectorcorr {simulate,estimate,study,tabulate,bayes-sign}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from . import study
from .estimators import Method
from .vasicek import PairModel, PanelFormatError, SectorParams, read_panel_csv, simulate_panel, write_panel_csv

DMM_FIELDS = ("p_m", "p_m_tilde", "q_m", "p2_m", "p2_m_tilde", "rho_m", "rho_m_tilde", "delta_m")


class CliError(Exception):
    pass


def _methods(text: str) -> list[Method]:
    try:
        return [Method(tok.strip().upper()) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown estimator in {text!r}; choose from {','.join(m.value for m in Method)}"
        ) from None


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2**63))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _markdown(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["| " + " | ".join(h.ljust(w) for h, w in zip(header, widths)) + " |"]
    lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    lines += ["| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def cmd_simulate(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else _fresh_seed()
    try:
        model = PairModel(
            SectorParams(args.p, args.rho),
            SectorParams(args.p2 if args.p2 is not None else args.p,
                         args.rho2 if args.rho2 is not None else args.rho),
            args.gamma,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    n2 = args.n2 if args.n2 is not None else args.n
    if args.T < 2 or args.n < 1 or n2 < 1:
        raise CliError("need T > 1 and n, n2 >= 1")
    panel = simulate_panel(model, [(args.n, n2)] * args.T, np.random.default_rng(seed))
    _emit(write_panel_csv(panel), args.out)
    print(f"seed: {seed}", file=sys.stderr)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    try:
        panel = read_panel_csv(args.panel)
    except PanelFormatError as exc:
        raise CliError(f"{args.panel}: {exc}") from None
    methods = args.estimators or [Method.IMM]
    rng = None
    if {Method.IM2, Method.IM3} & set(methods):
        seed = args.seed if args.seed is not None else _fresh_seed()
        rng = np.random.default_rng(seed)
        print(f"seed: {seed}", file=sys.stderr)
    try:
        report = est.estimate_all(panel, methods, m=args.m, rng=rng)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    header = ["estimator", "value", "clamped", "degenerate", *DMM_FIELDS]
    rows = []
    for method, g in report.estimates.items():
        row = [method.value, repr(g.value), str(g.clamped).lower(), str(g.degenerate).lower()]
        if method is Method.DMM and report.dmm is not None:
            row += [repr(getattr(report.dmm, f)) for f in DMM_FIELDS]
        else:
            row += [""] * len(DMM_FIELDS)
        rows.append(row)
    if args.format == "markdown":
        rows = [[r[0], f"{float(r[1]):.6f}", *r[2:4], *(f"{float(c):.6f}" if c else "" for c in r[4:])] for r in rows]
        text = _markdown(header, rows)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        text = buf.getvalue()
    _emit(text, args.out)
    return 0


def _study_config(args: argparse.Namespace) -> study.StudyConfig:
    if args.config:
        try:
            cfg = study.StudyConfig.load(args.config)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from None
    elif args.profile == "full":
        cfg = study.full_config()
    else:
        cfg = study.desk_config()
    overrides = {}
    for name in ("reps", "m", "seed"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.estimators:
        overrides["estimators"] = tuple(args.estimators)
    return cfg.with_settings(**overrides)


def cmd_study(args: argparse.Namespace) -> int:
    cfg = _study_config(args)
    out = Path(args.out)
    results_dir = Path(args.results_dir) if args.results_dir else out.with_name(out.name + ".d")
    try:
        grid = cfg.scenarios()
    except ValueError as exc:
        raise CliError(f"invalid grid: {exc}") from None
    print(f"seed: {cfg.seed}  scenarios: {len(grid)}  reps: {cfg.reps}  m: {cfg.m}", file=sys.stderr)
    results = study.run_grid(grid, workers=args.workers, estimators=cfg.estimators, results_dir=results_dir)
    study.results_to_csv(results, out)
    meta = out.with_name(out.stem + ".meta.json")
    meta.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    failed = [r for r in results if r.io_error]
    for r in failed:
        print(f"scenario {r.spec.params}: {r.io_error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_tabulate(args: argparse.Namespace) -> int:
    try:
        results = study.results_from_csv(args.results)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read results {args.results}: {exc}") from None
    where = {} if args.filter_gamma is None else {"gamma": args.filter_gamma}
    stats = args.stat or (["std", "bias"] if where else ["std", "rmse"])
    variables = list(study.PARAM_NAMES) if args.strat == "all" else [args.strat]
    if where:
        variables = [v for v in variables if v not in where]
    chunks = []
    for var in variables:
        try:
            table = study.stratify(results, var, stats, args.estimators, where)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        chunks.append(table.to_markdown() if args.format == "markdown" else table.to_csv())
    _emit("\n".join(chunks), args.out)
    return 0


def cmd_bayes_sign(args: argparse.Namespace) -> int:
    try:
        prob = est.bayes_sign_prob(args.d1, args.n1, args.d2, args.n2)
        sign = est.bayes_sign(args.d1, args.n1, args.d2, args.n2)
    except ValueError as exc:
        print(f"sectorcorr bayes-sign: usage error: {exc}", file=sys.stderr)
        return 2
    print(f"probability: {prob:.12g}")
    print(f"sign: {sign:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sectorcorr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a two-sector event-count panel")
    p.add_argument("--T", type=int, required=True, help="number of observation dates")
    p.add_argument("--n", type=int, required=True, help="cohort size, sector A (and B unless --n2)")
    p.add_argument("--n2", type=int, help="cohort size, sector B")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--p2", "--ptilde", dest="p2", type=float, help="event probability, sector B")
    p.add_argument("--rho2", "--rho-tilde", dest="rho2", type=float, help="asset correlation, sector B")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate gamma from a panel CSV")
    p.add_argument("panel")
    p.add_argument("--estimators", type=_methods, help="comma-separated, default IMM")
    p.add_argument("--m", type=int, default=100, help="bias-correction simulations for IM2/IM3")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("study", help="run a Monte Carlo study over a parameter grid")
    p.add_argument("--config", help="JSON grid config")
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    p.add_argument("--reps", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--estimators", type=_methods)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--results-dir")
    p.add_argument("--out", default="results.csv")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("tabulate", help="stratified averages of stored study results")
    p.add_argument("results")
    p.add_argument("--strat", choices=study.PARAM_NAMES + ("all",), default="all")
    p.add_argument("--filter-gamma", type=float)
    p.add_argument("--stat", action="append", choices=study.STAT_NAMES)
    p.add_argument("--estimators", type=_methods)
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tabulate)

    p = sub.add_parser("bayes-sign", help="P(X2 <= X1) for beta posteriors of two binomial rates")
    for name in ("d1", "n1", "d2", "n2"):
        p.add_argument(name, type=int)
    p.set_defaults(func=cmd_bayes_sign)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"sectorcorr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sectorcorr {args.command}: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
