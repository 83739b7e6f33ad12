"""Command-line entry point: ``pruw plan | curves | simulate | verify``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import oracle, planner, sim
from .errors import PRUWError, StorageOutOfRange, TooFewDatabases
from .ffmath import DEFAULT_MODULUS, PrimeField

EX_OK = 0
EX_FAIL = 1
EX_RANGE = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_CANTCREAT = 73


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def rational(text: str) -> Fraction:
    """Parse ``a/b`` or an exact decimal string (``0.7`` means ``7/10``)."""
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(Decimal(text))
    except (ValueError, ZeroDivisionError, InvalidOperation):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def fmt(v: Fraction) -> str:
    return f"{v} (~{float(v):.6g})"


def cmd_plan(args) -> int:
    try:
        p = planner.plan(args.databases, args.mu)
    except (StorageOutOfRange, TooFewDatabases) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_RANGE
    if args.json:
        print(p.to_json())
        return EX_OK
    print(f"N={p.N} mu={fmt(p.mu_target)}")
    for part in p.parts:
        print(f"  (r={part.r}, K={part.K}) x={part.x} y={part.y} fraction={fmt(part.fraction)}")
    if p.mu_used != p.mu_target:
        print(f"  storage used: {fmt(p.mu_used)} (no cheaper scheme uses more)")
    print(f"read cost  C_R = {fmt(p.read_cost)}")
    print(f"write cost C_W = {fmt(p.write_cost)}")
    print(f"total cost C_T = {fmt(p.predicted_cost)}")
    return EX_OK


def _row(mu, cost, series, **extra):
    return {"mu": f"{float(mu):.10g}", "cost": f"{float(cost):.10g}", "series": series,
            "mu_exact": str(mu), "cost_exact": str(cost), **extra}


def _write_csv(path: Path, rows, fields):
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_curves(args) -> int:
    N = args.databases
    try:
        points = planner.enumerate_basic_points(N, include_odd=True)
    except TooFewDatabases as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_RANGE
    even = [p for p in points if p.parity == "even"]
    basic = [_row(p.mu, p.cost, p.parity, r=p.r, K=p.K) for p in points]

    curves = {"hybrid": planner.lower_hull(even)}
    divided = [p for p in even if p.K == 1]
    coded = [p for p in even if p.r == N]
    if divided:
        curves["divided"] = planner.lower_hull(divided)
    if coded:
        curves["coded"] = planner.lower_hull(coded)
    hull = [_row(p.mu, p.cost, name, r=p.r, K=p.K) for name, c in curves.items() for p in c.points]

    lo, hi = planner.storage_range(N)
    steps = args.grid
    grid = [lo + (hi - lo) * Fraction(i, steps) for i in range(steps + 1)]
    bounds = []
    for mu in grid:
        lb = planner.lb_curves(N, mu)
        if lb["lb_divided"] is not None:
            bounds.append(_row(mu, lb["lb_divided"], "LB_d"))
        if lb["lb_coded"] is not None:
            bounds.append(_row(mu, lb["lb_coded"], "LB_c"))
        bounds += [_row(mu, v, f"LB_r={r}") for r, v in lb["lb_per_r"].items()]
        bounds += [_row(mu, v, f"LB_K={K}") for K, v in lb["lb_per_K"].items()]

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        base = ["mu", "cost", "series", "mu_exact", "cost_exact"]
        _write_csv(out / "basic_points.csv", basic, base + ["r", "K"])
        _write_csv(out / "hull.csv", hull, base + ["r", "K"])
        _write_csv(out / "bounds.csv", bounds, base)
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EX_CANTCREAT
    print(f"wrote {len(basic)} basic points, {len(hull)} hull vertices, {len(bounds)} bound samples to {out}")
    return EX_OK


def _read_delta(path: str, F: PrimeField) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").split()
    try:
        return F.array([int(v) for v in text])
    except ValueError as exc:
        raise UsageError(f"delta file {path}: {exc}")


def cmd_simulate(args) -> int:
    try:
        p = planner.plan(args.databases, args.mu)
    except (StorageOutOfRange, TooFewDatabases) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_RANGE
    L = args.length if args.length is not None else sim.granule(p)
    if not 1 <= args.theta <= args.submodels:
        raise UsageError(f"--theta must lie in 1..{args.submodels}")
    spec = sim.ModelSpec(args.submodels, L, args.modulus)
    F = PrimeField(spec.q)
    rng = np.random.default_rng(args.seed)
    L_eff = sim.effective_length(p, L)
    model = F.random(rng, (spec.M, L_eff))
    if L_eff > L:
        model[:, L:] = 0
    delta = _read_delta(args.delta_file, F) if args.delta_file else F.random(rng, L)
    if delta.size > L:
        raise UsageError(f"delta has {delta.size} symbols, submodel has {L}")

    state = sim.build(args.databases, args.mu, spec, seed=args.seed, model=model)
    theta = args.theta
    got, t_read = state.read(theta)
    read_ok = bool((got == model[theta - 1]).all())
    t_write = state.write(theta, delta)
    expected = model.copy()
    expected[theta - 1, : delta.size] = F.add(expected[theta - 1, : delta.size], delta)
    got2, _ = state.read(theta)
    implied, residual = state.audit_storage()
    write_ok = bool((got2 == expected[theta - 1]).all()) and bool((implied == expected).all()) and residual == 0

    report = sim.measure(state, [t_read, t_write])
    correct = read_ok and write_ok
    if args.transcript:
        Path(args.transcript).write_text(t_read.to_jsonl() + t_write.to_jsonl())
    print(f"N={args.databases} mu={fmt(Fraction(args.mu))} M={spec.M} L={L} L_effective={L_eff}")
    for part in report.per_part:
        print(f"  part (r={part['r']}, K={part['K']}, x={part['x']}, y={part['y']}) fraction={part['fraction']}"
              f" download={part['download']} upload={part['upload']}")
    print(f"C_R = {fmt(report.read)}  (plan {fmt(report.analytic_read)})")
    print(f"C_W = {fmt(report.write)}  (plan {fmt(report.analytic_write)})")
    print(f"C_T = {fmt(report.total)}  (plan {fmt(report.analytic_total)})")
    if L_eff != L:
        print(f"C_T over requested L = {fmt(report.raw_total)} (padding overhead)")
    print(f"storage per database = {max(state.storage_counts())} <= {fmt(state.storage_limit())}")
    print(f"correct={str(correct).lower()} costs_match={str(report.matches).lower()}")
    return EX_OK if correct and report.matches else EX_FAIL


def cmd_verify(args) -> int:
    run_lemmas = args.lemma or ([] if args.privacy else [2, 3])
    all_ok = True
    for lemma in run_lemmas:
        fn = planner.verify_lemma2 if lemma == 2 else planner.verify_lemma3
        for N in args.databases:
            try:
                rep = fn(N)
            except TooFewDatabases as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EX_RANGE
            status = "PASS" if rep.passed else "FAIL"
            print(f"lemma {lemma} N={N}: {status} ({len(rep.rows)} checks)")
            for row in rep.rows:
                if args.verbose or not row.passed:
                    print(f"  {'ok  ' if row.passed else 'FAIL'} {row.label}: {row.detail}")
            all_ok &= rep.passed
    if args.privacy:
        try:
            reports = oracle.run_default_suite(q=args.privacy_q)
        except oracle.TooLarge as exc:
            print(f"privacy: SKIP ({exc})")
            reports = []
        for rep in reports:
            expected = not rep.check.endswith("_zeroed")
            ok = rep.passed == expected
            all_ok &= ok
            if args.json:
                print(rep.to_json())
            else:
                p = rep.params
                verdict = "PASS" if ok else "FAIL"
                print(f"privacy {rep.check} (r={p['r']},K={p['K']},q={p['q']},M={p['M']}): {verdict}"
                      f" distance={rep.distance} enumerated={rep.enumerated}")
    return EX_OK if all_ok else EX_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pruw", description="Private read-update-write over storage-constrained databases.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="cheapest hybrid storage allocation for (N, mu)")
    p.add_argument("-N", "--databases", type=positive_int, required=True, help="number of databases N (>= 4)")
    p.add_argument("--mu", type=rational, required=True, help="storage fraction, as a/b or an exact decimal")
    p.add_argument("--json", action="store_true", help="print the plan as JSON")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("curves", help="write basic points, hulls and lower bounds as CSV")
    p.add_argument("-N", "--databases", type=positive_int, required=True, help="number of databases N (>= 4)")
    p.add_argument("--grid", type=positive_int, default=100, help="number of mu steps for bounds.csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("simulate", help="build a system and run read, write, read")
    p.add_argument("-N", "--databases", type=positive_int, required=True, help="number of databases N (>= 4)")
    p.add_argument("--mu", type=rational, required=True, help="storage fraction, as a/b or an exact decimal")
    p.add_argument("-M", "--submodels", type=positive_int, default=4, help="number of submodels (>= 2)")
    p.add_argument("-L", "--length", type=positive_int, help="symbols per submodel (default: smallest unpadded)")
    p.add_argument("--seed", type=int, default=0, help="seed for constants, model, noise and delta")
    p.add_argument("--theta", type=positive_int, default=1, help="1-based index of the submodel to update")
    p.add_argument("--delta-file", help="whitespace/comma separated update symbols (default: random)")
    p.add_argument("--modulus", type=positive_int, default=DEFAULT_MODULUS, help="prime field modulus")
    p.add_argument("--transcript", help="write the session transcript as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check the lemma claims and the privacy conditions")
    p.add_argument("-N", "--databases", type=positive_int, nargs="+", default=[10], help="one or more N values")
    p.add_argument("--lemma", type=int, choices=[2, 3], action="append", help="lemma to verify (repeatable)")
    p.add_argument("--privacy", action="store_true", help="run the exhaustive privacy oracles")
    p.add_argument("--privacy-q", type=int, default=13, help="field size for the privacy oracles")
    p.add_argument("--json", action="store_true", help="print privacy reports as JSON")
    p.add_argument("-v", "--verbose", action="store_true", help="list every individual check")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pruw: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except PRUWError as exc:
        print(f"pruw: error: {exc}", file=sys.stderr)
        return EX_DATAERR


if __name__ == "__main__":
    sys.exit(main())
