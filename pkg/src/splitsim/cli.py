"""Command-line entry point.

Every subcommand writes its machine-readable output (snapshots, CSV, JSON,
pixmaps) and a matplotlib figure into the output directory, which defaults
to $SPLITSIM_OUT or the current directory.  Exit codes: 0 success, 1 a
check failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

from . import analysis, automata, conformance, render
from .engine import (BudgetExhausted, CertifiedExplosive, Evolution, IntervalSplit, InvalidParams,
                     Stabilized, parse_order)
from .numeric import AffineMass, HInterval, ParseError, format_fraction, parse_fraction
from .snapshot import Snapshot, label_grid

OUT_ENV = "SPLITSIM_OUT"


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        self.flag = flag
        super().__init__(f"{flag}: {message}")


def _parse(flag: str, fn, text):
    try:
        return fn(text)
    except (ParseError, ValueError) as exc:
        raise UsageError(flag, str(exc)) from None


def _h_arg(flag: str, text: str) -> HInterval:
    return _parse(flag, HInterval.parse, text)


def _frac(flag: str, text: str) -> Fraction:
    return _parse(flag, parse_fraction, text)


def _grid(flag: str, text: str) -> List[Fraction]:
    return [_frac(flag, part) for part in text.split(",") if part.strip()]


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _approx(v) -> str:
    return "=n/a" if v is None else f"≈{float(v):.6g}"


# ---- simulate ----

def _run_simulation(evo, args, frames):
    if not args.frames:
        return evo.run(args.max_steps, args.max_radius, shortcut=not args.no_shortcut)
    if not args.no_shortcut:
        reason = evo.certified_explosive_reason()
        if reason:
            return CertifiedExplosive(reason)
    for _ in range(args.max_steps):
        if not evo.step():
            return Stabilized(evo)
        if evo.t % args.frames == 0:
            frames.append(Snapshot.from_evolution(evo))
        if args.max_radius is not None and evo.reach > args.max_radius:
            return BudgetExhausted(evo, {"reason": "radius"})
    return Stabilized(evo) if not evo.unstable_sites() else BudgetExhausted(evo, {"reason": "steps"})


def cmd_simulate(args) -> int:
    h = _h_arg("-h", args.h)
    n = _parse("-n", AffineMass.parse, args.n)
    order = _parse("--order", parse_order, args.order)
    if args.max_steps <= 0:
        raise UsageError("--max-steps", "must be positive")
    if args.max_radius is not None and args.max_radius <= 0:
        raise UsageError("--max-radius", "must be positive")
    try:
        evo = Evolution(args.d, n, h, order, record=True)
    except InvalidParams as exc:
        raise UsageError("-n/-h", str(exc)) from None
    out = _outdir(args)
    frames: List[Snapshot] = []
    try:
        outcome = _run_simulation(evo, args, frames)
    except IntervalSplit as exc:
        print(f"outcome=IntervalSplit t={exc.t} site={exc.site} at h={format_fraction(exc.crossing)}")
        return 1
    snap = Snapshot.from_evolution(evo)
    stem = args.name
    snap.save(out / f"{stem}.snap")
    (out / f"{stem}_trace.csv").write_text(evo.trace_csv())
    for fr in frames:
        fr.save(out / f"{stem}_t{fr.t:05d}.snap")
    print(f"outcome={type(outcome).__name__} t={evo.t} |T|={len(evo.toppled)}")
    if isinstance(outcome, CertifiedExplosive):
        print(f"reason: {outcome.reason}")
    if args.d == 1 and len(snap.masses) <= 64:
        for x in sorted(snap.masses):
            print(f"{x[0]} {snap.masses[x]}")
    if args.d in (1, 2) and h.is_point:
        values = render.snapshot_values(snap, h.lo)
        img = render.mass_image(values, h.lo, args.d)
        render.write_ppm(render.upscale(img, args.block), out / f"{stem}.ppm")
        render.save_figure(img, out / f"{stem}.png", title=f"d={args.d} n={n} h={h} t={evo.t}")
    print(f"wrote {out / (stem + '.snap')}")
    return 0


# ---- ca ----

def cmd_ca(args) -> int:
    if args.rules:
        spec = _parse("--rules", automata.AutomatonSpec.from_text, Path(args.rules).read_text())
    elif args.automaton == "octagon":
        spec = automata.builtin_octagon(as_printed=args.as_printed)
    else:
        spec = automata.builtin(args.automaton, args.d)
    out = _outdir(args)
    state = spec.initial_state()
    try:
        for _ in range(args.steps):
            state = automata.ca_step(spec, state, strict=args.strict)
            if args.frames and state.t % args.frames == 0 and state.d == 2:
                (out / f"{args.name}_t{state.t:05d}.txt").write_text(label_grid(state))
    except (automata.NoMatchingRule, automata.AmbiguousRules) as exc:
        print(f"stopped at t={state.t}: {exc}")
        return 1
    print(f"automaton={spec.name} t={state.t} |G|={len(state.labels)} radius={automata.cluster_radius(state)}")
    if state.d == 2:
        (out / f"{args.name}.txt").write_text(label_grid(state))
        img = render.ca_image(state)
        render.write_ppm(render.upscale(img, args.block), out / f"{args.name}.ppm")
        render.save_figure(img, out / f"{args.name}.png", title=f"{spec.name} automaton, t={state.t}")
    return 0


# ---- verify ----

DEFAULT_N = {"diamond": "1", "square": "5-5*h", "octagon": "3"}


def cmd_verify(args) -> int:
    out = _outdir(args)
    if args.rules_ledger:
        reports = conformance.rule_ledger(args.automaton, args.d)
        text = "\n".join(r.line() for r in reports) + "\n"
        (out / f"{args.name}_rules.txt").write_text(text)
        sys.stdout.write(text)
        errata = sum(r.status != "pass" for r in reports)
        print(f"{len(reports) - errata} pass, {errata} erratum")
        return 1 if errata and args.strict else 0
    spec = automata.builtin(args.automaton, args.d)
    M = conformance.builtin_mapping(args.automaton, args.d, closed=args.closed)
    if args.h:
        I = _h_arg("--h", args.h)
    elif args.h_lo or args.h_hi:
        lo = _frac("--h-lo", args.h_lo) if args.h_lo else M.validity.lo
        hi = _frac("--h-hi", args.h_hi) if args.h_hi else M.validity.hi
        if lo >= hi:
            raise UsageError("--h-lo/--h-hi", "need h-lo < h-hi")
        I = HInterval(lo, hi, args.closed)
    else:
        I = M.validity
    n = _parse("--n", AffineMass.parse, args.n or DEFAULT_N[args.automaton])
    offset = args.offset if args.offset is not None else (8 if args.automaton == "octagon" else 0)
    d = args.d if args.automaton == "diamond" else 2
    try:
        report = conformance.cosimulate(spec, M, d, n, I, args.t_max, offset, args.bisection_budget,
                                        use_symmetry=not args.no_symmetry)
    except InvalidParams as exc:
        raise UsageError("--n/--h", str(exc)) from None
    (out / f"{args.name}.json").write_text(report.to_json() + "\n")
    for p in report.parts:
        line = f"{p.interval} {p.verdict} steps={p.steps_checked}"
        if p.violation:
            line += f" violation={json.dumps(p.violation, sort_keys=True)}"
        if p.note:
            line += f" note={p.note}"
        print(line)
    print(f"automaton={spec.name} success={report.success} bisections={len(report.bisections)}")
    return 0 if report.success else 1


# ---- shape ----

POLY_SCALE = {"D": Fraction(1), "Q": Fraction(2), "O": Fraction(5, 3)}


def cmd_shape(args) -> int:
    out = _outdir(args)
    h = _frac("-h", args.h)
    if args.ball:
        return _ball(args, out, h)
    n = _frac("-n", args.n)
    if args.t is None:
        raise UsageError("-t", "a time horizon is required for polygon checks")
    poly = args.polygon
    eps = _frac("--eps", args.eps or "1/10")
    c = _frac("--scale", args.scale) if args.scale else POLY_SCALE.get(poly, Fraction(1))
    f = c / args.t
    T = _simulate_region(args.d, n, h, args.t, args.t, args.fast)
    if poly == "l1":
        verdict = analysis.l1_shape_check(T, f, eps)
        polygon = analysis.DIAMOND
    else:
        polygon = analysis.POLYGONS[poly]
        verdict = analysis.shape_check(T, f, polygon, eps)
    with open(out / f"{args.name}_shape.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["polygon", "d", "h", "n", "t", "f", "eps", "inner_ok", "outer_ok", "inner_gap_sq",
                    "outer_excess_sq", "missing", "outside"])
        w.writerow([poly, args.d, format_fraction(h), format_fraction(n), args.t, format_fraction(f),
                    format_fraction(eps), verdict.inner_ok, verdict.outer_ok,
                    format_fraction(verdict.worst_inner_gap), format_fraction(verdict.worst_outer_excess),
                    len(verdict.missing), len(verdict.outside)])
    (out / f"{args.name}_overlay.txt").write_text(render.geometry_text(polygon, f, eps, args.t))
    if args.d == 2:
        img = render.mass_image({x: Fraction(0) for x in T}, h, 2)
        render.save_figure(img, out / f"{args.name}_shape.png", title=f"T_t, t={args.t}, h={h}",
                           polygon=polygon, scale=f, eps=eps)
    print(verdict.summary())
    return 0 if verdict.ok else 1


def _ball(args, out: Path, h: Fraction) -> int:
    ns = _grid("-n", args.n)
    eps = _frac("--eps", args.eps or "1/20")
    reports = []
    for n in ns:
        T = _simulate_region(args.d, n, h, None, args.max_steps, args.fast)
        rep = analysis.ball_bounds_check(T, n, h, args.d, eps)
        reports.append(rep)
        print(f"n={format_fraction(n)} r{_approx(rep.r)} c1{_approx(rep.c1)} c2_obs{_approx(rep.c2_obs)} "
              f"c2p_obs{_approx(rep.c2p_obs)} inner_sq={rep.inner_sq} outer_sq={rep.outer_sq}"
              + (f" note={rep.note}" if rep.note else ""))
    with open(out / f"{args.name}_ball.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(analysis.BALL_CSV_HEADER)
        for rep in reports:
            w.writerow(rep.csv_row())
    series = {"c2_obs": [(float(r.n), r.c2_obs) for r in reports if r.c2_obs is not None],
              "c2'_obs": [(float(r.n), r.c2p_obs) for r in reports if r.c2p_obs is not None]}
    render.save_series_figure(series, out / f"{args.name}_ball.png", "n", "observed margin",
                              f"ball margins, d={args.d} h={format_fraction(h)}")
    if len(reports) < 2:
        return 0
    inner_ok, outer_ok = analysis.ball_family_check(reports)
    print(f"inner_bounded={inner_ok} outer_bounded={outer_ok}")
    return 0 if inner_ok and outer_ok else 1


def _simulate_region(d, n, h, t, max_steps, fast):
    if fast:
        from .fastpath import certified_run
        run = certified_run(d, n, h, max_steps=max_steps if max_steps else 10 ** 7)
        return run.toppled
    evo = Evolution(d, n, h)
    if t is not None:
        for _ in range(t):
            if not evo.step():
                break
    else:
        evo.run(max_steps or 10 ** 6, shortcut=False)
    return evo.toppled


# ---- scan ----

def cmd_scan(args) -> int:
    out = _outdir(args)
    hs = _grid("--h-grid", args.h_grid)
    ns = _grid("--n-grid", args.n_grid)
    order = _parse("--order", parse_order, args.order)
    rows = analysis.regime_scan(args.d, hs, ns, args.max_steps, args.max_radius, order)
    text = analysis.scan_csv(rows)
    (out / f"{args.name}.csv").write_text(text)
    sys.stdout.write(text)
    series = {f"h={format_fraction(r.h)} n={format_fraction(r.n)}": r.series for r in rows if r.series}
    if series:
        render.save_series_figure(series, out / f"{args.name}.png", "t", "|T_t|", "growth of runs without a verdict")
    return 0


# ---- constants ----

def _plain(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else format_fraction(q)


def cmd_constants(args) -> int:
    c = analysis.theory_constants(args.d)
    print(f"p={_plain(c.p_d)} q={_plain(c.q_d)} h*={_plain(c.h_star)} C'={_plain(c.C_d_prime)}")
    print(f"closed form (q-2d)/(p+2d)={_plain(c.h_star_displayed)} (sign differs from the defining equation)")
    if args.out or os.environ.get(OUT_ENV):
        out = _outdir(args)
        (out / f"{args.name}.csv").write_text(
            "d,p,q,h_star,C_prime\n"
            f"{c.d},{format_fraction(c.p_d)},{format_fraction(c.q_d)},{format_fraction(c.h_star)},"
            f"{format_fraction(c.C_d_prime)}\n")
    return 0


# ---- render ----

def cmd_render(args) -> int:
    out = _outdir(args)
    path = Path(args.snapshot)
    try:
        snap = Snapshot.load(path)
    except ParseError as exc:
        raise UsageError("snapshot", str(exc)) from None
    except OSError as exc:
        raise UsageError("snapshot", str(exc)) from None
    if args.at:
        h = _frac("--at", args.at)
        if h not in snap.h:
            raise UsageError("--at", f"{args.at} is outside the snapshot's range {snap.h}")
    elif snap.h.is_point:
        h = snap.h.lo
    else:
        raise UsageError("--at", "the snapshot covers an h-interval; pick a value to render at")
    if snap.d not in (1, 2):
        raise UsageError("snapshot", f"cannot render d={snap.d}")
    values = render.snapshot_values(snap, h)
    img = render.mass_image(values, h, snap.d, radius=args.radius)
    stem = args.name or path.stem
    render.write_ppm(render.upscale(img, args.block), out / f"{stem}.ppm")
    polygon = scale = eps = None
    if args.overlay:
        polygon = analysis.POLYGONS[args.overlay]
        c = _frac("--scale", args.scale) if args.scale else POLY_SCALE[args.overlay]
        scale = c / max(snap.t, 1)
        eps = _frac("--eps", args.eps or "1/10")
        (out / f"{stem}_overlay.txt").write_text(render.geometry_text(polygon, scale, eps, snap.t))
    render.save_figure(img, out / f"{stem}.png", title=f"t={snap.t} h={format_fraction(h)}",
                       polygon=polygon, scale=scale, eps=eps)
    print(f"wrote {out / (stem + '.ppm')}")
    return 0


# ---- parser ----

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        m = re.match(r"argument ([^:]+): (.*)", message)
        if m:
            raise UsageError(m.group(1), m.group(2))
        raise UsageError("arguments", message)


# flags whose values may be negative rationals such as -1/3, which argparse
# would otherwise read as an unknown option
VALUE_FLAGS = {"-h", "-n", "--n", "--h", "--h-lo", "--h-hi", "--h-grid", "--n-grid", "--at"}


def _join_negative_values(argv: List[str]) -> List[str]:
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in VALUE_FLAGS and i + 1 < len(argv) and re.match(r"-[\d.]", argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="splitsim", description="Splitting model simulator and checks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, name):
        sp.add_argument("--help", action="help", help="show this help message and exit")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--name", default=name, help="file name stem for outputs")

    s = sub.add_parser("simulate", add_help=False, help="run the splitting model")
    common(s, "run")
    s.add_argument("-d", type=int, default=2)
    s.add_argument("-n", required=True, help="source mass, e.g. 4, 3/2 or 5-5*h")
    s.add_argument("-h", required=True, help="background: p/q or an interval [a,b)")
    s.add_argument("--order", default="parallel", help="parallel, lexmin or random:SEED")
    s.add_argument("--max-steps", type=int, default=10 ** 5)
    s.add_argument("--max-radius", type=int)
    s.add_argument("--frames", type=int, default=0, help="also save a snapshot every k steps")
    s.add_argument("--block", type=int, default=4, help="pixels per site in the pixmap")
    s.add_argument("--no-shortcut", action="store_true", help="do not stop early on proven explosion")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("ca", add_help=False, help="run a cellular automaton")
    common(c, "ca")
    c.add_argument("--automaton", choices=["diamond", "square", "octagon"], default="octagon")
    c.add_argument("--rules", help="rule file to load instead of a built-in")
    c.add_argument("-d", type=int, default=2)
    c.add_argument("--steps", type=int, default=135)
    c.add_argument("--as-printed", action="store_true", help="octagon rules without the p-persistence rule")
    c.add_argument("--strict", action="store_true", help="fail when rules with different results match")
    c.add_argument("--frames", type=int, default=0)
    c.add_argument("--block", type=int, default=4)
    c.set_defaults(func=cmd_ca)

    v = sub.add_parser("verify", add_help=False, help="co-simulate an automaton against the splitting model")
    common(v, "verify")
    v.add_argument("--automaton", choices=["diamond", "square", "octagon"], required=True)
    v.add_argument("-d", type=int, default=2)
    v.add_argument("--n", help="source mass (default per automaton)")
    v.add_argument("--h", help="interval [a,b) or a single value")
    v.add_argument("--h-lo")
    v.add_argument("--h-hi")
    v.add_argument("--closed", action="store_true", help="closed right end for the h-interval")
    v.add_argument("--t-max", type=int, default=30)
    v.add_argument("--offset", type=int)
    v.add_argument("--bisection-budget", type=int, default=16)
    v.add_argument("--no-symmetry", action="store_true", help="simulate every site, not one per orbit")
    v.add_argument("--rules-ledger", action="store_true", help="check the per-rule interval arithmetic instead")
    v.add_argument("--strict", action="store_true", help="with --rules-ledger, fail on any erratum")
    v.set_defaults(func=cmd_verify)

    sh = sub.add_parser("shape", add_help=False, help="limiting-shape and ball-bound checks")
    common(sh, "shape")
    sh.add_argument("-d", type=int, default=2)
    sh.add_argument("-n", required=True, help="source mass; with --ball a comma-separated list")
    sh.add_argument("-h", required=True)
    sh.add_argument("-t", type=int)
    sh.add_argument("--polygon", choices=["D", "Q", "O", "l1"], default="D")
    sh.add_argument("--scale", help="c in f(t) = c/t (default 1, 2, 5/3 for D, Q, O)")
    sh.add_argument("--eps")
    sh.add_argument("--ball", action="store_true", help="ball bounds of the stabilized set instead")
    sh.add_argument("--max-steps", type=int)
    sh.add_argument("--fast", action="store_true", help="certified floating-point kernel (d <= 2)")
    sh.set_defaults(func=cmd_shape)

    sc = sub.add_parser("scan", add_help=False, help="regime scan over h and n")
    common(sc, "scan")
    sc.add_argument("-d", type=int, default=2)
    sc.add_argument("--h-grid", required=True, help="comma-separated rationals")
    sc.add_argument("--n-grid", required=True)
    sc.add_argument("--order", default="parallel")
    sc.add_argument("--max-steps", type=int, default=200)
    sc.add_argument("--max-radius", type=int)
    sc.set_defaults(func=cmd_scan)

    k = sub.add_parser("constants", add_help=False, help="p_d, q_d, h* and C'_d")
    common(k, "constants")
    k.add_argument("-d", type=int, default=2)
    k.set_defaults(func=cmd_constants)

    r = sub.add_parser("render", add_help=False, help="snapshot to pixmap and figure")
    common(r, None)
    r.add_argument("snapshot")
    r.add_argument("--at", help="background value to evaluate an interval snapshot at")
    r.add_argument("--radius", type=int)
    r.add_argument("--block", type=int, default=4)
    r.add_argument("--overlay", choices=["D", "Q", "O"])
    r.add_argument("--scale")
    r.add_argument("--eps")
    r.set_defaults(func=cmd_render)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_join_negative_values(list(sys.argv[1:] if argv is None else argv)))
        if getattr(args, "d", 1) < 1:
            raise UsageError("-d", "dimension must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
