"""Command-line front end.

Exit codes: 0 success, 1 negative verdict (incompatible or invalid input
object), 2 usage error or malformed input, 3 numerical failure.
"""

import argparse
import json
import math
import sys
from typing import List, Optional

import numpy as np

from qtesters import robustness as rb
from qtesters import scenarios as sc
from qtesters.compat import povm_compatibility, structural_predicates, tester_compatibility
from qtesters.errors import SdpFailure, ValidationError
from qtesters.objects import (ChoiOperator, DensityOperator, NComb, NTester, Povm, Tester,
                              ancilla_free_decomposition, object_from_json)
from qtesters.sdp import FEAS_TOL

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def fmt(x: float) -> str:
    return f"{x + 0.0:.6f}"


def _fmt_complex(z: complex) -> str:
    re, im = z.real + 0.0, z.imag + 0.0
    if abs(im) < 5e-7:
        return fmt(re)
    return f"{fmt(re)}{'+' if im >= 0 else '-'}{fmt(abs(im))}i"


def format_matrix(m, indent: str = "    ") -> str:
    m = np.asarray(m.data if hasattr(m, "data") else m)
    return "\n".join(indent + "[" + ", ".join(_fmt_complex(z) for z in row) + "]" for row in m)


def _load(path: str):
    """Parse and validate a JSON object file; malformed JSON is a usage error."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return obj


def _load_object(path: str):
    obj = _load(path)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise UsageError(f"{path}: JSON object needs a 'kind' field")
    return object_from_json(obj)


def _kind(obj) -> str:
    return {DensityOperator: "state", Povm: "povm", Tester: "tester", ChoiOperator: "choi",
            NComb: "comb", NTester: "ntester"}[type(obj)]


def _print_tester(name: str, t: Tester, out):
    print(f"{name}: tester with dims (d1, d0) = {t.dims}, {len(t)} outcomes", file=out)
    for label, e in zip(t.outcomes, t.elements):
        print(f"  outcome {label}:", file=out)
        print(format_matrix(e), file=out)
    print("  normalization:", file=out)
    print(format_matrix(t.normalization), file=out)


def _print_povm(name: str, p: Povm, out):
    print(f"{name}: POVM on dimension {p.dim}, {len(p)} outcomes", file=out)
    for label, e in zip(p.outcomes, p.elements):
        print(f"  outcome {label}:", file=out)
        print(format_matrix(e), file=out)


# ------------------------------------------------------------- commands

def cmd_validate(args, out) -> int:
    try:
        obj = _load_object(args.file)
    except ValidationError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=out)
        return EXIT_NEGATIVE
    kind = _kind(obj)
    if args.format == "json":
        print(json.dumps({"valid": True, "kind": kind}), file=out)
        return EXIT_OK
    print(f"valid {kind}", file=out)
    if isinstance(obj, Tester):
        print(f"dims (d1, d0) = {obj.dims}; outcomes: {', '.join(obj.outcomes)}", file=out)
        print("normalization:", file=out)
        print(format_matrix(obj.normalization), file=out)
        af = ancilla_free_decomposition(obj)
        print(f"ancilla-free: {'yes' if af is not None else 'no'}", file=out)
    elif isinstance(obj, (NComb, NTester)):
        print(f"steps: {obj.steps}; interleaved dims: {list(obj.io_dims)}", file=out)
    elif isinstance(obj, Povm):
        print(f"dimension {obj.dim}; outcomes: {', '.join(obj.outcomes)}", file=out)
    return EXIT_OK


def _load_all(paths):
    objs = [_load_object(p) for p in paths]
    kinds = {_kind(o) for o in objs}
    if len(kinds) != 1:
        raise UsageError(f"inputs mix kinds {sorted(kinds)}")
    return objs, kinds.pop()


def cmd_compat(args, out) -> int:
    try:
        objs, kind = _load_all(args.files)
    except ValidationError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=out)
        return EXIT_NEGATIVE
    if len(objs) < 2:
        raise UsageError("compat needs at least two files")
    if kind == "tester":
        verdict = tester_compatibility(objs, feas_tol=args.feas_tol)
    elif kind == "povm":
        verdict = povm_compatibility(objs, feas_tol=args.feas_tol)
    else:
        raise UsageError(f"compat expects testers or POVMs, got {kind}")
    if args.format == "json":
        print(json.dumps(verdict.to_json()), file=out)
    else:
        print("compatible" if verdict.compatible else "incompatible", file=out)
        if verdict.violated:
            print(f"violated: {verdict.violated}", file=out)
        if verdict.normalization_distance is not None:
            print(f"normalization distance: {fmt(verdict.normalization_distance)}", file=out)
        if verdict.margin is not None and math.isfinite(verdict.margin):
            print(f"feasibility margin: {fmt(verdict.margin)}", file=out)
        print(f"method: {verdict.method}", file=out)
        if kind == "tester" and len(objs) == 2:
            flags = structural_predicates(*objs)
            print("structure: " + ", ".join(f"{k}={'true' if v else 'false'}"
                                             for k, v in flags.to_json().items()), file=out)
    return EXIT_OK if verdict.compatible else EXIT_NEGATIVE


def _report_result(res: rb.RobustnessResult, args, out):
    if args.format == "json":
        print(json.dumps(res.to_json()), file=out)
        return
    print(f"lambda = {fmt(res.lam)}", file=out)
    print(f"method: {res.method}" + (f" ({res.shortcut})" if res.shortcut else ""), file=out)
    if args.replay:
        rep = rb.replay_witness(res)
        print(f"witness replay: {'compatible' if rep['compatible'] else 'FAILED'}", file=out)


def cmd_robustness(args, out) -> int:
    try:
        objs, kind = _load_all(args.files)
    except ValidationError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=out)
        return EXIT_NEGATIVE
    if kind != args.target:
        raise UsageError(f"'robustness {args.target}' got {kind} inputs")
    if len(objs) != 2:
        if args.target == "tester" and len(objs) > 2:
            res = rb.tester_robustness_experimental(objs, feas_tol=args.feas_tol)
            print("note: joint robustness of more than two testers is experimental", file=out)
            print(f"lambda = {fmt(res.lam)}", file=out)
            print(f"trivial upper bound: {fmt(res.details['trivial_upper'])}", file=out)
            return EXIT_OK
        raise UsageError(f"robustness {args.target} needs exactly two files")
    a, b = objs
    if args.target == "state":
        res = rb.state_robustness(a.op, b.op)
    elif args.target == "povm":
        res = rb.measurement_robustness(a, b, feas_tol=args.feas_tol)
    elif args.bisection:
        res = rb.tester_robustness_bisection(a, b, tol=args.tol)
    else:
        res = rb.tester_robustness_two_outcome(a, b, feas_tol=args.feas_tol)
    _report_result(res, args, out)
    if args.target == "tester" and args.bounds and args.format != "json":
        rep = rb.bounds(a, b)
        print(f"state lower bound: {fmt(rep.state_lower)}", file=out)
        if rep.measurement_upper is not None:
            print(f"measurement upper bound: {fmt(rep.measurement_upper)}", file=out)
        print(f"trivial upper bound: {fmt(rep.trivial_upper)}", file=out)
    return EXIT_OK


def _grid(lo, hi, steps, degrees):
    if steps < 1:
        raise UsageError("grid needs at least one step")
    if degrees:
        lo, hi = math.radians(lo), math.radians(hi)
    if steps == 1:
        return np.array([lo])
    return np.linspace(lo, hi, steps)


def cmd_sweep(args, out) -> int:
    top = 180.0 if args.degrees else math.pi
    tg = _grid(args.theta_min, top if args.theta_max is None else args.theta_max, args.theta_steps,
               args.degrees)
    pg = _grid(args.phi_min, top if args.phi_max is None else args.phi_max, args.phi_steps, args.degrees)
    try:
        rows = sc.sweep(tg, pg, workers=args.workers)
    except sc.OutsideRegionError as exc:
        raise UsageError(str(exc)) from exc
    text = sc.sweep_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        out.write(text)
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"row ({fmt(r.theta)}, {fmt(r.phi)}) failed: {r.error}", file=sys.stderr)
    return EXIT_NUMERICAL if failed else EXIT_OK


# ------------------------------------------------------------------ demos

def _demo_tv_th(out):
    a, b = sc.t_v(), sc.t_h()
    _print_tester("T_V", a, out)
    _print_tester("T_H", b, out)
    v = tester_compatibility([a, b])
    print(f"verdict: {'compatible' if v.compatible else 'incompatible'} ({v.violated}), "
          f"normalization distance {fmt(v.normalization_distance)}", file=out)
    flags = structural_predicates(a, b)
    print("structure: " + ", ".join(f"{k}={'true' if x else 'false'}" for k, x in flags.to_json().items()),
          file=out)
    res = rb.tester_robustness_two_outcome(a, b)
    print(f"lambda = {fmt(res.lam)} ({res.shortcut})", file=out)


def _demo_busch(out):
    for p, q in ((1 / math.sqrt(2), 1 / math.sqrt(2)), (0.8, 0.8), (0.6, 0.6)):
        pa, pb = sc.busch(p, q)
        v = povm_compatibility([pa, pb])
        print(f"busch p={fmt(p)} q={fmt(q)} (p^2+q^2={fmt(p * p + q * q)}): "
              f"{'compatible' if v.compatible else 'incompatible'}", file=out)


def _demo_mub(out):
    pa, pb = sc.mub_povms(2)
    res = rb.measurement_robustness(pa, pb)
    print(f"qubit MUB measurement robustness: lambda = {fmt(res.lam)}", file=out)
    print(f"expected (1 - 1/sqrt(2))/2 = {fmt(sc.mub_conjecture_bound(2, 1))}", file=out)
    pair = sc.polarization_pair(0.0, math.pi / 2)
    t = rb.tester_robustness_two_outcome(pair.a, pair.b)
    print(f"theta=0, phi=pi/2 tester pair: lambda = {fmt(t.lam)} ({t.shortcut})", file=out)


def _demo_region_m(out):
    theta = phi = math.pi / 2
    pair = sc.polarization_pair(theta, phi)
    _print_tester("A", pair.a, out)
    _print_tester("B", pair.b, out)
    w = sc.region_m_witness(theta, phi)
    print(f"analytic witness: lambda = {fmt(w.lam)}, delta = {fmt(w.delta)}", file=out)
    for k, v in w.checks.items():
        print(f"  check {k}: {v:.3e}", file=out)
    res = rb.tester_robustness_two_outcome(pair.a, pair.b, use_shortcuts=False)
    print(f"SDP: lambda = {fmt(res.lam)}", file=out)


def _demo_polarization(out):
    for theta, phi in ((0.1, math.pi / 2), (math.pi / 2, math.pi / 2), (0.0, math.pi / 2)):
        pair = sc.polarization_pair(theta, phi)
        member, closed = sc.region_m(theta, phi)
        res = rb.tester_robustness_two_outcome(pair.a, pair.b, use_shortcuts=False)
        lower = rb.state_robustness(pair.a.normalization, pair.b.normalization).lam
        print(f"theta={fmt(theta)} phi={fmt(phi)} in_m={'true' if member else 'false'} "
              f"state_bound={fmt(lower)} lambda={fmt(res.lam)}", file=out)


def _demo_unitality(out):
    t = sc.unitality_tester()
    _print_tester("unitality", t, out)
    print(f"ancilla-free: {'yes' if ancilla_free_decomposition(t) is not None else 'no'}", file=out)


def _demo_entangled(out):
    t = sc.entangled_tester()
    _print_tester("entangled", t, out)
    print(f"ancilla-free: {'yes' if ancilla_free_decomposition(t) is not None else 'no'}", file=out)


def _demo_classical(out):
    t = sc.classical_ancilla_example()
    _print_tester("classical ancilla", t, out)
    print(f"ancilla-free: {'yes' if ancilla_free_decomposition(t) is not None else 'no'}", file=out)


DEMOS = {
    "tv-th": _demo_tv_th, "busch": _demo_busch, "mub": _demo_mub, "region-m": _demo_region_m,
    "polarization": _demo_polarization, "unitality": _demo_unitality, "entangled": _demo_entangled,
    "classical-ancilla": _demo_classical,
}


def cmd_demo(args, out) -> int:
    if args.name == "list":
        print("\n".join(sorted(DEMOS)), file=out)
        return EXIT_OK
    if args.name not in DEMOS:
        raise UsageError(f"unknown demo {args.name!r}; known: {', '.join(sorted(DEMOS))}")
    DEMOS[args.name](out)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtesters", description=__doc__.splitlines()[0])
    ap.add_argument("--feas-tol", type=_positive, default=FEAS_TOL, help="SDP feasibility tolerance")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a state/povm/tester/choi/comb/ntester JSON file")
    p.add_argument("file")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compat", help="decide compatibility of testers or POVMs")
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_compat)

    p = sub.add_parser("robustness", help="robustness of incompatibility")
    p.add_argument("target", choices=["state", "povm", "tester"])
    p.add_argument("files", nargs="+")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("--bisection", action="store_true", help="use the bisection oracle (testers)")
    p.add_argument("--tol", type=_positive, default=rb.BISECTION_TOL, help="bisection tolerance")
    p.add_argument("--bounds", action="store_true", help="also print the bound report (testers)")
    p.add_argument("--replay", action="store_true", help="replay the witness through the checker")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("sweep", help="robustness of the polarization pairs over a grid (CSV)")
    p.add_argument("--theta-steps", type=int, default=17)
    p.add_argument("--phi-steps", type=int, default=17)
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--phi-min", type=float, default=0.0)
    p.add_argument("--phi-max", type=float, default=None)
    p.add_argument("--degrees", action="store_true", help="angles given in degrees")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("demo", help="run a named scenario ('list' shows them)")
    p.add_argument("name")
    p.set_defaults(func=cmd_demo)
    return ap


def run(argv: Optional[List[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SdpFailure as exc:
        sol = exc.solution
        print(f"numerical failure: {exc}", file=sys.stderr)
        if sol is not None:
            print(f"  status {sol.status}, primal residual {sol.primal_residual:.3e}, "
                  f"dual residual {sol.dual_residual:.3e}, gap {sol.duality_gap:.3e}, "
                  f"iterations {sol.iterations}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValidationError as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=out)
        return EXIT_NEGATIVE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
