"""Command-line harness: campaigns, chain runs, instance files and verdicts.

Exit codes: 0 all checks pass, 1 input error, 2 a checked inequality failed,
3 the ambient is too small (window or divisor infeasibility), 4 a
construction failed. Reports are JSON with sorted keys; only the ``timing``
object varies between identical runs.
"""
from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction

from . import __version__
from . import serialize as ser
from . import star as st
from .audit import AssertionViolation
from .campaigns import idempotent_correction_campaign, perturbation_campaign, stabilization_campaign
from .halperin import (AmbientFactor, AmbientTooSmall, StageBudgetExhausted, WindowInfeasible, chain_build,
                       theta_half_doubling_check)
from .matalg import Element
from .regular import ConstructionFailure
from .scalar import parse_field
from .stabilize import InstanceInvariantViolation, generate_instance, stabilize_matrix_units, stabilize_star

EXIT_PASS, EXIT_INPUT, EXIT_ASSERT, EXIT_INFEASIBLE, EXIT_CONSTRUCTION = 0, 1, 2, 3, 4

DEFAULT_AMBIENT = 2 ** 5 * 3 ** 3 * 5 ** 2 * 7 * 11


class InputError(ValueError):
    pass


def _report(command: str, config: dict, body: dict, ok: bool, started: float) -> dict:
    doc = {"schema": ser.SCHEMA, "kind": "run-report", "command": command, "version": __version__,
           "config": config, "verdict": "pass" if ok else "fail",
           "timing": {"seconds": round(time.perf_counter() - started, 3)}}
    doc.update(body)
    return doc


def _theta(text: str) -> Fraction:
    try:
        th = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"--theta: cannot parse {text!r} as a/b") from exc
    if not 0 < th < 1:
        raise InputError("--theta must lie strictly between 0 and 1")
    return th


def _field(text: str):
    try:
        return parse_field(text)
    except ValueError as exc:
        raise InputError(f"--field: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bounds(args) -> tuple[dict, int]:
    t0 = time.perf_counter()
    f = _field(args.field)
    n = args.ambient or 6
    kp = args.trials if args.kp_trials is None else args.kp_trials
    config = {"trials": args.trials, "kp_trials": kp, "field": f.name, "ambient": n, "seed": args.seed}
    camps = []
    if args.trials:
        if f.positive_definite:
            camps.append(perturbation_campaign(args.trials, n, f, args.seed))
        camps.append(idempotent_correction_campaign(args.trials, n, f, args.seed))
    if kp:
        camps.append(stabilization_campaign(2, 8, kp, f, seed=args.seed))
        camps.append(stabilization_campaign(3, 12, kp, f, seed=args.seed))
    ok = all(c.ok for c in camps)
    doc = _report("bounds", config, {"campaigns": [c.to_json() for c in camps]}, ok, t0)
    return doc, EXIT_PASS if ok else EXIT_ASSERT


def cmd_stabilize(args) -> tuple[dict, int]:
    t0 = time.perf_counter()
    inst = ser.instance_from_json(ser.load(args.instance))
    res = stabilize_star(inst, strict=False) if inst.star else stabilize_matrix_units(inst, strict=False)
    ok = res.audit.ok and res.max_distance < res.bound
    body = {"p": inst.p, "eps": str(inst.eps), "bound": str(res.bound), "max_distance": str(res.max_distance),
            "ratio": str(res.ratio(inst.eps)), "assertions": res.audit.to_json()}
    doc = _report("stabilize", {"instance": inst.meta, "star": inst.star, "field": inst.field.name}, body, ok, t0)
    return doc, EXIT_PASS if ok else EXIT_ASSERT


def cmd_halperin(args) -> tuple[dict, int]:
    t0 = time.perf_counter()
    th = _theta(args.theta)
    f = _field(args.field)
    n = args.ambient or DEFAULT_AMBIENT
    if args.stages < 1:
        raise InputError("--stages must be at least 1")
    config = {"theta": str(th), "stages": args.stages, "ambient": n, "field": f.name, "seed": args.seed,
              "star": args.star}
    chain = chain_build(AmbientFactor(n, f), th, args.stages, seed=args.seed, star=args.star)
    body = {"chain": chain.to_json()}
    ok = chain.audit.ok
    if th == Fraction(1, 2):
        dbl = theta_half_doubling_check(chain)
        body["doubling"] = dbl
        ok = ok and dbl["ok"]
    return _report("halperin", config, body, ok, t0), EXIT_PASS if ok else EXIT_ASSERT


def cmd_star_equiv(args) -> tuple[dict, int]:
    t0 = time.perf_counter()
    p, q = ser.pair_from_json(ser.load(args.pair))
    try:
        verdict = st.decide_star_equivalence(p, q)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    plain = st.plain_equivalence_witness(p, q) is not None
    body = {"equivalent": plain, "star_equivalent": verdict.equivalent,
            "invariants": [i.to_json() for i in verdict.invariants],
            "witness": ser.element_to_json(verdict.witness.w) if verdict.witness else None}
    ok = (not verdict.equivalent) or verdict.witness.check()
    return _report("star-equiv", {"pair": args.pair}, body, ok, t0), EXIT_PASS if ok else EXIT_ASSERT


def cmd_gen(args) -> tuple[dict, int]:
    f = _field(args.field)
    if args.kind == "stabilization":
        n = args.ambient or 4 * args.p
        inst = generate_instance(args.seed, args.p, n, budget=args.budget, field=f, star=args.star,
                                 trial=args.index)
        return ser.instance_to_json(inst), EXIT_PASS
    if args.kind == "projection-pair":
        if not f.positive_definite or f.kind != "qi":
            raise InputError("projection pairs live over qi")
        vectors = {2: (f(1), f(1)), 3: (f(1, 1), f(1))}
        if args.discriminant not in vectors:
            raise InputError("--discriminant must be 2 or 3")
        p = st.projection_onto(vectors[args.discriminant], f)
        q = Element.unit([2], f, 0, 0, 0)
        return ser.pair_to_json(p, q, {"discriminant": args.discriminant}), EXIT_PASS
    raise InputError(f"unknown kind {args.kind!r}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contfactor", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, field="q"):
        sp.add_argument("--field", default=field, help="q, qi or gf:p")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (stdout if omitted)")

    b = sub.add_parser("bounds", help="randomized campaigns over the exact bounds")
    common(b, "qi")
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--kp-trials", type=int, default=None, help="trials for the K(2), K(3) campaigns")
    b.add_argument("--ambient", type=int, default=None, help="matrix size for the bound campaigns (6)")
    b.set_defaults(run=cmd_bounds)

    s = sub.add_parser("stabilize", help="stabilize an instance file")
    s.add_argument("instance")
    s.add_argument("--out", default=None)
    s.set_defaults(run=cmd_stabilize)

    h = sub.add_parser("halperin", help="build and verify a chain of inductive steps")
    common(h)
    h.add_argument("--theta", default="1/3")
    h.add_argument("--stages", type=int, default=2)
    h.add_argument("--ambient", type=int, default=None)
    h.add_argument("--star", action="store_true", help="use the star variant (needs qi)")
    h.set_defaults(run=cmd_halperin)

    e = sub.add_parser("star-equiv", help="decide star equivalence of a projection pair file")
    e.add_argument("pair")
    e.add_argument("--out", default=None)
    e.set_defaults(run=cmd_star_equiv)

    g = sub.add_parser("gen", help="write an instance file")
    common(g)
    g.add_argument("kind", choices=["stabilization", "projection-pair"])
    g.add_argument("--p", type=int, default=2)
    g.add_argument("--ambient", type=int, default=None)
    g.add_argument("--budget", type=int, default=1)
    g.add_argument("--index", type=int, default=0, help="trial index fed to the generator")
    g.add_argument("--star", action="store_true")
    g.add_argument("--discriminant", type=int, default=3)
    g.set_defaults(run=cmd_gen)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    try:
        doc, code = args.run(args)
    except (InputError, ser.SchemaError, InstanceInvariantViolation) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionViolation as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (WindowInfeasible, AmbientTooSmall, StageBudgetExhausted) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConstructionFailure, st.CertificationFailure, st.SearchBudgetExceeded,
            st.FactorizationBudgetExceeded) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    text = ser.write(doc, getattr(args, "out", None))
    if getattr(args, "out", None) in (None, "-"):
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
