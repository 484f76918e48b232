"""Command-line interface: ``lotsize {solve,heuristic,simulate,gen,bench,curve}``.

Exit status is 0 on success, 2 for invalid input and 3 when an exact method
exceeds its computation budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace

from .experiment import (
    CURVES,
    METHODS,
    build_policy,
    canonical_method,
    curve_csv,
    emit_curve,
    run_experiment,
    solve_method,
)
from .fileio import InstanceFileError, load_instance, write_atomic
from .sdp import BudgetExceeded, PolicyParams
from .simulate import simulate_policy
from .testset import generate_testset, large_grid, small_grid

EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3
SETS = {"small": small_grid, "large": large_grid}


def _ints(text):
    try:
        return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _load(args):
    inst = load_instance(args.instance)
    if getattr(args, "qmax", None) is not None:
        inst = replace(inst, q_max=args.qmax)
    if getattr(args, "partitions", None) is not None:
        inst = replace(inst, partitions=args.partitions)
    return inst


def _emit(args, text):
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _table(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _policy_rows(policy, etc):
    rows = []
    for t in range(policy.T):
        rows.append((t + 1, policy.s[t],
                     "" if policy.Q is None else policy.Q[t],
                     "" if policy.S is None else policy.S[t], repr(float(etc))))
    return rows


def cmd_solve(args):
    inst = _load(args)
    method = canonical_method(args.method)
    policy, etc = solve_method(inst, method, args.partitions, args.runs, args.seed)
    _emit(args, _table(("period", "s", "Q", "S", "etc"), _policy_rows(policy, etc)))


def cmd_heuristic(args):
    inst = _load(args)
    method = canonical_method(args.method)
    if not method.endswith("-H"):
        raise ValueError("heuristic expects --method sQt-H or sQ-H")
    policy, etc = solve_method(inst, method, args.partitions, args.runs, args.seed)
    _emit(args, _table(("period", "s", "Q", "S", "etc"), _policy_rows(policy, etc)))


def cmd_simulate(args):
    inst = _load(args)
    if args.s is not None:
        if args.Q is None:
            raise ValueError("--s needs --Q")
        variant = "sQ" if len(set(args.Q)) == 1 else "sQt"
        policy = PolicyParams(variant, s=args.s, Q=args.Q)
    else:
        policy = build_policy(inst, args.method, args.partitions)
    report = simulate_policy(inst, policy, args.runs, args.seed, first_order=not args.no_first_order)
    rec = report.record(inst.name, policy.variant)
    _emit(args, _table(tuple(rec), [tuple(rec.values())]))


def cmd_gen(args):
    grid = SETS[args.set]()
    paths = generate_testset(grid, args.out, overwrite=args.force)
    print(f"wrote {len(paths)} instances to {args.out}", file=sys.stderr)


def cmd_bench(args):
    if args.instances:
        cells = []
        for path in args.instances:
            inst = load_instance(path)
            if args.qmax is not None:
                inst = replace(inst, q_max=args.qmax)
            cells.append((inst.name, {"pattern": inst.name}, inst))
    elif args.set:
        cells = list(SETS[args.set]().cells())
        if args.qmax is not None:
            cells = [(c, tags, replace(inst, q_max=args.qmax)) for c, tags, inst in cells]
    else:
        raise ValueError("bench needs --set or instance files")
    methods = args.method or list(METHODS)
    run_experiment(cells, methods, args.out, args.partitions, args.runs, args.seed)
    print(f"results in {args.out}", file=sys.stderr)


def cmd_curve(args):
    inst = _load(args)
    columns, rows = emit_curve(inst, args.kind, t=args.t, x_range=args.x_range, q=args.q,
                               partitions=args.partitions, q_max=args.qmax)
    _emit(args, curve_csv(columns, rows))


def build_parser():
    p = argparse.ArgumentParser(prog="lotsize", description="Stochastic lot sizing policies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, method_default=None):
        sp.add_argument("--method", default=method_default)
        sp.add_argument("--partitions", type=int)
        sp.add_argument("--runs", type=int, default=500_000)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--qmax", type=int)
        sp.add_argument("--out")

    sp = sub.add_parser("solve", help="exact SDP policy")
    sp.add_argument("instance")
    common(sp, "sS-SDP")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("heuristic", help="piecewise-linear heuristic policy")
    sp.add_argument("instance")
    common(sp, "sQt-H")
    sp.set_defaults(func=cmd_heuristic)

    sp = sub.add_parser("simulate", help="Monte Carlo cost of a policy")
    sp.add_argument("instance")
    common(sp, "sQt-SDP")
    sp.add_argument("--s", type=_ints, help="explicit reorder points")
    sp.add_argument("--Q", type=_ints, help="explicit order quantities")
    sp.add_argument("--no-first-order", action="store_true",
                    help="forbid an order in period 1")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("gen", help="write a built-in test set")
    sp.add_argument("--set", choices=sorted(SETS), default="small")
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true", help="overwrite existing files")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("bench", help="run methods over a test set")
    sp.add_argument("instances", nargs="*")
    sp.add_argument("--set", choices=sorted(SETS))
    sp.add_argument("--method", action="append")
    sp.add_argument("--partitions", type=int)
    sp.add_argument("--runs", type=int, default=500_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--qmax", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("curve", help="CSV table behind a figure")
    sp.add_argument("instance")
    sp.add_argument("--kind", choices=CURVES, required=True)
    sp.add_argument("--t", type=int, default=1)
    sp.add_argument("--x-range", type=int, nargs=2, metavar=("LO", "HI"))
    sp.add_argument("--q", type=_ints)
    sp.add_argument("--partitions", type=int)
    sp.add_argument("--qmax", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_curve)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InstanceFileError, ValueError, IndexError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
