"""Command-line front end: gradient checks, method comparisons, benchmarks.

Subcommands
    list       enumerate registry problems
    gradcheck  run one method against the finite-difference oracle
    compare    run several methods and report pairwise deviations
    bench      scaling study over input dimensions (override-capable problems)

Exit codes: 0 pass, 1 numeric failure, 2 usage error, 3 solver failure.

Reported gradients are the full Jacobian of the summarized solution map,
flattened row-major, which keeps every report deterministic; ``--seed``
feeds the PRNG (numpy ``default_rng``) that instantiates randomized
problems such as ode-linear-nd.
"""

import argparse
import json
import statistics
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ode, registry, runner
from .errors import ImplicitAdError, UnknownProblemError

EXIT_PASS = 0
EXIT_NUMERIC = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


@dataclass
class RunReport:
    problem: str
    method: str
    x: list
    value: list = field(default_factory=list)
    gradient: list = field(default_factory=list)
    fd_gradient: list = None
    max_rel_err: float = None
    solver_iterations: int = 0
    wall_time_ns: int = 0
    status: str = "ok"
    message: str = ""


def _floats(vec):
    return [float(v) for v in np.asarray(vec, dtype=float).ravel()]


def _parse_x(text, problem):
    if text is None:
        return problem.default_x.copy()
    try:
        vals = np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise argparse.ArgumentTypeError(f"could not parse --x value {text!r}")
    return vals


def _print_table(rows, header, out):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    print(line, file=out)
    print("-" * len(line), file=out)
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)), file=out)


def _emit_report(report, fmt, out):
    if fmt == "json":
        print(json.dumps(asdict(report)), file=out)
    elif fmt == "csv":
        d = asdict(report)
        print(",".join(d.keys()), file=out)
        print(",".join("" if v is None else
                       (";".join(str(u) for u in v) if isinstance(v, list) else str(v))
                       for v in d.values()), file=out)
    else:
        rows = [[k, v] for k, v in asdict(report).items()]
        _print_table(rows, ["field", "value"], out)


def cmd_list(args, out):
    entries = registry.enumerate_problems()
    if args.kind:
        entries = [e for e in entries if e[1] == args.kind]
    if args.format == "json":
        print(json.dumps([{"name": n, "kind": k, "description": d}
                          for n, k, d in entries]), file=out)
    elif args.format == "csv":
        print("name,kind,description", file=out)
        for n, k, d in entries:
            print(f"{n},{k},{d}", file=out)
    else:
        _print_table([list(e) for e in entries],
                     ["name", "kind", "description"], out)
    return EXIT_PASS


def _load_problem(args, out):
    try:
        problem = registry.lookup(args.problem, seed=args.seed)
    except UnknownProblemError as exc:
        print(f"error: {exc.args[0]}", file=out)
        return None
    return problem


def _validated_x(args, problem, out):
    x = _parse_x(args.x, problem)
    if x.shape[0] != problem.input_dim:
        print(f"error: --x has length {x.shape[0]}, problem "
              f"{problem.name!r} expects {problem.input_dim}", file=out)
        return None
    return x


def cmd_gradcheck(args, out):
    problem = _load_problem(args, out)
    if problem is None:
        return EXIT_USAGE
    if args.method not in runner.methods_for(problem):
        print(f"error: method {args.method!r} is not available for kind "
              f"{problem.kind!r}; choose from {runner.methods_for(problem)}",
              file=out)
        return EXIT_USAGE
    x = _validated_x(args, problem, out)
    if x is None:
        return EXIT_USAGE
    report = RunReport(problem=problem.name, method=args.method, x=_floats(x))
    start = time.perf_counter_ns()
    code = EXIT_PASS
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            run = runner.run_method(problem, args.method, x, fd_step=args.h)
            if args.method == "fd":
                fd_jac = run.jacobian
            else:
                fd_jac = runner.fd_jacobian(problem, x, args.h)
        report.value = _floats(run.value)
        report.gradient = _floats(run.jacobian.ravel())
        report.fd_gradient = _floats(fd_jac.ravel())
        report.solver_iterations = run.iterations
        from .fd import max_relative_error
        report.max_rel_err = max_relative_error(report.gradient, report.fd_gradient)
        threshold = args.tol if args.tol is not None else runner.fd_threshold(problem)
        if caught:
            report.status = "warning"
            report.message = "; ".join(str(w.message) for w in caught)
        if report.max_rel_err > threshold:
            code = EXIT_NUMERIC
    except ImplicitAdError as exc:
        report.status = "error"
        report.message = str(exc)
        code = EXIT_SOLVER
    report.wall_time_ns = time.perf_counter_ns() - start
    _emit_report(report, args.format, out)
    return code


def cmd_compare(args, out):
    problem = _load_problem(args, out)
    if problem is None:
        return EXIT_USAGE
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        print("error: compare needs at least two methods", file=out)
        return EXIT_USAGE
    for m in methods:
        if m not in runner.methods_for(problem):
            print(f"error: method {m!r} is not available for kind "
                  f"{problem.kind!r}", file=out)
            return EXIT_USAGE
    x = _validated_x(args, problem, out)
    if x is None:
        return EXIT_USAGE
    reports = []
    runs = {}
    for m in methods:
        report = RunReport(problem=problem.name, method=m, x=_floats(x))
        start = time.perf_counter_ns()
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                run = runner.run_method(problem, m, x, fd_step=args.h)
            report.value = _floats(run.value)
            report.gradient = _floats(run.jacobian.ravel())
            report.solver_iterations = run.iterations
            if caught:
                report.status = "warning"
                report.message = "; ".join(str(w.message) for w in caught)
            runs[m] = run
        except ImplicitAdError as exc:
            report.status = "error"
            report.message = str(exc)
        report.wall_time_ns = time.perf_counter_ns() - start
        reports.append(report)
    if len(runs) < len(methods):
        _emit_compare(reports, [], None, args.format, out)
        return EXIT_SOLVER
    deviations = []
    all_ok = True
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            dev = float(np.max(np.abs(runs[a].jacobian - runs[b].jacobian)))
            tol = (args.tol if args.tol is not None
                   else runner.pair_tolerance(problem.kind, a, b))
            ok = dev <= tol
            all_ok = all_ok and ok
            deviations.append({"method_a": a, "method_b": b, "deviation": dev,
                               "tolerance": tol, "passed": ok})
    bridge = None
    if problem.kind == registry.DIFFERENCE and {"ift-reverse", "adjoint"} <= set(methods):
        bridge = runner.bridge_gap(problem, x)
        all_ok = all_ok and bridge <= 1e-12
    _emit_compare(reports, deviations, bridge, args.format, out)
    return EXIT_PASS if all_ok else EXIT_NUMERIC


def _emit_compare(reports, deviations, bridge, fmt, out):
    if fmt == "json":
        payload = {"reports": [asdict(r) for r in reports],
                   "deviations": deviations, "bridge_gap": bridge}
        print(json.dumps(payload), file=out)
    elif fmt == "csv":
        print("method_a,method_b,deviation,tolerance,passed", file=out)
        for d in deviations:
            print(f"{d['method_a']},{d['method_b']},{d['deviation']!r},"
                  f"{d['tolerance']!r},{d['passed']}", file=out)
    else:
        rows = [[r.method, r.status,
                 " ".join(f"{g:.6g}" for g in r.gradient), r.message]
                for r in reports]
        _print_table(rows, ["method", "status", "gradient", "message"], out)
        if deviations:
            rows = [[d["method_a"], d["method_b"], f"{d['deviation']:.3e}",
                     f"{d['tolerance']:.1e}", "pass" if d["passed"] else "FAIL"]
                    for d in deviations]
            _print_table(rows, ["method a", "method b", "deviation",
                                "tolerance", "result"], out)
        if bridge is not None:
            print(f"multiplier bridge gap: {bridge:.3e}", file=out)


def _bench_gradient(problem, method, x, alpha):
    sys_ = problem.system
    cfg = problem.integrator
    if method == "adjoint":
        traj = ode.integrate(sys_, x, cfg)
        return ode.adjoint_reverse(sys_, x, traj, alpha, cfg)
    if method == "forward-sens":
        s = ode.forward_sensitivity(sys_, x, cfg)
        return s.T @ alpha
    if method == "trace":
        tcfg = runner._trace_config(problem)
        return ode.trace_reverse_ode(sys_, x, tcfg, alpha).gradient
    if method == "fd":
        return runner.fd_jacobian(problem, x).T @ alpha
    raise ImplicitAdError(f"bench does not support method {method!r}")


def cmd_bench(args, out):
    if args.problem not in registry.SUPPORTS_OVERRIDES:
        print(f"error: problem {args.problem!r} does not support dimension "
              f"overrides; choose from {sorted(registry.SUPPORTS_OVERRIDES)}",
              file=out)
        return EXIT_USAGE
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        input_dims = [int(v) for v in args.input_dim.split(",") if v.strip()]
    except ValueError:
        print(f"error: could not parse --input-dim {args.input_dim!r}", file=out)
        return EXIT_USAGE
    if not methods or not input_dims:
        print("error: bench needs at least one method and one input dimension",
              file=out)
        return EXIT_USAGE
    timings = {m: {} for m in methods}
    try:
        for m_dim in input_dims:
            problem = registry.lookup(args.problem, state_dim=args.state_dim,
                                      input_dim=m_dim, seed=args.seed)
            for method in methods:
                if method not in runner.methods_for(problem):
                    print(f"error: method {method!r} is not available for kind "
                          f"{problem.kind!r}", file=out)
                    return EXIT_USAGE
                x = problem.default_x.copy()
                alpha = np.ones(problem.summary_dim)
                samples = []
                for _ in range(args.reps):
                    start = time.perf_counter_ns()
                    _bench_gradient(problem, method, x, alpha)
                    samples.append(time.perf_counter_ns() - start)
                timings[method][m_dim] = int(statistics.median(samples))
    except ImplicitAdError as exc:
        print(f"error: {exc}", file=out)
        return EXIT_SOLVER
    lo, hi = min(input_dims), max(input_dims)
    rows = []
    for method in methods:
        ratio = timings[method][hi] / timings[method][lo]
        for m_dim in input_dims:
            rows.append({"method": method, "input_dim": m_dim,
                         "median_ns": timings[method][m_dim],
                         "growth_ratio": ratio})
    if args.format == "json":
        print(json.dumps(rows), file=out)
    elif args.format == "csv":
        print("method,input_dim,median_ns,growth_ratio", file=out)
        for r in rows:
            print(f"{r['method']},{r['input_dim']},{r['median_ns']},"
                  f"{r['growth_ratio']!r}", file=out)
    else:
        _print_table([[r["method"], r["input_dim"], r["median_ns"],
                       f"{r['growth_ratio']:.2f}"] for r in rows],
                     ["method", "input_dim", "median_ns", "growth_ratio"], out)
    return EXIT_PASS


def build_parser():
    parser = argparse.ArgumentParser(
        prog="implicitad",
        description="derivative checks and comparisons for implicit-function problems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("table", "json", "csv"),
                       default="table")
        p.add_argument("--seed", type=int, default=0,
                       help="PRNG seed for randomized problem instances")

    p_list = sub.add_parser("list", help="list registry problems")
    p_list.add_argument("--kind", default=None)
    common(p_list)

    p_grad = sub.add_parser("gradcheck",
                            help="check one method against finite differences")
    p_grad.add_argument("--problem", required=True)
    p_grad.add_argument("--method", required=True)
    p_grad.add_argument("--x", default=None, help="comma-separated input values")
    p_grad.add_argument("--h", type=float, default=None,
                        help="finite-difference base step")
    p_grad.add_argument("--tol", type=float, default=None,
                        help="pass/fail threshold on max_rel_err")
    common(p_grad)

    p_cmp = sub.add_parser("compare", help="pairwise agreement of methods")
    p_cmp.add_argument("--problem", required=True)
    p_cmp.add_argument("--methods", required=True,
                       help="comma-separated method names (at least two)")
    p_cmp.add_argument("--x", default=None)
    p_cmp.add_argument("--h", type=float, default=None)
    p_cmp.add_argument("--tol", type=float, default=None,
                       help="override for every pairwise tolerance")
    common(p_cmp)

    p_bench = sub.add_parser("bench", help="scaling benchmark over input dims")
    p_bench.add_argument("--problem", required=True)
    p_bench.add_argument("--methods", default="adjoint,forward-sens")
    p_bench.add_argument("--state-dim", type=int, default=10)
    p_bench.add_argument("--input-dim", default="1,10,100",
                         help="comma-separated input dimensions")
    p_bench.add_argument("--reps", type=int, default=3)
    common(p_bench)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "list":
            return cmd_list(args, out)
        if args.command == "gradcheck":
            return cmd_gradcheck(args, out)
        if args.command == "compare":
            return cmd_compare(args, out)
        return cmd_bench(args, out)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=out)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
