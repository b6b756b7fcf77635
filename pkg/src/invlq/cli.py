"""Command-line front end: ``invlq {solve,synthesize,perturb,reconstruct,experiment,check}``.

Exit codes: 0 success, 2 validation failure, 3 reconstruction or solver
failure, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .autonomous import (
    AutonomousLqProblem,
    BoundaryData,
    lyapunov_residuals,
    optimal_trajectory,
    riccati_residual,
    synthesis_pair,
    validate,
)
from .errors import LqError, ValidationError
from .experiment import (
    ExperimentConfig,
    load_config,
    perturb,
    run_experiment,
    synthesize_bundle,
    write_report,
)
from .inverse import detect_product_structure, identify_and_reconstruct

EXIT_OK, EXIT_VALIDATION, EXIT_RECONSTRUCTION, EXIT_IO = 0, 2, 3, 4


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _uint(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def _out_dir(args):
    return Path(args.out) if args.out else Path(".")


def _require_valid(problem):
    if isinstance(problem, AutonomousLqProblem):
        validate(problem).raise_if_failed()
    else:
        problem.check().raise_if_failed()


def _fmt_matrix(M):
    return np.array2string(np.asarray(M), precision=6, suppress_small=True)


def cmd_solve(args):
    problem = io.load_problem(args.problem)
    _require_valid(problem)
    n = problem.n
    x0 = args.x0 if args.x0 is not None else np.zeros(n)
    if args.x1 is None:
        raise ValidationError("--x1 is required")
    T = args.t_max if args.t_max is not None else 1.0
    bd = BoundaryData(0.0, T, x0, args.x1)
    if bd.x0.size != n:
        raise ValidationError(f"boundary vectors have size {bd.x0.size}, expected {n}")
    grid = np.linspace(0.0, T, (args.grid_steps or 100) + 1)
    if isinstance(problem, AutonomousLqProblem):
        pair = synthesis_pair(problem)
        traj = optimal_trajectory(pair, problem, bd, grid)
        r1, r2 = lyapunov_residuals(pair, problem)
        print(f"Riccati residual  P+: {riccati_residual(problem, pair.P_plus):.2e}  "
              f"P-: {riccati_residual(problem, pair.P_minus):.2e}")
        print(f"Lyapunov residuals: {r1:.2e}, {r2:.2e}")
        print(f"stability margin  A+: {-np.max(np.linalg.eigvals(pair.A_plus).real):.6g}  "
              f"A-: {np.min(np.linalg.eigvals(pair.A_minus).real):.6g}")
    else:
        from .timevarying import pvw_solve

        traj = pvw_solve(problem, bd, grid)
    path = _out_dir(args) / "trajectory.csv"
    io.write_trajectory(path, traj)
    print(f"endpoint error: {np.max(np.abs(traj.states[-1] - bd.x1)):.2e}")
    print(f"wrote {path}")
    return EXIT_OK


def _config(args, required=False):
    overrides = {"seed": args.seed, "norm": getattr(args, "norm", None)}
    if getattr(args, "grid_steps", None):
        overrides["N"] = args.grid_steps
    if getattr(args, "t_max", None):
        overrides["T"] = args.t_max
    if getattr(args, "amplitude", None) is not None:
        overrides["amplitudes"] = (args.amplitude,)
    if getattr(args, "refine", False):
        overrides["refine"] = True
    if args.config:
        return load_config(args.config, **overrides)
    if required:
        raise ValidationError("--config is required")
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _problem_for(args, config):
    path = args.problem or config.problem_path
    if not path:
        raise ValidationError("no problem given (--problem or problem_path in the config)")
    problem = io.load_problem(path)
    if not isinstance(problem, AutonomousLqProblem):
        raise ValidationError("this command needs a constant-coefficient problem")
    return problem


def cmd_synthesize(args):
    config = _config(args)
    problem = _problem_for(args, config)
    _require_valid(problem)
    bundle = synthesize_bundle(problem, config)
    path = _out_dir(args) / "bundle.csv"
    io.write_bundle(path, bundle)
    print(f"wrote {len(bundle.trajectories)} trajectories x {config.N + 1} samples to {path}")
    return EXIT_OK


def cmd_perturb(args):
    bundle = io.read_bundle(args.bundle)
    if args.amplitude is None or args.amplitude < 0:
        raise ValidationError("--amplitude must be given and nonnegative")
    noisy = perturb(bundle, args.amplitude, args.seed or 0, args.sample)
    path = _out_dir(args) / "bundle.csv"
    io.write_bundle(path, noisy)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reconstruct(args):
    problem = io.load_problem(args.problem)
    if not isinstance(problem, AutonomousLqProblem):
        raise ValidationError("reconstruction needs a constant-coefficient problem")
    bundle = io.read_bundle(args.bundle)
    rec = identify_and_reconstruct(bundle, problem.A, problem.B, refine_fit=args.refine,
                                   lag=args.lag)
    d = rec.diagnostics
    product = d.get("product")
    out = {
        "K": rec.cost.K.tolist(),
        "R": rec.cost.R.tolist(),
        "A_plus": rec.synthesis.A_plus.tolist(),
        "A_minus": rec.synthesis.A_minus.tolist(),
        "Delta": rec.synthesis.Delta.tolist(),
        "fit_residual": rec.synthesis.fit_residual,
        "delta_kernel_dim": d.get("delta_kernel_dim"),
        "linear_failure": d.get("linear_failure"),
        "refine_rms_residual": d.get("refine_rms_residual"),
        "product": None if product is None else {
            "status": product.status, "blocks": product.blocks, "detail": product.detail,
        },
    }
    path = _out_dir(args) / "cost.json"
    io.write_json(path, out)
    print("K =\n" + _fmt_matrix(rec.cost.K))
    print("R =\n" + _fmt_matrix(rec.cost.R))
    if product is not None:
        print(f"product structure: {product.status}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_experiment(args):
    config = _config(args, required=True)
    problem = _problem_for(args, config)
    _require_valid(problem)
    out = Path(args.out or config.out_dir or ".")
    report = run_experiment(problem, config)
    write_report(report, out)
    print(f"{'alpha':>6} {'L':>4} {'Err_K':>10} {'Err_R':>10}")
    for s in report.summaries:
        print(f"{s.amplitude:6.3f} {s.successes:4d} {s.err_K:10.4g} {s.err_R:10.4g}")
    if not report.complete:
        print("interrupted: partial report written", file=sys.stderr)
        return 130
    print(f"wrote report to {out}")
    return EXIT_OK


def cmd_check(args):
    problem = io.load_problem(args.problem)
    if not isinstance(problem, AutonomousLqProblem):
        report = problem.check()
        for line in report.lines():
            print(line)
        return EXIT_OK if report.ok else EXIT_VALIDATION
    report = validate(problem)
    for line in report.lines():
        print(line)
    if not report.ok:
        return EXIT_VALIDATION
    pair = synthesis_pair(problem)
    print("spec(A+) =", _fmt_matrix(np.sort_complex(np.linalg.eigvals(pair.A_plus))))
    print("spec(A-) =", _fmt_matrix(np.sort_complex(np.linalg.eigvals(pair.A_minus))))
    product = detect_product_structure(pair.A_plus, pair.A_minus)
    print(f"product structure: {product.status}", end="")
    print(f" blocks={product.blocks}" if product.has_product else "")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="invlq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, problem=True):
        if problem:
            p.add_argument("--problem", help="problem JSON file")
        p.add_argument("--out", help="output directory (default: current directory)")

    p = sub.add_parser("solve", help="optimal trajectory for fixed endpoints")
    common(p)
    p.add_argument("--x0", type=_vector, help="initial state, comma-separated (default 0)")
    p.add_argument("--x1", type=_vector, help="final state, comma-separated")
    p.add_argument("--t-max", type=float, help="final time (default 1)")
    p.add_argument("--grid-steps", type=_uint, help="output grid intervals (default 100)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("synthesize", help="exact optimal-trajectory bundle")
    common(p)
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=_uint)
    p.add_argument("--grid-steps", type=_uint, help="sampling intervals N")
    p.add_argument("--t-max", type=float, help="final time T")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("perturb", help="add seeded Gaussian noise to a bundle")
    common(p, problem=False)
    p.add_argument("bundle")
    p.add_argument("--amplitude", type=float, required=True)
    p.add_argument("--seed", type=_uint, default=0)
    p.add_argument("--sample", type=_uint, default=0, help="Monte-Carlo sample index")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("reconstruct", help="recover the canonical cost from a bundle")
    common(p)
    p.add_argument("bundle")
    p.add_argument("--refine", action="store_true", help="nonlinear least-squares refinement")
    p.add_argument("--lag", type=_uint, default=1,
                   help="sample offset inside each lifted pair (default 1)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("experiment", help="Monte-Carlo noise experiment")
    common(p)
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=_uint)
    p.add_argument("--amplitude", type=float, help="run a single amplitude")
    p.add_argument("--norm", choices=("spectral", "frobenius"))
    p.add_argument("--grid-steps", type=_uint, help="sampling intervals N")
    p.add_argument("--t-max", type=float, help="final time T")
    p.add_argument("--refine", action="store_true", help="force refinement on")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check", help="assumption report and product-structure verdict")
    p.add_argument("--problem", required=True, help="problem JSON file")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "problem", "") is None and args.command in ("solve", "reconstruct"):
        print("error: --problem is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except io.FileFormatError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LqError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_RECONSTRUCTION


if __name__ == "__main__":
    sys.exit(main())
