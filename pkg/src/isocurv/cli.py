"""Command-line entry point: ``isocurv {solve,probe,certify,compare,check}``.

Exit codes: 0 ok, 1 property failure, 2 solver divergence, 3 input error.
Every run writes ``manifest.json`` next to its outputs; outputs depend only
on the manifest, so reruns are byte-identical.
"""

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks, formats, sphere
from .certificates import alignment_gap, converse_gap, kink_certificate
from .curvature import Kink, from_dict, radius_for_slope
from .errors import (
    ConvergenceError,
    DivergenceError,
    InputError,
    PreconditionError,
    ProbeError,
    SvdConvergenceError,
)
from .linalg import singular_values
from .muon import ModelLoss, compare_one_step, default_step_grid
from .probe import ProbeConfig, build_oracle, probe
from .solver import ModelProblem, homogenization_report, solve

EXIT_OK, EXIT_PROPERTY, EXIT_DIVERGENCE, EXIT_INPUT = 0, 1, 2, 3

log = logging.getLogger("isocurv")


class _Run:
    """Collects inputs, resolved config and outputs for the manifest."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.inputs = {}
        self.config = {}
        self.outputs = []

    def add_input(self, name, path):
        self.inputs[name] = {"path": str(path), "sha256": formats.sha256_file(path)}

    def _target(self, name):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out_dir / name

    def json(self, name, obj):
        formats.write_json(self._target(name), obj)

    def matrix(self, name, a):
        formats.write_matrix_csv(self._target(name), a)

    def text(self, name, text):
        self._target(name).write_text(text)

    def finish(self):
        self.json("manifest.json", {
            "subcommand": self.args.command,
            "inputs": self.inputs,
            "config": self.config,
            "seed": self.config.get("seed", 0),
            "tool_version": __version__,
            "outputs": sorted(self.outputs + ["manifest.json"]),
        })


def _sampler(args, n):
    return sphere.SphereSampler(n, args.samples, args.seed, args.threads)


def _load_problem(run):
    args = run.args
    G = formats.read_matrix_csv(args.gradient)
    run.add_input("gradient", args.gradient)
    spec = formats.read_json(args.curvature)
    run.add_input("curvature", args.curvature)
    H = from_dict(spec)
    run.config.update({
        "curvature": H.to_dict(),
        "seed": args.seed,
        "samples": args.samples,
    })
    return G, H


def cmd_solve(run):
    args = run.args
    G, H = _load_problem(run)
    run.config["tol"] = args.tol
    run.config["acknowledge_nonhomogenizing"] = args.acknowledge_nonhomogenizing
    problem = ModelProblem(
        G, H, _sampler(args, G.shape[1]),
        acknowledge_nonhomogenizing=args.acknowledge_nonhomogenizing, tol=args.tol,
    )
    sol = solve(problem)
    report = homogenization_report(sol.sigma, sol.sigma_star, sol.covariance)
    run.matrix("sigma.csv", sol.sigma)
    run.matrix("sigma_star.csv", sol.sigma_star)
    run.matrix("q_star.csv", sol.q_star)
    run.json("diagnostics.json", {
        "path": sol.path,
        "shape": list(G.shape),
        "iterations": sol.iterations,
        "objective": sol.objective,
        "stationarity_residual": sol.stationarity_residual,
        "residual_bound": sol.residual_bound,
        "sigma": sol.sigma,
        "sigma_star": sol.sigma_star,
        "sigma_star_stderr": sol.sigma_star_stderr(),
        "alignment_gap": alignment_gap(G, sol.q_star),
        "homogenization_report": report.to_dict(),
        "certificate": sol.certificate.to_dict() if sol.certificate else None,
        "extra": sol.extra,
    })
    return EXIT_OK


def cmd_probe(run):
    args = run.args
    oracle_spec = formats.read_json(args.oracle)
    run.add_input("oracle", args.oracle)
    cfg_dict = {}
    if args.config:
        cfg_dict = formats.read_json(args.config)
        run.add_input("config", args.config)
    if args.seed is not None:
        cfg_dict = {**cfg_dict, "seed": args.seed}
    cfg = ProbeConfig.from_dict(cfg_dict)
    run.config.update({"oracle": oracle_spec, "probe": cfg.to_dict(), "seed": cfg.seed})
    try:
        oracle, W, U = build_oracle(oracle_spec, cfg.input_count)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ProbeError):
            raise
        raise InputError(f"malformed oracle spec: {exc}") from exc
    rep = probe(oracle, W, U, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["radius", "mean_remainder_over_r2", "q10", "q50", "q90", "n_samples"])
    for k in range(rep.radii.size):
        row = [rep.radii[k], rep.mean[k], rep.q10[k], rep.q50[k], rep.q90[k]]
        w.writerow([formats.FLOAT_FMT.format(v) for v in row] + [int(rep.n_samples[k])])
    run.text("probe.csv", buf.getvalue())
    summary = rep.summary()
    summary["oracle"] = oracle_spec.get("variant")
    summary["mean_remainder_over_r2_stderr"] = rep.stderr
    if hasattr(oracle, "train_loss"):
        summary["train_loss"] = oracle.train_loss
    run.json("summary.json", summary)
    return EXIT_OK


def _converse_section(G, H, args):
    n = G.shape[1]
    sigma = singular_values(G)
    grid = np.geomspace(args.c_min, args.c_max, args.c_points)
    grid_gap, grid_c = converse_gap(G, H, grid, return_argmin=True)
    # The best single c matches H'(c)/n to the midpoint of the spectrum.
    extra = []
    try:
        c_mid = radius_for_slope(H, n * 0.5 * (sigma[0] + sigma[-1]))
        if c_mid > 0:
            extra = [c_mid]
    except PreconditionError:
        pass
    gap, c_best = converse_gap(G, H, np.append(grid, extra), return_argmin=True)
    return {
        "gap": gap,
        "c_best": c_best,
        "grid_gap": grid_gap,
        "grid_c_best": grid_c,
        "grid": {"min": args.c_min, "max": args.c_max, "points": args.c_points},
    }


def cmd_certify(run):
    args = run.args
    G, H = _load_problem(run)
    run.config["c_grid"] = {"min": args.c_min, "max": args.c_max, "points": args.c_points}
    out = {"curvature": H.to_dict(), "shape": list(G.shape), "unsupported": {}}
    sol = None
    try:
        sol = solve(ModelProblem(G, H, _sampler(args, G.shape[1])))
        out["alignment"] = {"gap": alignment_gap(G, sol.q_star), "path": sol.path}
    except PreconditionError as exc:
        out["alignment"] = None
        out["unsupported"]["alignment"] = str(exc)
    out["kink"] = None
    out["converse"] = None
    if isinstance(H, Kink):
        try:
            cert = sol.certificate if sol is not None and sol.certificate else None
            if cert is None:
                cert = kink_certificate(singular_values(G), H, _sampler(args, G.shape[1]))
            out["kink"] = cert.to_dict()
        except PreconditionError as exc:
            out["unsupported"]["kink"] = str(exc)
    elif H.smooth:
        try:
            out["converse"] = _converse_section(G, H, args)
        except PreconditionError as exc:
            out["unsupported"]["converse"] = str(exc)
    else:
        out["unsupported"]["converse"] = "curvature is not differentiable everywhere"
    run.json("certificate.json", out)
    return EXIT_OK


def cmd_compare(run):
    args = run.args
    G, H = _load_problem(run)
    grid = default_step_grid(args.grid_points, args.grid_min, args.grid_max)
    run.config["step_grid"] = {"min": args.grid_min, "max": args.grid_max, "points": args.grid_points}
    loss = ModelLoss(G, H, _sampler(args, G.shape[1]))
    res = compare_one_step(G, loss, grid=grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule", "gamma", "realized_decrease"])
    for rule, g, d in res.rows():
        w.writerow([rule, formats.FLOAT_FMT.format(g), formats.FLOAT_FMT.format(d)])
    run.text("compare.csv", buf.getvalue())
    run.json("summary.json", {"rules": res.summary(), "shape": list(G.shape)})
    return EXIT_OK


def cmd_check(run):
    args = run.args
    inject = sorted(set(args.inject or ()))
    run.config.update({"seed": args.seed, "sizes": args.sizes, "count": args.count, "inject": inject})
    if args.sizes < 2:
        raise InputError("--sizes must be >= 2")
    try:
        report = checks.run_checks(args.seed, args.sizes, args.count, inject=inject)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    run.json("property_report.json", report)
    for p in report["properties"]:
        if not p["passed"]:
            print(f"property failed: {p['name']} (worst margin {p['worst_margin']:.3e})",
                  file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_PROPERTY


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for all outputs")
    common.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                        help="worker threads for sampling (outputs do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--gradient", required=True, help="gradient matrix CSV")
    mc.add_argument("--curvature", required=True, help="curvature spec JSON")
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--samples", type=_positive_int, default=sphere.DEFAULT_SAMPLES)

    parser = argparse.ArgumentParser(prog="isocurv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, mc], help="solve the curvature model for G")
    p.add_argument("--tol", type=float, default=None,
                   help="projected-gradient tolerance for the sampled solver")
    p.add_argument("--acknowledge-nonhomogenizing", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("probe", parents=[common], help="fit curvature growth from remainders")
    p.add_argument("--oracle", required=True, help="oracle spec JSON")
    p.add_argument("--config", help="probe config JSON")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("certify", parents=[common, mc], help="optimality certificates")
    p.add_argument("--c-min", type=float, default=1e-2)
    p.add_argument("--c-max", type=float, default=1e2)
    p.add_argument("--c-points", type=_positive_int, default=100)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("compare", parents=[common, mc], help="one-step update rule comparison")
    p.add_argument("--grid-min", type=float, default=1e-4)
    p.add_argument("--grid-max", type=float, default=1e1)
    p.add_argument("--grid-points", type=_positive_int, default=25)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", parents=[common], help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=int, default=8, help="largest matrix dimension")
    p.add_argument("--count", type=_positive_int, default=10, help="instances per property")
    p.add_argument("--inject", action="append", metavar="PROPERTY",
                   help="test hook: force the named property to fail")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = _Run(args)
    try:
        code = args.func(run)
    except (DivergenceError, ConvergenceError, SvdConvergenceError) as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (InputError, PreconditionError, ProbeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    run.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
