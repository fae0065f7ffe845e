"""Command-line front end.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage/validation.
"""

import argparse
import json
import sys

import numpy as np

from . import qcf
from .beltrami import mu_from_map, square_to_faces
from .diagnostics import (DEFAULT_BUCKETS, DEFAULT_TAIL_CUT, fold_report,
                          jacobian_beltrami_check)
from .imaging import read_pgm, warp, write_pgm
from .lbs import ConvergenceError, SolverConfig, laplacian_residual, solve_lbs
from .mesh import build_grid_mesh
from .register import RegistrationConfig, register
from .spectral import compress
from .synth import SynthConfig, gen_random_mu, synth_pair


class UsageError(Exception):
    pass


def _faces_for(mu, n=None):
    """Accept a square (N x N) or face-layout field; return (mesh, faces)."""
    rows, cols = mu.shape
    if rows == cols:
        mesh = build_grid_mesh(rows)
        return mesh, square_to_faces(mu, mesh)
    if cols == 2 * rows:
        mesh = build_grid_mesh(rows + 1)
        return mesh, mu
    raise UsageError(f"field of shape {mu.shape} is neither square nor face layout")


def _square_image(path):
    img = read_pgm(path)
    if img.shape[0] != img.shape[1] or img.shape[0] < 2:
        raise UsageError(f"{path}: image must be square (resample to n x n first), got {img.shape}")
    return img


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_gen_mu(args):
    if not 0.0 < args.max_norm < 1.0:
        raise UsageError(f"--max-norm must satisfy 0 < m < 1, got {args.max_norm}")
    if args.size < 2 or not 1 <= args.bandwidth <= args.size:
        raise UsageError("--size must be >= 2 and 1 <= --bandwidth <= --size")
    cfg = SynthConfig(seed=args.seed, size=args.size, max_norm=args.max_norm,
                      bandwidth=args.bandwidth)
    qcf.save_mu(args.output, gen_random_mu(cfg))


def cmd_lbs(args):
    mesh, faces = _faces_for(qcf.load_mu(args.mu))
    qcmap = solve_lbs(mesh, faces, SolverConfig(method=args.solver))
    qcf.save_map(args.output, qcmap)


def cmd_mu_from_map(args):
    qcmap = qcf.load_map(args.map)
    mesh = build_grid_mesh(qcmap.n)
    mu, bad = mu_from_map(mesh, qcmap, return_degenerate=True)
    if bad.size:
        print(f"warning: {bad.size} degenerate faces (sentinel modulus 1)", file=sys.stderr)
    qcf.write(args.output, "mu", qcf.mu_to_array(mu))


def cmd_compress(args):
    mu = qcf.load_mu(args.mu)
    if mu.shape[0] != mu.shape[1]:
        raise UsageError("compress needs a square N x N field")
    if not 1 <= args.keep <= mu.shape[0]:
        raise UsageError(f"--keep must lie in [1, {mu.shape[0]}]")
    qcf.save_mu(args.output, compress(mu, args.keep))


def cmd_warp(args):
    img = _square_image(args.image)
    qcmap = qcf.load_map(args.map)
    if qcmap.n != img.shape[0]:
        raise UsageError(f"map grid {qcmap.n} does not match image side {img.shape[0]}")
    write_pgm(args.output, warp(img, qcmap))


def cmd_diagnose(args):
    qcmap = qcf.load_map(args.map)
    mesh = build_grid_mesh(qcmap.n)
    report = fold_report(mesh, qcmap, args.buckets, args.tail_cut).to_dict()
    report["jacobian_beltrami_error"] = jacobian_beltrami_check(mesh, qcmap)
    if args.mu:
        mu_mesh, faces = _faces_for(qcf.load_mu(args.mu))
        if mu_mesh.n != mesh.n:
            raise UsageError("mu and map grids differ")
        report["laplacian_residual"] = laplacian_residual(mesh, faces, qcmap)
    if args.json:
        _dump(report)
    else:
        for key in ("n_folded", "s_folded", "min_det", "tail_count",
                    "jacobian_beltrami_error", "laplacian_residual"):
            if key in report:
                print(f"{key}: {report[key]}")


def cmd_register(args):
    moving = _square_image(args.moving)
    fixed = _square_image(args.fixed)
    if moving.shape != fixed.shape:
        raise UsageError("moving and fixed images differ in size")
    try:
        cfg = RegistrationConfig(alpha=args.alpha, beta=args.beta, eta=args.eta,
                                 max_iters=args.max_iters, method=args.method,
                                 spectral_keep=args.spectral_keep)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.spectral_keep is not None and not 1 <= args.spectral_keep <= moving.shape[0]:
        raise UsageError(f"--spectral-keep must lie in [1, {moving.shape[0]}]")
    res = register(moving, fixed, build_grid_mesh(moving.shape[0]), cfg)
    p = args.output
    qcf.save_map(f"{p}_map.qcf", res.map)
    qcf.save_mu(f"{p}_mu.qcf", res.mu)
    write_pgm(f"{p}_warped.pgm", warp(moving, res.map))
    _dump(res.trace_dict(), f"{p}_trace.json")
    _dump(res.diagnostics.to_dict(), f"{p}_diagnostics.json")


def cmd_synth_pair(args):
    if not 0.0 < args.max_norm < 1.0:
        raise UsageError(f"--max-norm must satisfy 0 < m < 1, got {args.max_norm}")
    img = _square_image(args.image)
    if not 1 <= args.bandwidth <= img.shape[0]:
        raise UsageError("--bandwidth must not exceed the image side")
    cfg = SynthConfig(seed=args.seed, size=img.shape[0], max_norm=args.max_norm,
                      bandwidth=args.bandwidth)
    moving, qcmap, mu = synth_pair(img, cfg)
    write_pgm(f"{args.output}_moving.pgm", moving)
    qcf.save_map(f"{args.output}_map.qcf", qcmap)
    qcf.save_mu(f"{args.output}_mu.qcf", mu)


def build_parser():
    parser = argparse.ArgumentParser(prog="qcreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-mu", help="random band-limited Beltrami field")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-norm", type=float, default=0.6)
    p.add_argument("--bandwidth", type=int, default=8)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_mu)

    p = sub.add_parser("lbs", help="reconstruct the map of a Beltrami field")
    p.add_argument("--mu", required=True)
    p.add_argument("--solver", choices=("auto", "direct", "cg"), default="auto")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_lbs)

    p = sub.add_parser("mu-from-map", help="face-wise Beltrami coefficient of a map")
    p.add_argument("--map", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_mu_from_map)

    p = sub.add_parser("compress", help="low-frequency truncation of a field")
    p.add_argument("--mu", required=True)
    p.add_argument("--keep", type=int, default=14)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("warp", help="pull an image back through a map")
    p.add_argument("--image", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("diagnose", help="fold statistics of a map")
    p.add_argument("--map", required=True)
    p.add_argument("--mu")
    p.add_argument("--json", action="store_true")
    p.add_argument("--buckets", type=int, default=DEFAULT_BUCKETS)
    p.add_argument("--tail-cut", type=float, default=DEFAULT_TAIL_CUT)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("register", help="register moving onto fixed")
    p.add_argument("--moving", required=True)
    p.add_argument("--fixed", required=True)
    p.add_argument("--alpha", type=float, default=400.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--spectral-keep", type=int)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--method", choices=("gd", "lbfgs"), default="gd")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("synth-pair", help="deform an image by a random LBS map")
    p.add_argument("--image", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-norm", type=float, default=0.6)
    p.add_argument("--bandwidth", type=int, default=8)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth_pair)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (UsageError, qcf.QCFError) as exc:
        print(f"qcreg {args.command}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"qcreg {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ConvergenceError, ArithmeticError) as exc:
        print(f"qcreg {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
