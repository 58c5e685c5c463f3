"""Command-line entry point ``emlab``.

Exit codes
----------
0  success
1  verify-integrand found a structural violation, or an unclassified error
2  invalid config or arguments (the message names the field)
3  resource budget exceeded
4  solver failure (the continuation trace path is printed)
5  output directory locked by another run
"""
import argparse
import json
import logging
import os
import sys

from . import config as config_mod
from . import pipeline
from .errors import EmlError, InvalidArgument, ResourceError, SolverFailure, StructuralError
from .integrands import Integrand, verify_structure
from .mesh import annulus_mesh, generate

EXIT_OK, EXIT_OTHER, EXIT_INVALID, EXIT_RESOURCE, EXIT_SOLVER, EXIT_BUSY = 0, 1, 2, 3, 4, 5

log = logging.getLogger("emlab")


def _config_arg(path):
    """A file path, or the name of a bundled config."""
    if os.path.isfile(path):
        return path
    return config_mod.bundled(path)


def _cli_overrides(args):
    out = {}
    if getattr(args, "workers", None) is not None:
        out["workers"] = args.workers
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def _load(args):
    if not args.config:
        raise InvalidArgument("--config is required")
    return config_mod.load(_config_arg(args.config), cli=_cli_overrides(args))


def _out_dir(args, cfg):
    if args.out:
        return args.out
    if cfg.get("output_dir"):
        return cfg["output_dir"]
    return os.path.join("runs", cfg["run_id"])


def cmd_run(args):
    cfg = _load(args)
    man = pipeline.run(cfg, _out_dir(args, cfg))
    print(json.dumps({"status": man["status"], "stages": [(s["name"], s["status"]) for s in man["stages"]]}))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    pipeline.sweep(cfg, out)
    with open(os.path.join(out, "dim_vs_p.csv")) as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_emit_plotdata(args):
    for p in pipeline.emit_plotdata(args.run_dir):
        print(p)
    return EXIT_OK


def cmd_verify_integrand(args):
    if args.config:
        cfg = _load(args)
        icfg = cfg["integrand"]
        n = cfg["cantor"]["n"] if cfg["problem"] == "cantor" else 2
    else:
        if args.p is None:
            raise InvalidArgument("give --config or --p")
        icfg = {"kind": args.kind, "p": args.p, "epsilon_perturb": args.epsilon}
        n = args.n
    f = Integrand.from_config(icfg, validate=False)
    rep = verify_structure(f, samples=args.samples, n=n, seed=args.seed or 0)
    print(json.dumps(rep.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK if rep.passed else EXIT_OTHER


def cmd_gen_mesh(args):
    cfg = _load(args)
    if cfg["problem"] == "annulus":
        a = cfg["annulus"]
        mesh = annulus_mesh(a["r_inner"], a["r_outer"], a["h"], a.get("radii", "geometric"))
    else:
        mesh = generate(pipeline.make_tree(cfg), pipeline.make_policy(cfg))
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    mesh.write(os.path.join(out, "mesh.txt"))
    with open(os.path.join(out, "mesh_summary.json"), "w") as fh:
        json.dump(pipeline._jsonable(mesh.summary()), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(pipeline._jsonable(mesh.summary()), sort_keys=True))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="emlab", description="Elliptic-measure experiments on corner Cantor sets.")
    ap.add_argument("-v", "--verbose", action="store_true", help="progress log on stderr")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="config file or bundled config name")
        if out:
            p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="threads for integrand evaluation")
        p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")

    p = sub.add_parser("run", help="full pipeline for one config")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="entropy dimension against p")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("emit-plotdata", help="CSV series from a finished run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_emit_plotdata)
    p = sub.add_parser("verify-integrand", help="structural checks of an integrand")
    common(p, out=False)
    p.add_argument("--kind", default="power", choices=["power", "perturbed_power", "g_power"])
    p.add_argument("--p", type=float)
    p.add_argument("--epsilon", type=float, default=0.0, help="epsilon_perturb")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--samples", type=int, default=2000)
    p.set_defaults(func=cmd_verify_integrand)
    p = sub.add_parser("gen-mesh", help="write the mesh of a config (debug)")
    common(p)
    p.set_defaults(func=cmd_gen_mesh)
    return ap


def exit_code(exc):
    """Exit code for an error raised by a verb."""
    cause = exc.cause if isinstance(exc, pipeline.StageFailed) else exc
    if isinstance(cause, pipeline.OutputDirBusy):
        return EXIT_BUSY
    if isinstance(cause, InvalidArgument):
        return EXIT_INVALID
    if isinstance(cause, ResourceError):
        return EXIT_RESOURCE
    if isinstance(cause, SolverFailure):
        return EXIT_SOLVER
    if isinstance(cause, StructuralError) and getattr(exc, "stage", "").startswith("solve"):
        return EXIT_SOLVER
    return EXIT_OTHER


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2 ** 64:
        print("error: seed: must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except EmlError as exc:
        code = exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, pipeline.StageFailed):
            print(f"stage: {exc.stage}", file=sys.stderr)
            if exc.trace_path:
                print(f"trace: {exc.trace_path}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
