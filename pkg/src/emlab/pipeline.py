"""Experiment orchestration: tree -> mesh -> solve -> measure -> analysis.

Every run owns one output directory, guarded by an exclusive lockfile.
Each stage is timed and recorded in ``manifest.json`` together with the
SHA-256 digest of every file written.  Output files carry no timestamps or
timings, so identical configs reproduce identical digests at a fixed
worker count; those live in the manifest only.
"""
import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import config as config_mod
from .analysis import dimension_vs_p, entropy_dimension, stopping_content, subsolution_test
from .cantor import CantorSpec, build
from .errors import EmlError, InvalidArgument
from .integrands import Integrand
from .measure import doubling_scan, extract, smooth_density_check
from .mesh import RefinementPolicy, annulus_mesh, generate
from .solver import SolverOptions, solve

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOCKFILE = ".lock"
HIST_BINS = np.arange(-16.0, 0.5, 0.5)


class OutputDirBusy(EmlError):
    """Another run holds the lock on the output directory."""


class StageFailed(EmlError):
    """Wraps the error of a failed stage; ``stage`` names it."""

    def __init__(self, stage, cause, trace_path=None):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace_path = trace_path


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


class RunContext:
    """Output directory, lock, stage log and file inventory of one run."""

    def __init__(self, out_dir, cfg):
        self.out = os.path.abspath(out_dir)
        self.cfg = cfg
        self.stages = []
        self.outputs = {}
        self.started = None
        self._lock = None

    def __enter__(self):
        os.makedirs(self.out, exist_ok=True)
        lock = os.path.join(self.out, LOCKFILE)
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputDirBusy(f"{self.out} is locked by another run (remove {lock} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        self._lock = lock
        self.started = _now()
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "ok" if exc is None else "failed"
        self.write_manifest(status)
        if self._lock and os.path.exists(self._lock):
            os.remove(self._lock)
        return False

    def path(self, name):
        p = os.path.join(self.out, name)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def register(self, name):
        self.outputs[name] = sha256_file(self.path(name))

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
            fh.write("\n")
        self.register(name)

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)
        self.register(name)

    @contextmanager
    def stage(self, name):
        rec = {"name": name, "status": "running", "wall": None}
        self.stages.append(rec)
        log.info("stage %s: start", name)
        t0 = time.perf_counter()
        try:
            yield rec
        except Exception as exc:
            rec["status"] = "failed"
            rec["error"] = f"{type(exc).__name__}: {exc}"
            rec["wall"] = time.perf_counter() - t0
            trace = getattr(exc, "trace", None)
            tpath = None
            if trace is not None:
                self.write_json("trace.json", trace)
                tpath = self.path("trace.json")
            log.error("stage %s failed: %s", name, rec["error"])
            raise StageFailed(name, exc, trace_path=tpath) from exc
        if rec["status"] == "running":
            rec["status"] = "ok"
        rec["wall"] = time.perf_counter() - t0
        log.info("stage %s: %s in %.2fs", name, rec["status"], rec["wall"])

    def manifest(self, status):
        return {"config_hash": config_mod.config_hash(self.cfg), "version": __version__,
                "run_id": self.cfg.get("run_id"), "started": self.started, "finished": _now(),
                "status": status, "stages": self.stages,
                "outputs": [{"path": k, "sha256": v, "bytes": os.path.getsize(self.path(k))}
                            for k, v in sorted(self.outputs.items())]}

    def write_manifest(self, status):
        with open(os.path.join(self.out, MANIFEST), "w") as fh:
            json.dump(_jsonable(self.manifest(status)), fh, sort_keys=True, indent=2)
            fh.write("\n")


# -- building blocks ---------------------------------------------------------

def make_integrand(cfg, p=None):
    icfg = dict(cfg["integrand"])
    if p is not None:
        icfg["p"] = float(p)
        if icfg.get("c_star") is not None:
            icfg["c_star"] = None
    return Integrand.from_config(icfg)


def make_tree(cfg):
    return build(CantorSpec.from_config(cfg["cantor"]))


def make_policy(cfg, level=None):
    mcfg = dict(cfg["mesh"])
    mcfg.update(level or {})
    return RefinementPolicy.from_config(mcfg)


def make_options(cfg):
    scfg = dict(cfg["solver"])
    scfg["workers"] = cfg["workers"]
    return SolverOptions.from_config(scfg)


def _solution_record(sol):
    rec = sol.summary()
    rec.pop("wall_time", None)
    return rec


def _trace_record(sol):
    return [{k: v for k, v in row.items()} for row in sol.trace]


def _dimension_stage(ctx, acfg, mass, prefix=""):
    m = mass.tree.m
    window = tuple(acfg["window"]) if acfg["window"] is not None else None
    rep = entropy_dimension(mass, window=window, mass_floor_rel=acfg["mass_floor"])
    floor_gen = m if acfg["floor_gen"] is None else int(acfg["floor_gen"])
    table = stopping_content(mass, acfg["M"], floor_gen, deltas=acfg["deltas"])
    rep.content = table.to_dict()
    rep.meta["exact_dimensionality"] = "assumed, not verified"
    ctx.write_json(prefix + "dimension.json", rep.to_dict())
    write_entropy_curve(ctx, prefix + "entropy_curve.csv", rep)
    return rep


def write_entropy_curve(ctx, name, rep):
    rows = [["k", "L_k", "S_k"]]
    for k, (L, S) in enumerate(zip(rep.L, rep.S)):
        if k == 0:
            continue
        rows.append([k, repr(float(L)), repr(float(S))])
    ctx.write_text(name, _csv(rows))


def _csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def mass_histogram_rows(levels):
    """Counts of log10 masses per generation over fixed half-decade bins."""
    rows = [["k", "bin_lo", "bin_hi", "count"]]
    for k, lv in enumerate(levels):
        lv = np.asarray(lv, dtype=float)
        pos = lv[lv > 0]
        counts, _ = np.histogram(np.log10(pos), bins=HIST_BINS) if len(pos) else (np.zeros(len(HIST_BINS) - 1, int), None)
        for lo, hi, c in zip(HIST_BINS[:-1], HIST_BINS[1:], counts):
            rows.append([k, repr(float(lo)), repr(float(hi)), int(c)])
        rows.append([k, "zero", "zero", int(np.sum(lv <= 0))])
    return rows


# -- verbs ---------------------------------------------------------------------

def run(cfg, out_dir):
    """Full pipeline for one config; returns the manifest dict."""
    with RunContext(out_dir, cfg) as ctx:
        ctx.write_json("config.resolved.json", cfg)
        with ctx.stage("integrand"):
            f = make_integrand(cfg)
        if cfg["problem"] == "annulus":
            _run_annulus(ctx, cfg, f)
        else:
            _run_cantor(ctx, cfg, f)
    return ctx.manifest("ok")


def _solve_stage(ctx, cfg, mesh, f):
    with ctx.stage("solve") as rec:
        sol = solve(mesh, f, opts=make_options(cfg))
        rec["status"] = "converged" if sol.converged else "not_converged"
        rec["residual"] = sol.residual
        ctx.write_json("solution.json", _solution_record(sol))
        ctx.write_json("trace.json", _trace_record(sol))
    return sol


def _subsolution_stage(ctx, cfg, sol, f):
    scfg = cfg["analysis"]["subsolution"]
    if not scfg["enabled"] or f.p < sol.mesh.n:
        return None
    with ctx.stage("subsolution") as rec:
        rep = subsolution_test(sol, f, trials=scfg["trials"], seed=cfg["seed"], tol_rel=scfg["tol_rel"])
        rec["status"] = "passed" if rep.passed else "sign_violation"
        ctx.write_json("subsolution.json", rep.to_dict())
    return rep


def _run_cantor(ctx, cfg, f):
    with ctx.stage("tree"):
        tree = make_tree(cfg)
        tree.write_jsonl(ctx.path("tree.jsonl"))
        ctx.register("tree.jsonl")
    with ctx.stage("mesh"):
        mesh = generate(tree, make_policy(cfg))
        ctx.write_json("mesh_summary.json", mesh.summary())
    sol = _solve_stage(ctx, cfg, mesh, f)
    with ctx.stage("measure"):
        mass = extract(sol, f, tree)
        mass.write_jsonl(ctx.path("masses.jsonl"))
        ctx.register("masses.jsonl")
        mass.write_csv_summary(ctx.path("masses_summary.csv"))
        ctx.register("masses_summary.csv")
        ctx.write_json("measure.json", mass.summary())
    with ctx.stage("analysis"):
        acfg = cfg["analysis"]
        _dimension_stage(ctx, acfg, mass)
        ctx.write_json("doubling.json", doubling_scan(mass, cap=acfg["doubling_cap"]).to_dict())
    _subsolution_stage(ctx, cfg, sol, f)


def annulus_total_oracle(f, r, R):
    """Closed-form total inner flux of the radial p-harmonic profile, n=2."""
    p = f.p
    if f.kind != "power":
        return None
    if p == 2.0:
        return 4.0 * math.pi / math.log(R / r)
    k = (p - 2.0) / (p - 1.0)
    # u = (rho^k - r^k)/(R^k - r^k); flux p |u'|^(p-1) over the circle
    c = abs(k / (R ** k - r ** k))
    return p * 2.0 * math.pi * c ** (p - 1.0)


def _run_annulus(ctx, cfg, f):
    a = cfg["annulus"]
    with ctx.stage("mesh"):
        mesh = annulus_mesh(a["r_inner"], a["r_outer"], a["h"], a.get("radii", "geometric"))
        ctx.write_json("mesh_summary.json", mesh.summary())
    sol = _solve_stage(ctx, cfg, mesh, f)
    with ctx.stage("measure"):
        mass = extract(sol, f, None)
        gap, detail = smooth_density_check(sol, f, arcs=cfg["analysis"]["arcs"])
        oracle = annulus_total_oracle(f, a["r_inner"], a["r_outer"])
        rec = {**mass.summary(), "density_gap": gap, "arc_weak": detail["weak"],
               "arc_density": detail["density"], "oracle_total": oracle,
               "oracle_relative_error": None if oracle is None else abs(mass.total - oracle) / oracle}
        ctx.write_json("measure.json", rec)
    _subsolution_stage(ctx, cfg, sol, f)


def sweep(cfg, out_dir):
    """Entropy dimension for every p in the sweep list and every mesh level."""
    scfg = cfg["sweep"]
    if not scfg["p_list"]:
        raise InvalidArgument("sweep.p_list is empty")
    if cfg["problem"] != "cantor":
        raise InvalidArgument("problem: a sweep needs the cantor problem")
    with RunContext(out_dir, cfg) as ctx:
        ctx.write_json("config.resolved.json", cfg)
        with ctx.stage("tree"):
            tree = make_tree(cfg)
            tree.write_jsonl(ctx.path("tree.jsonl"))
            ctx.register("tree.jsonl")
        levels = scfg["levels"] or [{}]
        meshes = {}
        results = {}

        def runner(p, li):
            if li not in meshes:
                with ctx.stage(f"mesh[{li}]"):
                    meshes[li] = generate(tree, make_policy(cfg, levels[li]))
                    ctx.write_json(f"level{li}/mesh_summary.json", meshes[li].summary())
            tag = f"p{p!r}/level{li}/"
            f = make_integrand(cfg, p)
            with ctx.stage(f"solve[p={p!r},level={li}]") as rec:
                sol = solve(meshes[li], f, opts=make_options(cfg))
                rec["status"] = "converged" if sol.converged else "not_converged"
                ctx.write_json(tag + "solution.json", _solution_record(sol))
            with ctx.stage(f"measure[p={p!r},level={li}]"):
                mass = extract(sol, f, tree)
                mass.write_csv_summary(ctx.path(tag + "masses_summary.csv"))
                ctx.register(tag + "masses_summary.csv")
                mass.write_jsonl(ctx.path(tag + "masses.jsonl"))
                ctx.register(tag + "masses.jsonl")
            with ctx.stage(f"analysis[p={p!r},level={li}]"):
                rep = _dimension_stage(ctx, cfg["analysis"], mass, prefix=tag)
            results[(p, li)] = rep
            return rep

        with ctx.stage("dimension_vs_p"):
            table = dimension_vs_p([float(p) for p in scfg["p_list"]], runner,
                                   levels=list(range(len(levels))), n=tree.n, margin=scfg["margin"])
            ctx.write_text("dim_vs_p.csv", table.to_csv())
            ctx.write_json("sweep.json", table.to_dict())
    return ctx.manifest("ok")


def emit_plotdata(run_dir):
    """Plain CSV series for external plotting from a finished run or sweep."""
    run_dir = os.path.abspath(run_dir)
    cfg_path = os.path.join(run_dir, "config.resolved.json")
    if not os.path.isfile(cfg_path):
        raise InvalidArgument(f"{run_dir}: no config.resolved.json, not a run directory")
    out = os.path.join(run_dir, "plotdata")
    os.makedirs(out, exist_ok=True)
    written = []

    def put(name, rows):
        p = os.path.join(out, name)
        with open(p, "w", newline="") as fh:
            fh.write(_csv(rows))
        written.append(p)

    dims = []
    for root, _, files in os.walk(run_dir):
        if os.path.abspath(root).startswith(out):
            continue
        if "dimension.json" in files:
            dims.append(os.path.relpath(root, run_dir))
    dims.sort()
    if os.path.isfile(os.path.join(run_dir, "dim_vs_p.csv")):
        with open(os.path.join(run_dir, "dim_vs_p.csv"), newline="") as fh:
            put("dim_vs_p.csv", list(csv.reader(fh)))
    if not dims and not written:
        raise InvalidArgument(f"{run_dir}: no dimension.json or dim_vs_p.csv to export")
    for rel in dims:
        stem = "" if rel == "." else rel.replace(os.sep, "_") + "_"
        with open(os.path.join(run_dir, rel, "dimension.json")) as fh:
            rep = json.load(fh)
        rows = [["k", "L_k", "S_k"]] + [[k, repr(float(L)), repr(float(S))]
                                        for k, (L, S) in enumerate(zip(rep["L"], rep["S"])) if k > 0]
        put(stem + "entropy_curve.csv", rows)
        mpath = os.path.join(run_dir, rel, "masses.jsonl")
        if os.path.isfile(mpath):
            levels = {}
            with open(mpath) as fh:
                for line in fh:
                    r = json.loads(line)
                    levels.setdefault(r["k"], []).append(r["mass"])
            put(stem + "mass_histogram.csv", mass_histogram_rows([levels[k] for k in sorted(levels)]))
    return written
