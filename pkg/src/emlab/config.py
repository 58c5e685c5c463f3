"""Experiment configuration: schema, defaults, environment overrides."""
import copy
import hashlib
import json
import os
from importlib import resources

import jsonschema

from .errors import InvalidArgument

ENV_PREFIX = "EML_"

DEFAULTS = {
    "run_id": "run",
    "problem": "cantor",
    "seed": 0,
    "workers": 1,
    "output_dir": None,
    "integrand": {"kind": "power", "p": 2.0, "epsilon_perturb": 0.0, "anisotropy": None, "c_star": None},
    "cantor": {"n": 2, "alpha": 0.25, "beta": 0.25, "ratio_mode": "constant", "ratio": 0.25,
               "ratios": None, "seed": 0, "m": 3},
    "annulus": {"r_inner": 0.25, "r_outer": 1.0, "h": 0.0078125, "radii": "geometric"},
    "mesh": {"q_min": 4, "grade": 0.5, "h_max": 0.125, "vertex_cap": 1500000, "uniform_h": None},
    "solver": {"tol_newton": 1e-10,
               "eps_ladder": {"eps0": 1.0, "factor": 0.5, "eps_final": None, "eps_final_rel": 1e-8},
               "max_iter": 50, "cg_tol": 1e-12, "delta_zero_grad": 1e-7, "preconditioner": "amg",
               "max_restarts": 3, "rung_rtol": 1e-6, "armijo": 1e-4},
    "analysis": {"window": None, "deltas": [0.01, 0.02, 0.05, 0.1], "M": "auto", "floor_gen": None,
                 "mass_floor": 1e-14, "doubling_cap": None, "arcs": 8,
                 "subsolution": {"enabled": True, "trials": 32, "tol_rel": 1e-6}},
    "sweep": {"p_list": [2.0, 3.0], "levels": [{}], "margin": 0.0},
}


def load_schema():
    with resources.files("emlab").joinpath("configs/schema.json").open() as fh:
        return json.load(fh)


def deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class ConfigError(InvalidArgument):
    """Validation failure; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _parse_env_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ=None):
    """Nested overrides from EML_SECTION__KEY=value variables.

    Values are parsed as JSON when possible.  EML_PURE_PYTHON is reserved for
    backend selection and skipped.
    """
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX) or key == "EML_PURE_PYTHON":
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = _parse_env_value(raw)
    return out


def validate(cfg):
    """Schema and cross-field checks; raises ConfigError naming the field."""
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(path, e.message)
    c = cfg["cantor"]
    if c["alpha"] > c["beta"]:
        raise ConfigError("cantor.alpha", f"alpha={c['alpha']} exceeds beta={c['beta']}")
    if c["ratio_mode"] == "constant" and not c["alpha"] <= c["ratio"] <= c["beta"]:
        raise ConfigError("cantor.ratio", "constant ratio outside [alpha, beta]")
    if c["ratio_mode"] == "list":
        if c["ratios"] is None or len(c["ratios"]) != c["m"]:
            raise ConfigError("cantor.ratios", "list mode needs exactly m ratios")
    a = cfg["annulus"]
    if not a["r_inner"] < a["r_outer"]:
        raise ConfigError("annulus.r_inner", "must be smaller than r_outer")
    return cfg


def resolve(user_cfg, environ=None, cli=None):
    """Defaults < file < environment < command line; validated."""
    cfg = deep_merge(DEFAULTS, user_cfg or {})
    cfg = deep_merge(cfg, env_overrides(environ))
    cfg = deep_merge(cfg, cli or {})
    return validate(cfg)


def load(path, environ=None, cli=None):
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return resolve(user, environ=environ, cli=cli)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()


def bundled(name):
    """Path of a bundled config file."""
    p = resources.files("emlab").joinpath(f"configs/{name}")
    if not p.is_file():
        raise InvalidArgument(f"no bundled config named {name!r}")
    return str(p)
