# Released freely under the GNU General Public License version 3. USE AT YOUR OWN RISK.
"""
JSON run configuration.

One self-contained file per run. Sections: domain, seed, outputs, solve,
objective, optimizer, verify, monotonicity. Schema violations raise
ConfigError with the dotted path of the offending key, e.g.
``optimizer.mu_schedule[1]``. SHAPEOPT_OUTPUT_DIR overrides outputs.dir;
the --out flag overrides both.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from density_optimizer import OptimizerConfig
from field_io import read_spfield
from grid_utils import box_predicate, build_domain, disk_predicate
from shape_functionals import ObjectiveSpec
from solver_io import ConfigError, ShapeOptError

OUTPUT_ENV = "SHAPEOPT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "shapeopt_output"
FORMATS = ("csv", "spfield", "png")
CHECKS = (
    "subsolution", "growth", "density", "perimeter", "lower_bound", "alt_caffarelli",
    "junction", "separation", "nodal", "connectivity", "gamma_lip", "constrained_cell",
)
TOP_LEVEL_KEYS = ("domain", "seed", "outputs", "solve", "objective", "optimizer", "verify", "monotonicity")


@dataclass
class RunConfig:
    raw: dict
    domain: object
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR
    formats: tuple = FORMATS
    spfield_binary: bool = False
    solve: dict = field(default_factory=dict)
    objective: ObjectiveSpec = None
    optimizer: OptimizerConfig = None
    verify: dict = field(default_factory=dict)
    monotonicity: dict = field(default_factory=dict)
    base_dir: str = "."

    def wants(self, fmt):
        return fmt in self.formats


# --- Small validators ---

def _number(value, path, positive=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path=path)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError("must be finite", path=path)
    if positive and value <= 0:
        raise ConfigError("must be positive", path=path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be at least {minimum}", path=path)
    return value


def _vector(value, path, length=None):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"expected a list, got {value!r}", path=path)
    out = [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(f"expected {length} entries, got {len(out)}", path=path)
    return out


def _section(data, key):
    value = data.get(key, {})
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError("expected an object", path=key)
    return value


def _resolve(base_dir, path):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def shape_mask(spec, path, dim, base_dir=".", shape=None):
    """
    Turns a shape spec into a predicate over cell centres or a boolean array.

    {"type": "full"} | {"type": "box", "lo": [...], "hi": [...]}
    {"type": "disk", "center": [...], "radius": r} | {"type": "field", "path": ..., "threshold": t}
    """
    if spec is None:
        return None
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("expected an object with a 'type' key", path=path)
    kind = spec["type"]
    if kind == "full":
        return None
    if kind == "box":
        lo = _vector(spec.get("lo"), f"{path}.lo", dim)
        hi = _vector(spec.get("hi"), f"{path}.hi", dim)
        if any(h <= l for l, h in zip(lo, hi)):
            raise ConfigError("hi must exceed lo on every axis", path=f"{path}.hi")
        return box_predicate(lo, hi)
    if kind == "disk":
        center = _vector(spec.get("center"), f"{path}.center", dim)
        radius = _number(spec.get("radius"), f"{path}.radius", positive=True)
        return disk_predicate(center, radius)
    if kind == "field":
        file_path = spec.get("path")
        if not isinstance(file_path, str):
            raise ConfigError("expected a file path", path=f"{path}.path")
        threshold = _number(spec.get("threshold", 0.5), f"{path}.threshold")
        try:
            _, values = read_spfield(_resolve(base_dir, file_path))
        except OSError as e:
            raise ConfigError(f"cannot read field file: {e}", path=f"{path}.path")
        if shape is not None and values.shape != tuple(shape):
            raise ConfigError(f"field shape {values.shape} does not match grid {tuple(shape)}", path=f"{path}.path")
        return values >= threshold
    raise ConfigError(f"unknown shape type '{kind}'", path=f"{path}.type")


def sample_shape(domain, spec, path, base_dir="."):
    """Boolean support on ``domain`` for a shape spec (full domain when None)."""
    mask = shape_mask(spec, path, domain.dim, base_dir, domain.shape)
    if mask is None:
        return domain.mask.copy()
    if callable(mask):
        return np.asarray(mask(*domain.centers()), dtype=bool) & domain.mask
    return np.asarray(mask, dtype=bool) & domain.mask


# --- Sections ---

def _parse_domain(data, base_dir):
    section = data.get("domain")
    if not isinstance(section, dict):
        raise ConfigError("missing or invalid section", path="domain")
    extent = _vector(section.get("extent"), "domain.extent")
    if len(extent) not in (2, 3):
        raise ConfigError("expected 2 or 3 entries", path="domain.extent")
    resolution = section.get("resolution")
    if isinstance(resolution, list):
        resolution = tuple(int(_number(r, f"domain.resolution[{i}]", minimum=4)) for i, r in enumerate(resolution))
    else:
        resolution = int(_number(resolution, "domain.resolution", minimum=4))
    origin = section.get("origin")
    if origin is not None:
        origin = _vector(origin, "domain.origin", len(extent))
    domain = build_domain(extent, resolution, origin=origin)
    mask = shape_mask(section.get("mask"), "domain.mask", len(extent), base_dir, domain.shape)
    if mask is not None:
        domain = build_domain(extent, resolution, mask=mask, origin=origin)
        if domain.n_active == 0:
            raise ConfigError("mask leaves no cells", path="domain.mask")
    return domain


def _parse_outputs(data, out_override):
    section = _section(data, "outputs")
    formats = section.get("formats", list(FORMATS))
    if not isinstance(formats, list):
        raise ConfigError("expected a list", path="outputs.formats")
    for i, fmt in enumerate(formats):
        if fmt not in FORMATS:
            raise ConfigError(f"unknown format '{fmt}'", path=f"outputs.formats[{i}]")
    out_dir = out_override or os.environ.get(OUTPUT_ENV) or section.get("dir", DEFAULT_OUTPUT_DIR)
    binary = section.get("spfield_binary", False)
    if not isinstance(binary, bool):
        raise ConfigError("expected true or false", path="outputs.spfield_binary")
    return out_dir, tuple(formats), binary


def _parse_solve(data):
    section = _section(data, "solve")
    if not section:
        return {}
    problem = section.get("problem", "eigen")
    if problem not in ("torsion", "eigen"):
        raise ConfigError(f"expected 'torsion' or 'eigen', got {problem!r}", path="solve.problem")
    mode = section.get("mode", "exact")
    if mode not in ("exact", "penalized"):
        raise ConfigError(f"expected 'exact' or 'penalized', got {mode!r}", path="solve.mode")
    k = int(_number(section.get("k", 1), "solve.k", minimum=1))
    if k > 20:
        raise ConfigError("at most 20 eigenpairs", path="solve.k")
    method = section.get("method", "cg")
    if method not in ("cg", "direct"):
        raise ConfigError(f"expected 'cg' or 'direct', got {method!r}", path="solve.method")
    return {
        "problem": problem,
        "support": section.get("support"),
        "mode": mode,
        "mu": _number(section.get("mu", 1e4), "solve.mu", positive=True),
        "k": k,
        "tol": _number(section.get("tol", 1e-8 if problem == "eigen" else 1e-10), "solve.tol", positive=True),
        "method": method,
    }


def _parse_objective(data):
    section = data.get("objective")
    if section is None:
        return None
    if not isinstance(section, dict):
        raise ConfigError("expected an object", path="objective")
    functionals = section.get("functionals")
    if not isinstance(functionals, list) or not functionals:
        raise ConfigError("expected a nonempty list", path="objective.functionals")
    for i, f in enumerate(functionals):
        if not isinstance(f, (dict, str)):
            raise ConfigError("expected an object or a name", path=f"objective.functionals[{i}]")
    _number(section.get("m", 0.0), "objective.m", minimum=0.0)
    if section.get("weights") is not None:
        _vector(section["weights"], "objective.weights", len(functionals))
    try:
        return ObjectiveSpec.from_dict(section)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), path="objective")


def _parse_optimizer(data, seed, domain, base_dir):
    section = dict(_section(data, "optimizer"))
    known = set(OptimizerConfig.__dataclass_fields__)
    init_fields = section.pop("init_fields", None)
    for key in section:
        if key not in known or key == "init_phases":
            raise ConfigError("unknown key", path=f"optimizer.{key}")
    if "mu_schedule" in section:
        schedule = _vector(section["mu_schedule"], "optimizer.mu_schedule")
        section["mu_schedule"] = tuple(schedule)
    section.setdefault("seed", seed)
    if init_fields:
        phases = []
        for i, p in enumerate(init_fields):
            try:
                _, values = read_spfield(_resolve(base_dir, p))
            except OSError as e:
                raise ConfigError(f"cannot read field file: {e}", path=f"optimizer.init_fields[{i}]")
            if domain is not None and values.shape != domain.shape:
                raise ConfigError("field does not match the grid", path=f"optimizer.init_fields[{i}]")
            phases.append(values)
        section["init_phases"] = phases
        section.setdefault("init", "given")
    try:
        config = OptimizerConfig(**section)
    except TypeError as e:
        raise ConfigError(str(e), path="optimizer")
    ok, message = config.validate()
    if not ok:
        key, _, text = message.partition(": ")
        raise ConfigError(text, path=key)
    return config


def _parse_verify(data):
    section = _section(data, "verify")
    checks = section.get("checks", {name: {} for name in CHECKS})
    if isinstance(checks, list):
        checks = {name: {} for name in checks}
    if not isinstance(checks, dict):
        raise ConfigError("expected an object or a list of names", path="verify.checks")
    for name, params in checks.items():
        if name not in CHECKS:
            raise ConfigError("unknown check", path=f"verify.checks.{name}")
        if not isinstance(params, dict):
            raise ConfigError("expected an object", path=f"verify.checks.{name}")
    return {"input_dir": section.get("input_dir"), "checks": checks}


def _parse_monotonicity(data):
    section = _section(data, "monotonicity")
    if not section:
        return {}
    preset = section.get("preset")
    fields = section.get("fields")
    if preset is None and fields is None:
        raise ConfigError("either 'preset' or 'fields' is required", path="monotonicity")
    if preset is not None and preset not in ("halfplanes", "sectors"):
        raise ConfigError(f"unknown preset '{preset}'", path="monotonicity.preset")
    if fields is not None and (not isinstance(fields, list) or len(fields) not in (2, 3)):
        raise ConfigError("expected a list of 2 or 3 field files", path="monotonicity.fields")
    radii = section.get("radii")
    if isinstance(radii, dict):
        radii = {
            "min": _number(radii.get("min"), "monotonicity.radii.min", positive=True) if "min" in radii else None,
            "max": _number(radii.get("max", 0.4), "monotonicity.radii.max", positive=True),
            "count": int(_number(radii.get("count", 24), "monotonicity.radii.count", minimum=2)),
        }
    elif radii is not None:
        radii = _vector(radii, "monotonicity.radii")
    epsilon = section.get("epsilon")
    gradients = section.get("gradients", "analytic")
    if gradients not in ("analytic", "central"):
        raise ConfigError(f"expected 'analytic' or 'central', got {gradients!r}", path="monotonicity.gradients")
    return {
        "preset": preset,
        "fields": fields,
        "center": _vector(section["center"], "monotonicity.center") if "center" in section else None,
        "radii": radii,
        "epsilon": _number(epsilon, "monotonicity.epsilon", positive=True) if epsilon is not None else None,
        "resolution": int(_number(section.get("resolution", 512), "monotonicity.resolution", minimum=4)),
        "gradients": gradients,
    }


# --- domain.json (written by optimize, read by verify) ---

MASK_FILE = "mask.spf"


def domain_to_dict(domain):
    data = {"extent": list(domain.extent), "cells": list(domain.cells),
            "origin": list(domain.origin), "h": domain.h, "mask_file": None}
    if not np.all(domain.mask):
        data["mask_file"] = MASK_FILE
    return data


def domain_from_dict(data, base_dir="."):
    try:
        extent, cells, origin = data["extent"], data["cells"], data.get("origin")
    except (KeyError, TypeError):
        raise ConfigError("domain.json lacks extent or cells", path="verify.input_dir")
    mask = None
    if data.get("mask_file"):
        try:
            _, values = read_spfield(_resolve(base_dir, data["mask_file"]))
        except OSError as e:
            raise ConfigError(f"cannot read mask file: {e}", path="verify.input_dir")
        mask = values >= 0.5
    return build_domain(extent, tuple(cells), mask=mask, origin=origin)


# --- Entry points ---

def parse_config(data, base_dir=".", out_override=None):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", path="<root>")
    for key in data:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError("unknown section", path=key)
    seed = int(_number(data.get("seed", 0), "seed"))
    mono = _parse_monotonicity(data)
    # verify reads its grid from the run directory; monotonicity presets bring their own
    domain = _parse_domain(data, base_dir) if "domain" in data else None
    out_dir, formats, binary = _parse_outputs(data, out_override)
    return RunConfig(
        raw=data,
        domain=domain,
        seed=seed,
        output_dir=out_dir,
        formats=formats,
        spfield_binary=binary,
        solve=_parse_solve(data),
        objective=_parse_objective(data),
        optimizer=_parse_optimizer(data, seed, domain, base_dir),
        verify=_parse_verify(data),
        monotonicity=mono,
        base_dir=base_dir,
    )


def load_config(path, out_override=None):
    """Reads and validates a JSON run file. Raises ConfigError on any problem."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}", path="<file>")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON (line {e.lineno}, column {e.colno}): {e.msg}", path="<file>")
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)), out_override=out_override)


def validate_config(data):
    """Returns (ok, message) without raising."""
    try:
        parse_config(data)
    except ShapeOptError as e:
        return False, str(e)
    return True, "Configuration is valid."
