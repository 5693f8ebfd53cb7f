"""Scenario configuration: loading, schema checks, and physics checks.

A scenario is one YAML file.  The optional ``include`` list pulls in
shared parameter blocks (paths relative to the including file) which
are deep-merged in order, the including file winning ties.  After the
JSON-schema pass the resolved mapping is checked against the physics:
positive dimensions, positive-definite matrices, a usable spin table,
and motor references that exist on the build.

`config_hash` fingerprints the resolved mapping (not the file bytes),
so includes and formatting do not change a run's identity.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import geometry, hydro, links, shell_model

log = logging.getLogger(__name__)

SCENARIO_IDS = (
    "openloop-fig2c",
    "semicircle",
    "depth-yaw-hold",
    "square",
    "redundancy",
    "crawl-pattern",
)

# scenario-specific keys allowed next to "id"
_SCENARIO_FIELDS = {
    "openloop-fig2c": {"rpm", "duration"},
    "semicircle": {"radius", "duration", "depth"},
    "depth-yaw-hold": {"duration", "depth", "yaw", "disturbances"},
    "square": {"leg_duration", "accel", "depth", "yaw"},
    "redundancy": {"duration", "accel", "depth", "yaw", "removed"},
    "crawl-pattern": {"rpm", "duration"},
}

# parameters whose defaults are assumptions or calibration results, not
# prototype data; every summary JSON carries this table
ASSUMED_PARAMETERS = (
    ("assembly.shaft_length", "assumed"),
    ("assembly.shaft_mass", "assumed"),
    ("assembly.shaft_radius", "assumed"),
    ("assembly.hook_length", "assumed"),
    ("assembly.hook_mass", "assumed"),
    ("assembly.hook_radius", "assumed"),
    ("assembly.hook_bend", "assumed, set by thrust calibration"),
    ("assembly.flagellum_length", "assumed"),
    ("assembly.flagellum_radius", "assumed, set by thrust calibration"),
    ("assembly.flagellum_density", "assumed"),
    ("assembly.youngs_modulus", "assumed"),
    ("hydro.rod_drag_normal", "assumed"),
    ("hydro.rod_drag_tangent", "assumed"),
    ("hydro.rod_added_mass", "assumed"),
    ("hydro.shell_drag", "assumed, shell-drag calibration"),
    ("hydro.shell_added_mass", "assumed"),
    ("controller.kp", "assumed"),
    ("controller.kd", "assumed"),
    ("controller.control_dt", "assumed"),
    ("controller.thrust_coef", "calibrated against the twin"),
    ("controller.reaction_coef", "calibrated against the twin"),
    ("controller.vehicle_drag", "calibrated against the twin"),
    ("controller.spin_sign", "assumed"),
    ("scenario.disturbances", "assumed, magnitudes not reported"),
    ("scenario.accel", "assumed, magnitudes not reported"),
)


@dataclass
class Diagnostic:
    """One validation finding, pointing at a config location."""

    location: str
    message: str

    def __str__(self):
        return "%s: %s" % (self.location, self.message)


@dataclass
class ConfigReport:
    path: str
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.diagnostics

    def add(self, location, message):
        self.diagnostics.append(Diagnostic(location, message))

    def __str__(self):
        if self.ok:
            return "%s: valid" % self.path
        lines = ["%s: %d problem(s)" % (self.path, len(self.diagnostics))]
        lines += ["  - %s" % d for d in self.diagnostics]
        return "\n".join(lines)


def _schema():
    ref = resources.files("dodecapod") / "configs" / "schema.json"
    return json.loads(ref.read_text())


def _deep_merge(base, extra):
    """Merge mapping `extra` over `base`; nested dicts merge, rest replace."""
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path):
    """Read a YAML scenario file and resolve its include chain."""
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError("%s: top level must be a mapping" % path)
    merged = {}
    for inc in raw.get("include", ()):
        inc_path = path.parent / inc
        merged = _deep_merge(merged, load_config(inc_path))
    raw = {k: v for k, v in raw.items() if k != "include"}
    return _deep_merge(merged, raw)


def config_hash(cfg):
    """sha256 of the canonical JSON form of a resolved config mapping."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# typed parameter construction


def assembly_params(cfg):
    block = cfg.get("assembly", {})
    kw = dict(block)
    if "removed_modules" in kw:
        kw["removed_modules"] = tuple(kw["removed_modules"])
    return links.DroneParams(**kw)


def hydro_params(cfg):
    block = dict(cfg.get("hydro", {}))
    for key in ("shell_drag", "shell_added_mass"):
        if key in block:
            block[key] = np.asarray(block[key], dtype=float)
    return hydro.HydroParams(**block)


def model_params(cfg, drone=None, water=None):
    """SimpleModelParams from the controller block, twin-derived inertia."""
    block = cfg.get("controller", {})
    over = {}
    if "thrust_coef" in block:
        over["thrust_coef"] = float(block["thrust_coef"])
    if "reaction_coef" in block:
        over["reaction_coef"] = float(block["reaction_coef"])
    if "vehicle_drag" in block:
        over["drag"] = np.asarray(block["vehicle_drag"], dtype=float)
    if "spin_sign" in block:
        over["spin_sign"] = np.asarray(block["spin_sign"], dtype=float)
    if "inertia" in block:
        over["inertia"] = np.asarray(block["inertia"], dtype=float)
    if "cap_fraction" in block:
        over["cap_fraction"] = float(block["cap_fraction"])
    return shell_model.SimpleModelParams.from_drone(drone, water, **over)


def control_gains(cfg):
    from . import control

    block = cfg.get("controller", {})
    kp = block.get("kp", 1.0)
    kd = block.get("kd")
    kp = np.asarray(kp, dtype=float)
    if kd is not None:
        kd = np.asarray(kd, dtype=float)
    return control.ControlGains(kp=kp, kd=kd)


def provenance(cfg):
    """The assumed/calibrated parameters with their resolved values."""
    out = []
    for dotted, flag in ASSUMED_PARAMETERS:
        node = cfg
        for part in dotted.split("."):
            node = node.get(part, {}) if isinstance(node, dict) else {}
        value = node if not isinstance(node, dict) or node else None
        out.append({"parameter": dotted, "provenance": flag,
                    "value": value if value is not None else "default"})
    return out


# validation


def _check_schema(cfg, report):
    validator = jsonschema.Draft202012Validator(_schema())
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.path)):
        where = ".".join(str(p) for p in err.path) or "(top level)"
        report.add(where, err.message)


def _check_scenario(cfg, report):
    sc = cfg.get("scenario")
    if not isinstance(sc, dict) or "id" not in sc:
        return
    sid = sc["id"]
    allowed = _SCENARIO_FIELDS.get(sid)
    if allowed is None:
        return
    for key in sc:
        if key != "id" and key not in allowed:
            report.add("scenario.%s" % key,
                       "not a field of scenario %r" % sid)
    for key in ("duration", "leg_duration", "radius", "rpm"):
        if key in sc and not sc[key] > 0.0:
            report.add("scenario.%s" % key, "must be positive")
    if sid == "openloop-fig2c" and "rpm" in sc:
        if sc["rpm"] * 2.0 * np.pi / 60.0 > shell_model.OMEGA_MAX:
            report.add("scenario.rpm", "exceeds the motor speed limit")
    for k, dist in enumerate(sc.get("disturbances", ())):
        loc = "scenario.disturbances[%d]" % k
        if dist.get("t1", 0.0) <= dist.get("t0", 0.0):
            report.add(loc, "needs t1 > t0")
        if len(dist.get("wrench", ())) != 6:
            report.add(loc + ".wrench", "must have 6 components")
    removed = sc.get("removed", [5] if sid == "redundancy" else [])
    for m in removed:
        if m not in range(1, geometry.N_FACES + 1):
            report.add("scenario.removed", "no motor M%s on the build" % m)


def _check_physics(cfg, report):
    try:
        drone = assembly_params(cfg)
        drone.validate()
    except (TypeError, ValueError) as exc:
        report.add("assembly", str(exc))
        drone = None
    try:
        water = hydro_params(cfg)
    except (TypeError, ValueError) as exc:
        report.add("hydro", str(exc))
        water = None
    block = cfg.get("controller", {})
    cap = block.get("cap_fraction", shell_model.CAP_FRACTION)
    if not 0.0 < cap <= 1.0:
        report.add("controller.cap_fraction", "must lie in (0, 1]")
    if drone is None or water is None:
        return
    try:
        params = model_params(cfg, drone, water)
    except (TypeError, ValueError) as exc:
        report.add("controller", str(exc))
        return
    cond = shell_model.allocation_condition(params)
    if not np.isfinite(cond) or cond > 1e6:
        report.add("controller.spin_sign",
                   "allocation matrix is singular for this spin table "
                   "(condition %.3g); thrust axes of the two spin groups "
                   "must each span all directions" % cond)


def validate_config(path):
    """Schema plus physics sanity checks; returns a ConfigReport."""
    report = ConfigReport(path=str(path))
    try:
        cfg = load_config(path)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        report.add("(file)", str(exc))
        return report
    _check_schema(cfg, report)
    if report.ok:
        _check_scenario(cfg, report)
        _check_physics(cfg, report)
    return report
