"""Run logging: a fixed-schema time-series table plus a summary JSON.

Every scenario writes the same CSV schema regardless of plant or
controller so downstream tooling never branches: controller-free runs
carry zeros in the controller columns, removed modules carry zeros in
their speed column.  Floats are formatted with a fixed %.12g so a
repeated run of the same config is byte-identical.

The CSV starts with '# key: value' metadata lines (schema version,
config hash, package and numpy versions) followed by the column header.
Wall-clock facts live only in the summary JSON, never in the CSV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = "1"

_MOTOR = ["omega_%02d" % m for m in range(1, 13)]
_RODQ = ["rodq_%02d" % m for m in range(1, 13)]

COLUMNS = (
    ["t",
     "x", "y", "z", "phi", "theta", "psi",
     "wx", "wy", "wz", "vx", "vy", "vz"]
    + _MOTOR
    + ["nu_x", "nu_y", "nu_z", "nu_psi"]
    + ["fstar_mx", "fstar_my", "fstar_mz",
       "fstar_fx", "fstar_fy", "fstar_fz"]
    + ["pair_%d" % j for j in range(1, 7)]
    + ["ref_x", "ref_y", "ref_z", "ref_psi"]
    + ["kinetic", "potential", "elastic"]
    + _RODQ
)


@dataclass
class TimeSeriesLog:
    """Sampled run records with constant schema and run metadata."""

    data: np.ndarray                    # (n_samples, len(COLUMNS))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ValueError("log data must be (n, %d)" % len(COLUMNS))
        t = self.column("t")
        if t.size and np.any(np.diff(t) <= 0.0):
            raise ValueError("log times must increase")

    def __len__(self):
        return self.data.shape[0]

    def column(self, name):
        try:
            return self.data[:, COLUMNS.index(name)]
        except ValueError:
            raise KeyError("log has no column %r" % name) from None

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["# schema: %s" % self.meta.get("schema", SCHEMA_VERSION)]
        for key in sorted(self.meta):
            if key != "schema":
                lines.append("# %s: %s" % (key, self.meta[key]))
        lines.append(",".join(COLUMNS))
        for row in self.data:
            lines.append(",".join("%.12g" % v for v in row))
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        header = None
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                elif header is None:
                    header = line.split(",")
                else:
                    rows.append([float(v) for v in line.split(",")])
        if header != list(COLUMNS):
            raise ValueError("%s does not match log schema version %s"
                             % (path, SCHEMA_VERSION))
        if not rows:
            raise ValueError("%s holds no samples" % path)
        return cls(data=np.array(rows), meta=meta)


def base_meta(cfg_hash, plant, scenario_id):
    return {
        "schema": SCHEMA_VERSION,
        "config_hash": cfg_hash,
        "plant": plant,
        "scenario": scenario_id,
        "package_version": __version__,
        "numpy_version": np.__version__,
    }


def pack_rows(t, pose, twist, omega, controller, refs, energies, rodq):
    """Assemble the log matrix from per-quantity arrays.

    pose: (n,6) world x,y,z + euler phi,theta,psi; twist: (n,6) body
    angular+linear; omega: (n,12) held commands in motor order;
    controller: (n,16) nu(4) + fstar(6) + pairs(6); refs: (n,4);
    energies: (n,3); rodq: (n,12) per-module rod coordinate norms.
    """
    t = np.asarray(t, dtype=float)
    n = t.size
    out = np.zeros((n, len(COLUMNS)))
    out[:, 0] = t
    out[:, 1:7] = pose
    out[:, 7:13] = twist
    out[:, 13:25] = omega
    out[:, 25:41] = controller
    out[:, 41:45] = refs
    out[:, 45:48] = energies
    out[:, 48:60] = rodq
    return out


def write_summary(path, summary):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True,
                               default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError("cannot serialize %r" % type(obj))
