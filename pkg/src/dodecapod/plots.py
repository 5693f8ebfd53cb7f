"""Plot emission: deterministic SVG renderings of a run log.

Two figures per run: a time-series panel (depth and yaw against their
references, commanded speeds, controller accelerations) and a planar
x-y path with the reference overlay when one was tracked.  SVG output
is made reproducible by pinning the hash salt and stripping the date
metadata, so goldens can be compared byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "dodecapod"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .logs import TimeSeriesLog  # noqa: E402

_SAVE = {"format": "svg", "metadata": {"Date": None}}


def _require(log, names):
    for name in names:
        log.column(name)
    if len(log) == 0:
        raise ValueError("log holds no samples")


def time_series_figure(log):
    _require(log, ("t", "z", "psi", "ref_z", "ref_psi", "nu_z", "nu_psi"))
    t = log.column("t")
    fig, axes = plt.subplots(4, 1, figsize=(7.0, 9.0), sharex=True)
    ax = axes[0]
    ax.plot(t, log.column("z"), label="z")
    ax.plot(t, log.column("ref_z"), "--", label="ref")
    ax.set_ylabel("depth z [m]")
    ax.legend(loc="best", fontsize=8)
    ax = axes[1]
    ax.plot(t, np.degrees(log.column("psi")), label="psi")
    ax.plot(t, np.degrees(log.column("ref_psi")), "--", label="ref")
    ax.set_ylabel("yaw [deg]")
    ax.legend(loc="best", fontsize=8)
    ax = axes[2]
    for m in range(1, 13):
        ax.plot(t, log.column("omega_%02d" % m), lw=0.7)
    ax.set_ylabel("commanded speed [rad/s]")
    ax = axes[3]
    for name in ("nu_x", "nu_y", "nu_z", "nu_psi"):
        ax.plot(t, log.column(name), label=name, lw=0.8)
    ax.set_ylabel("nu [m/s^2, rad/s^2]")
    ax.set_xlabel("t [s]")
    ax.legend(loc="best", fontsize=8, ncol=4)
    fig.suptitle("%s (%s)" % (log.meta.get("scenario", "run"),
                              log.meta.get("plant", "")), fontsize=10)
    fig.tight_layout()
    return fig


def path_figure(log):
    _require(log, ("x", "y", "ref_x", "ref_y"))
    x, y = log.column("x"), log.column("y")
    rx, ry = log.column("ref_x"), log.column("ref_y")
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.plot(x, y, label="path")
    if np.any(rx != 0.0) or np.any(ry != 0.0):
        ax.plot(rx, ry, "--", label="reference")
    ax.plot(x[:1], y[:1], "o", ms=5, label="start")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("planar path: %s" % log.meta.get("scenario", "run"),
                 fontsize=10)
    fig.tight_layout()
    return fig


def emit_plots(log, out_dir, stem=None):
    """Render the standard figures for a log; returns the SVG paths.

    `log` is a TimeSeriesLog or a path to a log CSV.
    """
    if not isinstance(log, TimeSeriesLog):
        stem = stem or Path(log).stem
        log = TimeSeriesLog.from_csv(log)
    stem = stem or log.meta.get("scenario", "run")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for suffix, maker in (("timeseries", time_series_figure),
                          ("path", path_figure)):
        fig = maker(log)
        target = out_dir / ("%s_%s.svg" % (stem, suffix))
        fig.savefig(target, **_SAVE)
        plt.close(fig)
        written.append(target)
    return written
