"""Scenario library: the shipped simulation experiments.

Each scenario builds a plant (the full twin or the reduced shell
model), a motor program or closed-loop controller, runs it, and packs
the result into the common log schema plus a JSON-able summary.  All
runs are fixed-step and deterministic: the same resolved config yields
byte-identical CSV output.

Scenario ids
------------
``openloop-fig2c``   four thrusters of one hemisphere at constant
                     speed, everything else passive.
``semicircle``       closed-loop planar half-circle sweep.
``depth-yaw-hold``   station keeping under scripted pushes; the
                     planar axes run open loop.
``square``           open-loop planar acceleration pulses tracing a
                     square, depth and heading closed loop.
``redundancy``       one straight leg run twice: nominal build vs one
                     module removed, the controller unaware.
``crawl-pattern``    two counter-rotating thruster groups, a sweeping
                     gait the allocator never commands.

Disturbance wrenches are given in world axes, moment (3) then force
(3), active on [t0, t1).
"""

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import config, control, dynamics, links, logs, se3, shell_model

BODY_LENGTH = 0.30  # m, shell size unit used for speed reporting


@dataclass
class ScenarioResult:
    """A primary log, its summary mapping, and any secondary logs."""

    log: logs.TimeSeriesLog
    summary: dict
    aux_logs: dict = field(default_factory=dict)


def run_scenario(cfg):
    """Execute the scenario described by a resolved config mapping."""
    scenario = cfg.get("scenario", {})
    sid = scenario.get("id")
    try:
        builder = _BUILDERS[sid]
    except KeyError:
        raise ValueError("unknown scenario id %r" % sid) from None
    return builder(cfg)


# plant wrappers


def _integrator(cfg, plant):
    block = cfg.get("integrator", {})
    method = block.get("method", "implicit")
    dt = float(block.get("dt", 2e-3 if plant == "full_twin" else 1e-3))
    log_dt = float(block.get("log_dt", 0.02))
    return method, dt, log_dt


def _plant(cfg):
    plant = cfg.get("plant", "full_twin")
    if plant not in ("full_twin", "simple_model"):
        raise ValueError("unknown plant %r" % plant)
    return plant


def _control_dt(cfg):
    return float(cfg.get("controller", {}).get("control_dt", 0.1))


def _motor_columns(assembly, command):
    """Spread prescribed-order speed samples onto the 12 motor slots."""
    names = dynamics.prescribed_names(assembly)
    index = [int(n[1:3]) - 1 for n in names]
    out = np.zeros((command.shape[0], 12))
    out[:, index] = command
    return out


def _rod_norm_columns(assembly, q):
    """Per-module rod coordinate norms; removed rods stay at zero."""
    out = np.zeros((q.shape[0], 12))
    for module in range(1, 13):
        name = "m%02d_flag" % module
        try:
            sl = assembly.dof_slice(name)
        except KeyError:
            continue
        out[:, module - 1] = np.linalg.norm(q[:, sl], axis=1)
    return out


def _tick_columns(ticks, t):
    """Zero-order-hold controller internals onto the sample grid."""
    cols = np.zeros((t.size, 16))
    if not ticks:
        return cols
    tick_t = np.array([tick["t"] for tick in ticks])
    rows = np.array([np.concatenate((tick["info"]["nu"],
                                     tick["info"]["wrench"],
                                     tick["info"]["pair_input"]))
                     for tick in ticks])
    idx = np.clip(np.searchsorted(tick_t, t, side="right") - 1, 0, None)
    return rows[idx]


def _ref_columns(ref, t):
    if ref is None:
        return np.zeros((t.size, 4))
    return np.stack([np.asarray(ref.value(ti), dtype=float) for ti in t])


def _run_twin(cfg, t_end, *, motor_map=None, controller=None, ref=None,
              extra_forces=None, drone=None):
    """Integrate the full assembly and pack the common log arrays."""
    drone = drone if drone is not None else config.assembly_params(cfg)
    asm = links.build_drone_assembly(drone)
    internal = dynamics.InternalForceModel.from_assembly(asm)
    hp = config.hydro_params(cfg)
    method, dt, log_dt = _integrator(cfg, "full_twin")
    motor = None
    ctrl = None
    if motor_map is not None:
        motor = dynamics.constant_speeds(asm, motor_map)
    if controller is not None:
        ctrl = controller(asm)
    traj = dynamics.simulate(asm, links.neutral_state(asm), t_end,
                             motor=motor, controller=ctrl,
                             control_dt=_control_dt(cfg), hydro_params=hp,
                             internal=internal, extra_forces=extra_forces,
                             dt=dt, method=method, log_dt=log_dt)
    pose = traj.q[:, [3, 4, 5, 0, 1, 2]]
    twist = traj.qdot[:, 0:6]
    omega = _motor_columns(asm, traj.motor_command)
    data = logs.pack_rows(traj.t, pose, twist, omega,
                          _tick_columns(traj.ticks, traj.t),
                          _ref_columns(ref, traj.t),
                          np.column_stack((traj.kinetic, traj.potential,
                                           traj.elastic)),
                          _rod_norm_columns(asm, traj.q))
    return data, traj, asm


def _run_simple(cfg, t_end, *, speeds, ref=None, extra_wrench=None,
                params=None):
    """Integrate the reduced model and pack the common log arrays."""
    params = params if params is not None else config.model_params(
        cfg, config.assembly_params(cfg))
    _, dt, log_dt = _integrator(cfg, "simple_model")
    res = shell_model.simple_simulate(np.zeros(6), np.zeros(6), t_end,
                                      speeds, params, dt=dt,
                                      control_dt=_control_dt(cfg),
                                      log_dt=log_dt,
                                      extra_wrench=extra_wrench)
    t, q, qdot = res["t"], res["q"], res["qdot"]
    pose = q[:, [3, 4, 5, 0, 1, 2]]
    kinetic = 0.5 * np.einsum("si,ij,sj->s", qdot, params.inertia, qdot)
    data = logs.pack_rows(t, pose, qdot, res["omega"],
                          _tick_columns(res["ticks"], t),
                          _ref_columns(ref, t),
                          np.column_stack((kinetic, np.zeros(t.size),
                                           np.zeros(t.size))),
                          np.zeros((t.size, 12)))
    return data, res


def _base_summary(cfg, sid, plant, t_end):
    return {
        "scenario": sid,
        "plant": plant,
        "duration_s": float(t_end),
        "config_hash": config.config_hash(cfg),
        "seed": int(cfg.get("seed", 0)),
        "schema_version": logs.SCHEMA_VERSION,
        "assumed_parameters": config.provenance(cfg),
    }


def _speed_metrics(data, cap=None):
    omega = data[:, 13:25]
    out = {"max_abs_omega_rad_s": float(np.abs(omega).max())}
    if cap is not None:
        out["speed_cap_rad_s"] = float(cap)
        out["saturated_sample_fraction"] = float(
            np.mean(np.abs(omega).max(axis=1) >= cap - 1e-9))
    return out


def _tracking_metrics(data):
    """Planar RMS, final heading error, attitude bounds from a log."""
    err_x = data[:, 41] - data[:, 1]
    err_y = data[:, 42] - data[:, 2]
    err_z = data[:, 43] - data[:, 3]
    err_psi = np.array([control.wrap_angle(a)
                        for a in data[:, 44] - data[:, 6]])
    return {
        "rms_planar_error_m": float(
            np.sqrt(np.mean(err_x**2 + err_y**2))),
        "max_abs_depth_error_m": float(np.abs(err_z).max()),
        "final_heading_error_deg": float(math.degrees(abs(err_psi[-1]))),
        "max_abs_heading_error_deg": float(
            math.degrees(np.abs(err_psi).max())),
        "max_abs_roll_deg": float(math.degrees(np.abs(data[:, 4]).max())),
        "max_abs_pitch_deg": float(math.degrees(np.abs(data[:, 5]).max())),
    }


# scenario builders


def _openloop_fig2c(cfg):
    sc = cfg["scenario"]
    rpm = float(sc.get("rpm", 60.0))
    t_end = float(sc.get("duration", 60.0))
    w = rpm * 2.0 * math.pi / 60.0
    active = (6, 8, 9, 11)
    plant = _plant(cfg)
    if plant == "full_twin":
        data, _, _ = _run_twin(cfg, t_end,
                               motor_map={m: w for m in active})
    else:
        vec = np.zeros(12)
        vec[[m - 1 for m in active]] = w
        data, _ = _run_simple(cfg, t_end, speeds=vec)
    yaw = data[:, 6]
    metrics = {
        "x_displacement_m": float(data[-1, 1]),
        "y_drift_m": float(data[-1, 2]),
        "z_displacement_m": float(data[-1, 3]),
        "yaw_change_deg": float(math.degrees(yaw[-1] - yaw[0])),
        "planar_distance_m": float(math.hypot(data[-1, 1], data[-1, 2])),
    }
    metrics.update(_speed_metrics(data))
    summary = _base_summary(cfg, "openloop-fig2c", plant, t_end)
    summary["metrics"] = metrics
    summary["prototype_reference"] = {
        "y_drift_m": 0.74, "z_displacement_m": 0.03,
        "yaw_change_deg": 32.8,
    }
    log = logs.TimeSeriesLog(
        data, logs.base_meta(summary["config_hash"], plant,
                             "openloop-fig2c"))
    return ScenarioResult(log, summary)


def _semicircle(cfg):
    sc = cfg["scenario"]
    radius = float(sc.get("radius", 2.0))
    t_end = float(sc.get("duration", 60.0))
    depth = float(sc.get("depth", 0.0))
    ref = control.semicircle_reference(radius, t_end, depth)
    plant = _plant(cfg)
    params = config.model_params(cfg, config.assembly_params(cfg))
    gains = config.control_gains(cfg)
    if plant == "full_twin":
        data, _, _ = _run_twin(
            cfg, t_end, ref=ref,
            controller=lambda asm: control.TwinController(
                asm, ref, params, gains))
    else:
        ctrl = control.SimpleController(ref, params, gains)
        data, _ = _run_simple(cfg, t_end, speeds=ctrl, ref=ref,
                              params=params)
    metrics = _tracking_metrics(data)
    metrics.update(_speed_metrics(data, params.speed_cap))
    metrics["path_length_m"] = float(
        np.sum(np.hypot(np.diff(data[:, 1]), np.diff(data[:, 2]))))
    summary = _base_summary(cfg, "semicircle", plant, t_end)
    summary["metrics"] = metrics
    log = logs.TimeSeriesLog(
        data, logs.base_meta(summary["config_hash"], plant, "semicircle"))
    return ScenarioResult(log, summary)


def _parse_disturbances(sc):
    out = []
    for item in sc.get("disturbances", ()):
        out.append((float(item["t0"]), float(item["t1"]),
                    np.asarray(item["wrench"], dtype=float)))
    return out


def _depth_yaw_hold(cfg):
    sc = cfg["scenario"]
    t_end = float(sc.get("duration", 60.0))
    depth = float(sc.get("depth", 0.0))
    yaw = float(sc.get("yaw", 0.0))
    pushes = _parse_disturbances(sc)
    ref = control.hold_reference(0.0, 0.0, depth, yaw,
                                 open_loop=(True, True))
    plant = _plant(cfg)
    params = config.model_params(cfg, config.assembly_params(cfg))
    gains = config.control_gains(cfg)

    def world_wrench(t):
        w = np.zeros(6)
        for t0, t1, vec in pushes:
            if t0 <= t < t1:
                w += vec
        return w

    if plant == "full_twin":
        def extra(t, state, cache):
            out = np.zeros(state.q.size)
            w = world_wrench(t)
            if np.any(w):
                rot = se3.euler_zyx_to_matrix(*state.q[0:3])
                out[0:3] = rot.T @ w[0:3]
                out[3:6] = rot.T @ w[3:6]
            return out

        data, _, _ = _run_twin(
            cfg, t_end, ref=ref, extra_forces=extra,
            controller=lambda asm: control.TwinController(
                asm, ref, params, gains))
    else:
        def extra(t, q, qdot):
            w = world_wrench(t)
            if not np.any(w):
                return np.zeros(6)
            rot = se3.euler_zyx_to_matrix(*q[0:3])
            return np.concatenate((rot.T @ w[0:3], rot.T @ w[3:6]))

        ctrl = control.SimpleController(ref, params, gains)
        data, _ = _run_simple(cfg, t_end, speeds=ctrl, ref=ref,
                              extra_wrench=extra, params=params)

    t = data[:, 0]
    err_z = np.abs(data[:, 43] - data[:, 3])
    err_psi = np.abs([control.wrap_angle(a)
                      for a in data[:, 44] - data[:, 6]])
    quiet = t >= 0.8 * t_end
    metrics = {
        "max_abs_depth_error_m": float(err_z.max()),
        "max_abs_yaw_error_deg": float(math.degrees(err_psi.max())),
        "settled_depth_error_m": float(err_z[quiet].max()),
        "settled_yaw_error_deg": float(math.degrees(err_psi[quiet].max())),
        "planar_drift_m": float(math.hypot(data[-1, 1], data[-1, 2])),
        "disturbance_count": len(pushes),
    }
    metrics.update(_speed_metrics(data, params.speed_cap))
    summary = _base_summary(cfg, "depth-yaw-hold", plant, t_end)
    summary["metrics"] = metrics
    log = logs.TimeSeriesLog(
        data, logs.base_meta(summary["config_hash"], plant,
                             "depth-yaw-hold"))
    return ScenarioResult(log, summary)


def _pulse(tau, t_leg, accel):
    """Rest-to-rest sine acceleration pulse: displacement, rate, accel."""
    travel = accel * t_leg**2 / (2.0 * math.pi)
    if tau <= 0.0:
        return 0.0, 0.0, 0.0
    if tau >= t_leg:
        return travel, 0.0, 0.0
    w = 2.0 * math.pi / t_leg
    return (accel / w * (tau - math.sin(w * tau) / w),
            accel / w * (1.0 - math.cos(w * tau)),
            accel * math.sin(w * tau))


def _leg_reference(legs, t_leg, accel, depth, yaw, check_times):
    """Open-loop planar legs (axis, sign) with closed depth/heading."""

    def terms(t):
        pos = [0.0, 0.0]
        vel = [0.0, 0.0]
        acc = [0.0, 0.0]
        for k, (axis, sign) in enumerate(legs):
            d, v, a = _pulse(t - k * t_leg, t_leg, accel)
            pos[axis] += sign * d
            vel[axis] += sign * v
            acc[axis] += sign * a
        return pos, vel, acc

    def value(t):
        pos, _, _ = terms(t)
        return np.array([pos[0], pos[1], depth, yaw])

    def rate(t):
        _, vel, _ = terms(t)
        return np.array([vel[0], vel[1], 0.0, 0.0])

    def accel_fn(t):
        _, _, acc = terms(t)
        return np.array([acc[0], acc[1], 0.0, 0.0])

    return control.FlatReference(value=value, rate=rate, accel=accel_fn,
                                 open_loop=(True, True),
                                 check_times=check_times)


def _square(cfg):
    sc = cfg["scenario"]
    t_leg = float(sc.get("leg_duration", 40.0))
    accel = float(sc.get("accel", 4e-3))
    depth = float(sc.get("depth", 0.0))
    yaw = float(sc.get("yaw", 0.0))
    t_end = 4.0 * t_leg
    legs = ((0, 1.0), (1, 1.0), (0, -1.0), (1, -1.0))
    ref = _leg_reference(legs, t_leg, accel, depth, yaw,
                         check_times=(0.5 * t_leg, 1.5 * t_leg,
                                      2.5 * t_leg))
    plant = _plant(cfg)
    params = config.model_params(cfg, config.assembly_params(cfg))
    gains = config.control_gains(cfg)
    if plant == "full_twin":
        data, _, _ = _run_twin(
            cfg, t_end, ref=ref,
            controller=lambda asm: control.TwinController(
                asm, ref, params, gains))
    else:
        ctrl = control.SimpleController(ref, params, gains)
        data, _ = _run_simple(cfg, t_end, speeds=ctrl, ref=ref,
                              params=params)
    t = data[:, 0]
    err_psi = np.abs([control.wrap_angle(a)
                      for a in data[:, 44] - data[:, 6]])
    side = accel * t_leg**2 / (2.0 * math.pi)
    metrics = {
        "side_length_m": float(side),
        "max_abs_depth_error_m": float(
            np.abs(data[:, 43] - data[:, 3]).max()),
        "max_abs_heading_error_deg": float(math.degrees(err_psi.max())),
        "max_abs_roll_deg": float(math.degrees(np.abs(data[:, 4]).max())),
        "max_abs_pitch_deg": float(math.degrees(np.abs(data[:, 5]).max())),
        "closure_gap_m": float(math.hypot(data[-1, 1] - data[0, 1],
                                          data[-1, 2] - data[0, 2])),
    }
    metrics.update(_speed_metrics(data, params.speed_cap))
    summary = _base_summary(cfg, "square", plant, t_end)
    summary["metrics"] = metrics
    log = logs.TimeSeriesLog(
        data, logs.base_meta(summary["config_hash"], plant, "square"))
    return ScenarioResult(log, summary)


def _redundancy(cfg):
    sc = cfg["scenario"]
    t_end = float(sc.get("duration", 30.0))
    accel = float(sc.get("accel", 4e-3))
    depth = float(sc.get("depth", 0.0))
    yaw = float(sc.get("yaw", 0.0))
    removed = tuple(int(m) for m in sc.get("removed", (5,)))
    # drive along -y: the leg direction whose thrust the removed
    # module's pair channel dominates, mirroring the prototype test
    ref = _leg_reference(((1, -1.0),), t_end, accel, depth, yaw,
                         check_times=(0.25 * t_end, 0.5 * t_end))
    plant = _plant(cfg)
    drone = config.assembly_params(cfg)
    params = config.model_params(cfg, drone)
    gains = config.control_gains(cfg)

    def run(build):
        if plant == "full_twin":
            data, _, _ = _run_twin(
                cfg, t_end, ref=ref, drone=build,
                controller=lambda asm: control.TwinController(
                    asm, ref, params, gains))
            return data
        mask = np.ones(12)
        mask[[m - 1 for m in build.removed_modules]] = 0.0
        ctrl = control.SimpleController(ref, params, gains)

        def masked(t, q, qdot):
            omega, info = ctrl(t, q, qdot)
            return omega * mask, info

        data, _ = _run_simple(cfg, t_end, speeds=masked, ref=ref,
                              params=params)
        return data

    full = run(drone)
    impaired = run(dataclasses.replace(drone, removed_modules=removed))

    def leg_speed(data):
        # displacement along the commanded -y leg per unit time
        return -(data[-1, 2] - data[0, 2]) / t_end

    def commanded(data, module):
        # the allocator fires the pair's first motor on positive
        # throttle, the second on negative
        channel = data[:, 35 + (module - 1) // 2]
        return bool(np.any(channel > 0.0) if module % 2 == 1
                    else np.any(channel < 0.0))

    v_full = leg_speed(full)
    v_imp = leg_speed(impaired)
    err_z = np.abs(impaired[:, 43] - impaired[:, 3])
    err_psi = np.abs([control.wrap_angle(a)
                      for a in impaired[:, 44] - impaired[:, 6]])
    metrics = {
        "removed_modules": list(removed),
        "full_speed_m_s": float(v_full),
        "impaired_speed_m_s": float(v_imp),
        "full_speed_bl_min": float(v_full * 60.0 / BODY_LENGTH),
        "impaired_speed_bl_min": float(v_imp * 60.0 / BODY_LENGTH),
        "speed_ratio": float(v_imp / v_full) if v_full else float("nan"),
        "impaired_max_depth_error_m": float(err_z.max()),
        "impaired_max_yaw_error_deg": float(math.degrees(err_psi.max())),
        "controller_engaged_removed": bool(
            all(commanded(impaired, m) for m in removed)),
    }
    metrics.update(_speed_metrics(impaired, params.speed_cap))
    summary = _base_summary(cfg, "redundancy", plant, t_end)
    summary["metrics"] = metrics
    summary["prototype_reference"] = {"speed_ratio": 0.5}
    meta = logs.base_meta(summary["config_hash"], plant, "redundancy")
    log = logs.TimeSeriesLog(impaired, dict(meta, variant="impaired"))
    aux = {"full": logs.TimeSeriesLog(full.copy(),
                                      dict(meta, variant="full"))}
    return ScenarioResult(log, summary, aux)


def _crawl(cfg):
    sc = cfg["scenario"]
    rpm = float(sc.get("rpm", 60.0))
    t_end = float(sc.get("duration", 60.0))
    w = rpm * 2.0 * math.pi / 60.0
    spin = {6: w, 8: w, 10: -w, 12: -w}
    plant = _plant(cfg)
    if plant == "full_twin":
        data, _, _ = _run_twin(cfg, t_end, motor_map=spin)
    else:
        vec = np.zeros(12)
        for m, s in spin.items():
            vec[m - 1] = s
        data, _ = _run_simple(cfg, t_end, speeds=vec)
    metrics = {
        "x_displacement_m": float(data[-1, 1]),
        "y_displacement_m": float(data[-1, 2]),
        "z_displacement_m": float(data[-1, 3]),
        "yaw_change_deg": float(math.degrees(data[-1, 6] - data[0, 6])),
        "planar_distance_m": float(math.hypot(data[-1, 1], data[-1, 2])),
        "mean_speed_bl_min": float(
            math.hypot(data[-1, 1], data[-1, 2]) / t_end * 60.0
            / BODY_LENGTH),
    }
    metrics.update(_speed_metrics(data))
    summary = _base_summary(cfg, "crawl-pattern", plant, t_end)
    summary["metrics"] = metrics
    log = logs.TimeSeriesLog(
        data, logs.base_meta(summary["config_hash"], plant,
                             "crawl-pattern"))
    return ScenarioResult(log, summary)


_BUILDERS = {
    "openloop-fig2c": _openloop_fig2c,
    "semicircle": _semicircle,
    "depth-yaw-hold": _depth_yaw_hold,
    "square": _square,
    "redundancy": _redundancy,
    "crawl-pattern": _crawl,
}
