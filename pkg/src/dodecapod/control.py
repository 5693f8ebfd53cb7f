"""Flat-output PD control stack for the reduced vehicle model.

The controlled outputs are sigma = (x, y, z, psi): world position and
heading.  Roll and pitch are left to the passive restoring moment of
the low CM.  A PD law on sigma produces desired accelerations nu, the
reduced model maps nu to a CM wrench (compensating its own restoring
and drag terms, zeroing the roll/pitch moment channels), and the pair
allocation turns the wrench into twelve capped motor speeds.  Either
planar axis can instead run open loop, passing a commanded
acceleration straight through, which mirrors operating the vehicle
without planar position feedback.

Everything here is a pure function of (time, state); the 10 Hz
zero-order hold lives in the simulation loops.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, hydro, se3, shell_model

SIGMA_LABELS = ("x", "y", "z", "psi")


def wrap_angle(angle):
    """Fold an angle difference into [-pi, pi)."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class ControlGains:
    """Per-output PD gains; critically damped by default."""

    kp: np.ndarray = field(default_factory=lambda: np.ones(4))
    kd: np.ndarray = None

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float) * np.ones(4)
        if self.kd is None:
            self.kd = 2.0 * np.sqrt(self.kp)
        self.kd = np.asarray(self.kd, dtype=float) * np.ones(4)
        if np.any(self.kp <= 0.0) or np.any(self.kd <= 0.0):
            raise ValueError("gains must be positive")


@dataclass
class FlatReference:
    """Desired output trajectory sigma(t) with consistent derivatives.

    `value`, `rate`, and `accel` map a time to 4-vectors; `open_loop`
    switches the x / y axes from position feedback to pass-through of
    the commanded acceleration.  Consistency of the derivatives is
    spot-checked by finite differences at `check_times`.
    """

    value: callable
    rate: callable
    accel: callable
    open_loop: tuple = (False, False)
    check_times: tuple = (0.1, 1.0, 10.0)

    def __post_init__(self):
        if len(self.open_loop) != 2:
            raise ValueError("open_loop is (x, y)")
        h = 1e-3
        for t in self.check_times:
            for fun, dfun, label in ((self.value, self.rate, "rate"),
                                     (self.rate, self.accel, "accel")):
                fd = (np.asarray(fun(t + h), dtype=float)
                      - np.asarray(fun(t - h), dtype=float)) / (2.0 * h)
                stated = np.asarray(dfun(t), dtype=float)
                if fd.shape != (4,) or stated.shape != (4,):
                    raise ValueError("reference must return 4-vectors")
                if not np.allclose(fd, stated, rtol=1e-3,
                                   atol=1e-4 * (1.0 + abs(stated).max())):
                    raise ValueError(
                        "reference %s is inconsistent with its value at "
                        "t=%.3f (finite difference %s vs stated %s)"
                        % (label, t, fd, stated))


def hold_reference(x=0.0, y=0.0, z=0.0, psi=0.0, open_loop=(False, False)):
    """Constant setpoint; step responses come from the initial error."""
    sigma = np.array([x, y, z, psi], dtype=float)
    zero = np.zeros(4)
    return FlatReference(value=lambda t: sigma.copy(),
                         rate=lambda t: zero.copy(),
                         accel=lambda t: zero.copy(),
                         open_loop=open_loop)


def _trapezoid(tau, ramp):
    """Cruise profile s, s', s'' with cosine-smoothed speed ramps.

    Rest-to-rest over tau in [0, 1]: speed rises over `ramp`, holds at
    1/(1 - ramp), and falls over the final `ramp`.  Peak speed stays
    close to the mean, which suits a vehicle with a hard thrust cap.
    """
    tau = min(max(tau, 0.0), 1.0)
    gain = 1.0 / (1.0 - ramp)
    if tau < ramp:
        phase = math.pi * tau / ramp
        s = 0.5 * (tau - ramp / math.pi * math.sin(phase))
        sd = 0.5 * (1.0 - math.cos(phase))
        sdd = 0.5 * math.pi / ramp * math.sin(phase)
    elif tau <= 1.0 - ramp:
        s = tau - 0.5 * ramp
        sd = 1.0
        sdd = 0.0
    else:
        left = 1.0 - tau
        phase = math.pi * left / ramp
        s = 1.0 - ramp - 0.5 * (left - ramp / math.pi * math.sin(phase))
        sd = 0.5 * (1.0 - math.cos(phase))
        sdd = -0.5 * math.pi / ramp * math.sin(phase)
    return gain * s, gain * sd, gain * sdd


def semicircle_reference(radius=2.0, duration=60.0, depth=0.0,
                         open_loop=(False, False), ramp=0.25):
    """Half-circle sweep with the heading tangent to the path.

    The arc angle follows a smoothed trapezoidal rate profile (ramp
    fraction `ramp` at each end), so rates vanish at both ends and the
    pose holds after `duration`.  Starts at the origin heading +x,
    ends at (0, 2R) heading -x.
    """
    if radius <= 0.0 or duration <= 0.0:
        raise ValueError("radius and duration must be positive")
    if not 0.0 < ramp < 0.5:
        raise ValueError("ramp fraction must lie in (0, 0.5)")

    def angle(t):
        s, sd, sdd = _trapezoid(t / duration, ramp)
        return (math.pi * s, math.pi * sd / duration,
                math.pi * sdd / duration**2)

    def value(t):
        a, _, _ = angle(t)
        return np.array([radius * math.sin(a),
                         radius * (1.0 - math.cos(a)), depth, a])

    def rate(t):
        a, ad, _ = angle(t)
        return np.array([radius * math.cos(a) * ad,
                         radius * math.sin(a) * ad, 0.0, ad])

    def accel(t):
        a, ad, add = angle(t)
        return np.array([
            radius * (math.cos(a) * add - math.sin(a) * ad**2),
            radius * (math.sin(a) * add + math.cos(a) * ad**2),
            0.0, add])

    return FlatReference(value=value, rate=rate, accel=accel,
                         open_loop=open_loop,
                         check_times=(0.1 * duration, 0.5 * duration,
                                      0.9 * duration))


def output_state(q, qdot):
    """(sigma, sigma_dot) of a shell pose and body twist."""
    q = np.asarray(q, dtype=float)
    eta = np.asarray(qdot, dtype=float)
    rot = se3.euler_zyx_to_matrix(*q[0:3])
    pdot = rot @ eta[3:6]
    psidot = (se3.euler_zyx_rates_matrix(q[0], q[1]) @ eta[0:3])[2]
    sigma = np.array([q[3], q[4], q[5], q[2]])
    sigma_dot = np.array([pdot[0], pdot[1], pdot[2], psidot])
    return sigma, sigma_dot


def flat_pd_controller(t, q, qdot, ref, gains=None):
    """Desired output accelerations nu from the PD law on sigma.

    nu = accel_ref + Kd (rate_ref - rate) + Kp (value_ref - value) per
    closed-loop output; open-loop planar axes pass the commanded
    acceleration through unchanged.  The heading error is wrapped.
    """
    gains = gains or ControlGains()
    sigma, sigma_dot = output_state(q, qdot)
    acc_ref = np.asarray(ref.accel(t), dtype=float)
    err = np.asarray(ref.value(t), dtype=float) - sigma
    err[3] = wrap_angle(err[3])
    err_dot = np.asarray(ref.rate(t), dtype=float) - sigma_dot
    nu = acc_ref + gains.kd * err_dot + gains.kp * err
    for axis in (0, 1):
        if ref.open_loop[axis]:
            nu[axis] = acc_ref[axis]
    return nu


def wrench_from_nu(nu, q, qdot, params):
    """Desired CM wrench realizing the output accelerations nu.

    Inverse dynamics of the reduced model: inertia times the desired
    quasi-acceleration, minus its known restoring and drag terms; the
    roll and pitch moment channels are zeroed (passively stable).
    """
    nu = np.asarray(nu, dtype=float)
    q = np.asarray(q, dtype=float)
    eta = np.asarray(qdot, dtype=float)
    rot = se3.euler_zyx_to_matrix(*q[0:3])
    acc = np.zeros(6)
    acc[2] = nu[3]
    acc[3:6] = rot.T @ nu[0:3]
    wrench = params.inertia @ acc \
        - hydro.quadratic_drag_wrench(eta, params.drag) \
        - params.static_wrench(q)
    wrench[0:2] = 0.0
    return wrench


class TwinController:
    """Closes the flat PD loop around the full twin.

    Reads the shell pose straight off the twin state (perfect state
    feedback), runs the PD + allocation pipeline of the reduced model,
    and emits shaft speeds in the twin's prescribed coordinate order.
    Modules removed from the build simply drop their speed; no
    reallocation is attempted.  Each tick's decisions (nu, wrench,
    pair throttles, motor speeds) are returned in the info record.
    """

    def __init__(self, assembly, ref, params=None, gains=None):
        self.ref = ref
        self.params = params or shell_model.SimpleModelParams.from_drone()
        self.gains = gains or ControlGains()
        names = dynamics.prescribed_names(assembly)
        self.motor_index = np.array([int(n[1:3]) - 1 for n in names])

    def __call__(self, t, state):
        q = state.q[0:6]
        eta = state.qdot[0:6]
        nu = flat_pd_controller(t, q, eta, self.ref, self.gains)
        wrench = wrench_from_nu(nu, q, eta, self.params)
        throttle = shell_model.pair_inputs(wrench, self.params)
        omega = shell_model.speeds_from_pairs(throttle, self.params)
        info = {"nu": nu, "wrench": wrench, "pair_input": throttle,
                "omega": omega}
        return omega[self.motor_index], info


class SimpleController:
    """Same loop closed around the reduced plant for simple_simulate."""

    def __init__(self, ref, params, gains=None):
        self.ref = ref
        self.params = params
        self.gains = gains or ControlGains()

    def __call__(self, t, q, qdot):
        nu = flat_pd_controller(t, q, qdot, self.ref, self.gains)
        wrench = wrench_from_nu(nu, q, qdot, self.params)
        throttle = shell_model.pair_inputs(wrench, self.params)
        omega = shell_model.speeds_from_pairs(throttle, self.params)
        info = {"nu": nu, "wrench": wrench, "pair_input": throttle,
                "omega": omega}
        return omega, info
