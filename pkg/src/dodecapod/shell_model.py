"""Shell-only 6-DoF vehicle model and the motor allocation algebra.

The full twin resolves every flagellum; this model collapses each one
to a point thruster at its face center: force c_T w^2 into the face
and reaction moment -sign(w) c_M w^2 about the face normal.  Opposite
faces combine into one signed pair throttle Omega_j = w_a^2 - w_b^2,
which makes the aggregate wrench exactly linear in the 6-vector Omega
and the wrench-to-speed inversion algebraic.

Frames: body frame at the center of mass, angular components first,
pose (phi, theta, psi, x, y, z) with body-twist rates, matching the
twin's root conventions.  Every thrust line passes through its face
center along the normal, so thrust alone contributes only the fixed
cg-offset lever d z x F; independent moments must come from the spin
reactions.  The two motors of a pair share one predefined direction
(the aggregate wrench stays linear in the signed throttle), and the
default table splits the six pairs into two trios whose thrust axes
each span all of space: only such a split makes the allocation full
rank (a uniform table, or polar versus ring, collapses it to rank 3
or 4).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, geometry, hydro, links, se3

log = logging.getLogger(__name__)

OMEGA_MAX = dynamics.OMEGA_MAX
CAP_FRACTION = 0.8

# first three pairs spin against the last three; see module docstring
DEFAULT_SPIN_SIGN = (1, 1, 1, 1, 1, 1, -1, -1, -1, -1, -1, -1)

# vehicle-level quadratic drag (angular then linear axes), fitted
# against the twin by calibrate-shell-drag
DEFAULT_VEHICLE_DRAG = (0.25, 0.25, 0.25, 33.0, 33.0, 36.0)

# thrust/reaction coefficients, fitted by calibrate-thrust so full
# forward speed and yaw rate land on the reported performance
DEFAULT_THRUST_COEF = 1.5e-4
DEFAULT_REACTION_COEF = 1.5e-5


@dataclass
class SimpleModelParams:
    """Parameters of the reduced vehicle model.

    `inertia` is the 6x6 spatial inertia about the CM including added
    mass; `face_position` holds the motor locations relative to the
    CM.  `spin_sign` fixes which way each motor turns when driven; the
    allocation algebra assumes the two motors of a pair share a sign.
    """

    inertia: np.ndarray
    mass: float
    cg_drop: float
    face_position: np.ndarray          # (12, 3), m from the CM
    face_normal: np.ndarray            # (12, 3), unit outward
    thrust_coef: float = DEFAULT_THRUST_COEF
    reaction_coef: float = DEFAULT_REACTION_COEF
    spin_sign: tuple = DEFAULT_SPIN_SIGN
    pairs: tuple = geometry.PAIRS
    drag: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_VEHICLE_DRAG))
    net_weight: float = 0.0           # N, positive sinks
    gravity: float = hydro.GRAVITY
    omega_max: float = OMEGA_MAX
    cap_fraction: float = CAP_FRACTION

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.face_position = np.asarray(self.face_position, dtype=float)
        self.face_normal = np.asarray(self.face_normal, dtype=float)
        self.drag = np.asarray(self.drag, dtype=float)
        if self.drag.ndim == 1:
            self.drag = np.diag(self.drag)
        self.spin_sign = tuple(int(s) for s in self.spin_sign)
        self.pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        self.validate()

    def validate(self):
        if self.inertia.shape != (6, 6):
            raise ValueError("inertia must be 6x6")
        if not np.allclose(self.inertia, self.inertia.T,
                           atol=1e-9 * abs(self.inertia).max()):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(self.inertia)[0] <= 0.0:
            raise ValueError("inertia must be positive definite")
        if self.mass <= 0.0 or self.omega_max <= 0.0:
            raise ValueError("mass and omega_max must be positive")
        if not 0.0 < self.cap_fraction <= 1.0:
            raise ValueError("cap_fraction must lie in (0, 1]")
        if self.thrust_coef <= 0.0:
            raise ValueError("thrust coefficient must be positive")
        if self.reaction_coef < 0.0:
            raise ValueError("reaction coefficient must be nonnegative")
        if self.face_position.shape != (12, 3) \
                or self.face_normal.shape != (12, 3):
            raise ValueError("face table needs 12 positions and normals")
        if len(self.spin_sign) != 12 \
                or any(s not in (-1, 1) for s in self.spin_sign):
            raise ValueError("spin signs must be +-1 per motor")
        if self.drag.shape != (6, 6):
            raise ValueError("drag must be a 6-vector diagonal or 6x6")
        seen = set()
        for a, b in self.pairs:
            seen.update((a, b))
            if np.linalg.norm(self.face_normal[a]
                              + self.face_normal[b]) > 1e-9:
                raise ValueError(
                    "pair (%d, %d) normals are not antiparallel" % (a, b))
            if self.spin_sign[a] != self.spin_sign[b]:
                log.warning("pair (%d, %d) spin signs differ; the "
                            "allocation is only linear for matched signs",
                            a, b)
        if len(self.pairs) != 6 or seen != set(range(12)):
            raise ValueError("pairs must partition the 12 motors")

    @classmethod
    def from_drone(cls, drone=None, water=None, **overrides):
        """Derive the reduced model from the full twin's build.

        Mass and inertia (material plus added) come from the assembled
        twin at the neutral pose, shifted from the geometric center to
        the CM; flagella are frozen straight in that snapshot.
        """
        drone = drone or links.DroneParams()
        water = water or hydro.HydroParams()
        asm = links.build_drone_assembly(drone)
        state = links.neutral_state(asm)
        m_center = dynamics.mass_matrix(asm, state, water)[:6, :6]
        shift = se3.adjoint_of_pose(
            links.pose_from(translation=(0.0, 0.0, -drone.cg_drop)))
        inertia = shift.T @ m_center @ shift
        inertia = 0.5 * (inertia + inertia.T)
        centers = geometry.face_centers(drone.edge_length)
        fields = dict(
            inertia=inertia,
            mass=drone.total_mass,
            cg_drop=drone.cg_drop,
            face_position=centers + np.array([0.0, 0.0, drone.cg_drop]),
            face_normal=geometry.face_normals(),
        )
        fields.update(overrides)
        return cls(**fields)

    @property
    def speed_cap(self):
        return self.cap_fraction * self.omega_max

    def static_wrench(self, q):
        """Weight plus buoyancy about the CM at pose q, body frame.

        Buoyancy m g - net_weight acts at the center of volume, a
        height cg_drop above the CM; weight acts at the CM itself.
        """
        rot = se3.euler_zyx_to_matrix(*q[0:3])
        f_buoy = rot.T @ np.array(
            [0.0, 0.0, self.mass * self.gravity - self.net_weight])
        out = np.zeros(6)
        out[:3] = np.cross([0.0, 0.0, self.cg_drop], f_buoy)
        out[3:] = rot.T @ np.array([0.0, 0.0, -self.net_weight])
        return out


def motor_wrench(omega, params):
    """Aggregate body wrench of the twelve point thrusters at the CM.

    Thrust c_T w^2 pushes into each face (even in w); the reaction
    moment -sign(w) c_M w^2 n is odd in w.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (12,):
        raise ValueError("expected 12 motor speeds")
    if np.any(np.abs(omega) > params.omega_max + 1e-9):
        raise ValueError("motor speed exceeds the cap")
    w2 = omega**2
    force = -params.thrust_coef * w2[:, None] * params.face_normal
    moment = np.cross(params.face_position, force) \
        - (np.sign(omega) * params.reaction_coef * w2)[:, None] \
        * params.face_normal
    out = np.zeros(6)
    out[:3] = moment.sum(axis=0)
    out[3:] = force.sum(axis=0)
    return out


def allocation_matrix(params):
    """6x6 map A from pair throttles to the CM wrench, F = A Omega.

    Column j is the wrench of pair j's throttle-positive motor spun at
    1 rad/s in its predefined direction; antiparallel geometry and the
    shared pair spin sign make the same column exact for Omega_j < 0.
    """
    a = np.zeros((6, 6))
    for j, (first, _) in enumerate(params.pairs):
        speeds = np.zeros(12)
        speeds[first] = params.spin_sign[first]
        a[:, j] = motor_wrench(speeds, params)
    return a


def allocation_condition(params):
    """Condition number of the allocation matrix."""
    return float(np.linalg.cond(allocation_matrix(params)))


def pair_inputs(wrench, params):
    """Invert the allocation: pair throttles realizing a CM wrench.

    Solved in the least-squares sense, so a rank-deficient allocation
    (a geometry/config error, caught by scenario validation) degrades
    to the realizable part instead of blowing up mid-run.
    """
    wrench = np.asarray(wrench, dtype=float)
    if wrench.shape != (6,) or not np.all(np.isfinite(wrench)):
        raise ValueError("wrench must be a finite 6-vector")
    a = allocation_matrix(params)
    cond = np.linalg.cond(a)
    if cond > 1e12:
        log.warning("allocation matrix is near singular (cond %.3e)", cond)
    omega_sq, *_ = np.linalg.lstsq(a, wrench, rcond=None)
    return omega_sq


def speeds_from_pairs(pair_input, params):
    """Signed motor speeds for the pair throttles, one motor per pair.

    Each throttle drives the first motor of its pair when positive and
    the second when negative, at sqrt magnitude in the predefined spin
    direction, capped at 0.8 omega_max (saturation logged, not fatal).
    """
    speeds = np.zeros(12)
    cap = params.speed_cap
    for j, (first, second) in enumerate(params.pairs):
        value = pair_input[j]
        motor = first if value >= 0.0 else second
        mag = math.sqrt(abs(value))
        if mag > cap:
            log.debug("pair %d saturated: %.2f -> %.2f rad/s", j, mag, cap)
            mag = cap
        speeds[motor] = params.spin_sign[motor] * mag
    return speeds


def allocate(wrench, params):
    """Twelve capped motor speeds realizing a desired CM wrench."""
    return speeds_from_pairs(pair_inputs(wrench, params), params)


GIMBAL_LIMIT = math.radians(80.0)


def simple_forward(q, qdot, omega, params):
    """State derivative of the reduced model.

    Returns (qrate, qacc, flags): coordinate rates of the Euler-angle
    pose, quasi-velocity accelerations, and diagnostic flags (gimbal
    proximity |theta| > 80 deg).
    """
    q = np.asarray(q, dtype=float)
    eta = np.asarray(qdot, dtype=float)
    flags = {"gimbal_proximity": bool(abs(q[1]) > GIMBAL_LIMIT)}

    wrench = params.static_wrench(q)
    wrench = wrench + hydro.quadratic_drag_wrench(eta, params.drag)
    wrench = wrench + motor_wrench(omega, params)
    wrench = wrench + se3.coad_twist(eta) @ (params.inertia @ eta)
    qacc = np.linalg.solve(params.inertia, wrench)

    qrate = np.empty(6)
    qrate[0:3] = se3.euler_zyx_rates_matrix(q[0], q[1]) @ eta[0:3]
    qrate[3:6] = se3.euler_zyx_to_matrix(*q[0:3]) @ eta[3:6]
    return qrate, qacc, flags


def simple_simulate(q0, qdot0, t_end, speeds, params, dt=1e-3,
                    control_dt=0.1, log_dt=0.02, extra_wrench=None):
    """RK4 rollout of the reduced model under a speed source.

    `speeds` is either a (12,) array held constant or a callback
    ``speeds(t, q, qdot) -> (omega, info)`` sampled every `control_dt`
    and held between ticks.  `extra_wrench`, if given, is a callback
    ``extra_wrench(t, q, qdot) -> (6,)`` body-frame wrench added to the
    shell load sum (scripted disturbances).  Returns a dict of sampled
    arrays plus the tick records and accumulated flags.
    """
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a multiple of dt")
    n_log = max(1, int(round(log_dt / dt)))
    n_ctl = max(1, int(round(control_dt / dt)))

    q = np.array(q0, dtype=float)
    v = np.array(qdot0, dtype=float)
    held = np.zeros(12)
    callback = callable(speeds)
    if not callback:
        held[:] = np.asarray(speeds, dtype=float)

    out = {"t": [], "q": [], "qdot": [], "omega": []}
    ticks = []
    gimbal = False

    def deriv(ti, qi, vi):
        qrate, qacc, flags = simple_forward(qi, vi, held, params)
        if extra_wrench is not None:
            bump = np.asarray(extra_wrench(ti, qi, vi), dtype=float)
            qacc = qacc + np.linalg.solve(params.inertia, bump)
        return qrate, qacc, flags

    for k in range(n_steps + 1):
        t = k * dt
        if callback and k % n_ctl == 0 and k < n_steps:
            cmd, info = speeds(t, q, v)
            held[:] = cmd
            ticks.append({"t": t, "omega": held.copy(), "info": info})
        if k % n_log == 0 or k == n_steps:
            out["t"].append(t)
            out["q"].append(q.copy())
            out["qdot"].append(v.copy())
            out["omega"].append(held.copy())
        if k == n_steps:
            break
        k1q, k1v, f1 = deriv(t, q, v)
        k2q, k2v, _ = deriv(t + 0.5 * dt, q + 0.5 * dt * k1q, v + 0.5 * dt * k1v)
        k3q, k3v, _ = deriv(t + 0.5 * dt, q + 0.5 * dt * k2q, v + 0.5 * dt * k2v)
        k4q, k4v, _ = deriv(t + dt, q + dt * k3q, v + dt * k3v)
        q = q + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise dynamics.SimulationError(
                "reduced model diverged at t=%.6f" % (t + dt), t=t + dt)
        gimbal = gimbal or f1["gimbal_proximity"]

    return {"t": np.array(out["t"]), "q": np.array(out["q"]),
            "qdot": np.array(out["qdot"]), "omega": np.array(out["omega"]),
            "ticks": ticks, "gimbal_proximity": gimbal}
