"""Generalized dynamics of the assembly and time integration.

The equations of motion in quasi-velocities are

    M(q) qdd = sum_b J_b^T (F_ext,b + ad*_eta (M_b eta) - M_b Jd_b qd)
               - K q - D qd

summed over rigid links and rod quadrature sections, with M_b the
body-frame (material plus added-mass) section inertia.  Motor-shaft
coordinates are kinematic inputs: their accelerations come from the
motor program and the free block is solved with the prescribed
coupling moved to the right-hand side.

Two integrators: explicit RK4 for short validation runs, and a
first-order implicit (backward Euler, chord Newton with the analytic
stiffness/damping Jacobian) whose unconditional damping of the stiff
rod modes admits millisecond steps over minute-long scenarios.
"""

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import hydro, kinematics, links, se3

OMEGA_MAX = 130.0 * 2.0 * math.pi / 60.0   # rad/s, motor data sheet
MOTOR_TIME_CONSTANT = 0.1                  # s, shaft speed tracking lag
DAMPING_RATIO = 0.05                       # s, Kelvin-Voigt beta


class SimulationError(RuntimeError):
    """Integration failure carrying the time and state snapshot."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


# internal elastic forces


@dataclass
class InternalForceModel:
    """Diagonal DoF-space stiffness and Kelvin-Voigt damping.

    The scaled Legendre strain basis is orthogonal with Gram matrix
    L * I, so the stiffness integral collapses to a diagonal: each
    torsion coordinate carries G*J*L and each bending coordinate
    E*I*L.  Damping is beta * K.
    """

    stiffness: np.ndarray       # (n,)
    damping: np.ndarray         # (n,)
    beta: float

    @classmethod
    def from_assembly(cls, assembly, beta=DAMPING_RATIO):
        k = np.zeros(assembly.n_dofs)
        for link in assembly.links:
            if link.joint_kind != "soft":
                continue
            rigidity = [link.shear_modulus * link.polar_moment,
                        link.youngs_modulus * link.second_moment,
                        link.youngs_modulus * link.second_moment,
                        link.youngs_modulus * link.area,
                        link.shear_modulus * link.area,
                        link.shear_modulus * link.area]
            col = assembly.dof_slice(link.name).start
            for comp, order in enumerate(link.strain_basis):
                if order < 0:
                    continue
                k[col:col + order + 1] = rigidity[comp] * link.length
                col += order + 1
        return cls(stiffness=k, damping=beta * k, beta=beta)

    def generalized_force(self, q, qdot):
        return -(self.stiffness * q + self.damping * qdot)

    def elastic_energy(self, q):
        return 0.5 * float(self.stiffness @ (q * q))


# prescribed motor motion


class MotorProgram:
    """Commanded speeds for the prescribed shaft coordinates.

    `command(t)` returns the commanded speeds (rad/s) in prescribed
    coordinate order.  Shafts track the command through a first-order
    lag so accelerations stay finite across command steps; the zero
    time-constant limit is not offered because it would prescribe
    impulsive accelerations.
    """

    def __init__(self, assembly, command, time_constant=MOTOR_TIME_CONSTANT,
                 omega_max=OMEGA_MAX):
        if time_constant <= 0.0:
            raise ValueError("motor time constant must be positive")
        self.assembly = assembly
        self.command = command
        self.time_constant = time_constant
        self.omega_max = omega_max
        self.n_motors = len(assembly.prescribed_set)

    def commanded(self, t):
        # fresh array: the command callback may reuse mutable storage
        cmd = np.array(self.command(t), dtype=float)
        if cmd.shape != (self.n_motors,):
            raise ValueError("command has shape %s, expected (%d,)"
                             % (cmd.shape, self.n_motors))
        if np.any(np.abs(cmd) > self.omega_max + 1e-9):
            raise ValueError("commanded speed exceeds the motor limit")
        return cmd

    def acceleration(self, t, omega):
        return (self.commanded(t) - omega) / self.time_constant


def prescribed_names(assembly):
    """Link names of the prescribed coordinates, in coordinate order."""
    out = []
    for k in assembly.prescribed_set:
        for name, sl in assembly.dof_map.items():
            if sl.start <= k < sl.stop:
                out.append(name)
                break
    return out


def constant_speeds(assembly, speeds, **kwargs):
    """Motor program holding fixed speeds.

    Keys of `speeds` are motor numbers (mapped to the m##_shaft links)
    or prescribed link names; values are rad/s.
    """
    cmd = np.zeros(len(assembly.prescribed_set))
    order = list(assembly.prescribed_set)
    for key, omega in speeds.items():
        name = key if isinstance(key, str) else "m%02d_shaft" % key
        cmd[order.index(assembly.dof_map[name].start)] = omega
    return MotorProgram(assembly, lambda t: cmd, **kwargs)


# mass matrix and velocity bias


_STATIC = weakref.WeakKeyDictionary()


def _static_data(assembly):
    data = _STATIC.get(assembly)
    if data is None:
        data = {
            "inertia": {l.name: l.body_inertia for l in assembly.links
                        if isinstance(l, links.RigidLinkSpec)},
            "section": {l.name: rod_section_inertia(l) for l in assembly.links
                        if l.joint_kind == "soft"},
            "free": np.array(assembly.free_set, dtype=int),
            "prescribed": np.array(assembly.prescribed_set, dtype=int),
            "stacks": {},
        }
        _STATIC[assembly] = data
    return data


def _frame_inertia_stack(assembly, data, bucket, fd):
    """Stacked 6x6 inertias of one rigid-frame bucket, cached."""
    key = ("frame", bucket)
    Mm = data["stacks"].get(key)
    if Mm is None:
        Mm = np.stack([data["inertia"][name] for name in fd.names])
        data["stacks"][key] = Mm
    return Mm


def _rod_inertia_stack(assembly, data, bucket, rod):
    """Material section inertia stack plus the added-mass pattern."""
    key = ("rod", bucket)
    entry = data["stacks"].get(key)
    if entry is None:
        Mm = np.stack([data["section"][name] for name in rod.names])
        pattern = np.zeros_like(Mm)
        area = np.array([math.pi * assembly.link(n).cross_section_radius**2
                         for n in rod.names])
        pattern[:, 4, 4] = area
        pattern[:, 5, 5] = area
        entry = (Mm, pattern)
        data["stacks"][key] = entry
    return entry


def rod_section_inertia(spec):
    """Body-frame inertia of a rod cross section per unit length."""
    out = np.zeros((6, 6))
    out[0, 0] = spec.density * spec.polar_moment
    out[1, 1] = out[2, 2] = spec.density * spec.second_moment
    out[3, 3] = out[4, 4] = out[5, 5] = spec.density * spec.area
    return out


def _local_qdot(cache, branch_idx, qdot):
    cols = cache.col_map[branch_idx]
    return np.where(cols >= 0, qdot[np.clip(cols, 0, None)], 0.0)


def assemble(assembly, state, hydro_params=None, cache=None):
    """Mass matrix and velocity bias in one sweep.

    Returns (M, bias) with bias = sum J^T (ad*_eta(M eta) - M Jd qd),
    ready to sit on the right-hand side.  Added-mass section inertia
    is folded into M and into the bias so the fluid kinetic energy is
    bookkept consistently.
    """
    if cache is None:
        cache = kinematics.engine_for(assembly).evaluate(state)
    data = _static_data(assembly)
    n = assembly.n_dofs
    qdot = state.qdot
    M = np.zeros((n, n))
    bias = np.zeros(n)

    root_inertia = data["inertia"][assembly.root.name].copy()
    if hydro_params is not None:
        root_inertia += hydro_params.shell_added_mass
    if assembly.root.n_dofs == 6:
        M[:6, :6] += root_inertia
        h0 = root_inertia @ cache.root_eta
        bias[:6] += se3.coad_twist(cache.root_eta) @ h0

    n_branches = len(assembly.branches)
    if n_branches == 0:
        return M, bias
    C = cache.col_map.shape[1]
    loc_M = np.zeros((n_branches, C, C))
    loc_b = np.zeros((n_branches, C))

    for bucket, fd in enumerate(cache.frames):
        Mm = _frame_inertia_stack(assembly, data, bucket, fd)
        qdl = _local_qdot(cache, fd.branch_idx, qdot)
        h = (Mm @ fd.eta[..., None])[..., 0]
        wrench = (se3.coad_twist(fd.eta) @ h[..., None]
                  - Mm @ (fd.Jd @ qdl[..., None]))[..., 0]
        Jt = np.swapaxes(fd.J, -1, -2)
        loc_M[fd.branch_idx] += Jt @ (Mm @ fd.J)
        loc_b[fd.branch_idx] += (Jt @ wrench[..., None])[..., 0]

    for bucket, rod in enumerate(cache.rods):
        Mm, pattern = _rod_inertia_stack(assembly, data, bucket, rod)
        if hydro_params is not None:
            Mm = Mm + (hydro_params.water_density
                       * hydro_params.rod_added_mass) * pattern
        qdl = _local_qdot(cache, rod.branch_idx, qdot)
        J = rod.J[:, rod.quad]
        Jd = rod.Jd[:, rod.quad]
        eta = rod.eta[:, rod.quad]
        Mn = Mm[:, None]
        h = (Mn @ eta[..., None])[..., 0]
        wrench = (se3.coad_twist(eta) @ h[..., None]
                  - Mn @ (Jd @ qdl[:, None, :, None]))[..., 0]
        Jt = np.swapaxes(J, -1, -2)
        w = rod.weights[None, :, None, None]
        loc_M[rod.branch_idx] += (Jt @ (Mn @ (w * J))).sum(axis=1)
        loc_b[rod.branch_idx] += (Jt @ (w * wrench[..., None])).sum(
            axis=1)[..., 0]

    for b in range(n_branches):
        kinematics.scatter_add_matrix(M, cache.col_map[b], loc_M[b])
        kinematics.scatter_add_vector(bias, cache.col_map[b], loc_b[b])
    return M, bias


def mass_matrix(assembly, state, hydro_params=None, cache=None):
    """Generalized mass matrix (material plus added mass)."""
    return assemble(assembly, state, hydro_params, cache)[0]


def generalized_accel(assembly, state, motor=None, t=0.0, *,
                      hydro_params=None, internal=None, extra_forces=None,
                      cache=None, details=False):
    """Accelerations of every coordinate at one instant.

    Prescribed coordinates take their acceleration from the motor
    program (zero without one); the free block solves
    M_ff qdd_f = rhs_f - M_fp qdd_p.
    """
    if cache is None:
        cache = kinematics.engine_for(assembly).evaluate(state)
    data = _static_data(assembly)
    M, rhs = assemble(assembly, state, hydro_params, cache)
    if hydro_params is not None:
        rhs += hydro.generalized_loads(assembly, state, hydro_params,
                                       cache=cache)
    if internal is not None:
        rhs += internal.generalized_force(state.q, state.qdot)
    if extra_forces is not None:
        rhs += np.asarray(extra_forces(t, state, cache), dtype=float)

    free, pres = data["free"], data["prescribed"]
    qdd = np.zeros(assembly.n_dofs)
    if pres.size and motor is not None:
        qdd[pres] = motor.acceleration(t, state.qdot[pres])
    take = rhs[free]
    if pres.size:
        take = take - M[np.ix_(free, pres)] @ qdd[pres]
    m_ff = M[np.ix_(free, free)]
    try:
        qdd[free] = np.linalg.solve(m_ff, take)
    except np.linalg.LinAlgError:
        raise SimulationError("singular mass matrix", state=state)
    if details:
        return qdd, {"mass": M, "rhs": rhs,
                     "reaction": (M @ qdd - rhs)[pres]}
    return qdd


# diagnostics


def energy_terms(assembly, state, hydro_params=None, internal=None,
                 cache=None):
    """Kinetic, potential, and elastic energy as a dict, J."""
    if cache is None:
        cache = kinematics.engine_for(assembly).evaluate(state)
    M, _ = assemble(assembly, state, hydro_params, cache)
    out = {"kinetic": 0.5 * float(state.qdot @ M @ state.qdot),
           "potential": 0.0, "elastic": 0.0}
    if hydro_params is not None:
        out["potential"] = hydro.potential_energy(assembly, state,
                                                  hydro_params, cache=cache)
    if internal is not None:
        out["elastic"] = internal.elastic_energy(state.q)
    return out


def energy(assembly, state, hydro_params=None, internal=None, cache=None):
    """Total mechanical energy, J."""
    return sum(energy_terms(assembly, state, hydro_params, internal,
                            cache).values())


def linear_momentum(assembly, state, cache=None):
    """World-frame linear momentum of the body mass, kg m/s."""
    if cache is None:
        cache = kinematics.engine_for(assembly).evaluate(state)
    data = _static_data(assembly)
    h = data["inertia"][assembly.root.name] @ cache.root_eta
    p = cache.root_g[:3, :3] @ h[3:]
    for bucket, fd in enumerate(cache.frames):
        Mm = _frame_inertia_stack(assembly, data, bucket, fd)
        h = np.einsum("rab,rb->ra", Mm, fd.eta)
        p = p + np.einsum("rab,rb->a", fd.g[:, :3, :3], h[:, 3:])
    for bucket, rod in enumerate(cache.rods):
        Mm = _rod_inertia_stack(assembly, data, bucket, rod)[0]
        h = np.einsum("rab,rib->ria", Mm, rod.eta[:, rod.quad])
        p = p + np.einsum("i,riab,rib->a", rod.weights,
                          rod.g[:, rod.quad, :3, :3], h[..., 3:])
    return p


def coordinate_rates(assembly, state):
    """Map quasi-velocities to coordinate time derivatives."""
    rates = state.qdot.copy()
    if assembly.root.n_dofs == 6:
        phi, theta, psi = state.q[0:3]
        if abs(math.cos(theta)) < 1e-8:
            raise SimulationError("pitch at the Euler-angle singularity")
        rates[0:3] = se3.euler_zyx_rates_matrix(phi, theta) @ state.qdot[0:3]
        rates[3:6] = se3.euler_zyx_to_matrix(phi, theta, psi) @ state.qdot[3:6]
    return rates


# integration


@dataclass
class Trajectory:
    """Sampled simulation output plus controller tick records."""

    t: np.ndarray               # (S,)
    q: np.ndarray               # (S, n)
    qdot: np.ndarray            # (S, n)
    kinetic: np.ndarray         # (S,)
    potential: np.ndarray      # (S,)
    elastic: np.ndarray         # (S,)
    motor_command: np.ndarray   # (S, P)
    motor_torque: np.ndarray    # (S, P)
    ticks: list = field(default_factory=list)

    @property
    def total_energy(self):
        return self.kinetic + self.potential + self.elastic


def _steps_per(period, dt, what):
    k = int(round(period / dt))
    if k < 1 or abs(k * dt - period) > 1e-9 * max(1.0, period):
        raise ValueError("%s (%g s) must be a multiple of dt (%g s)"
                         % (what, period, dt))
    return k


def _rates(assembly, state, motor, t, hp, internal, extra):
    return (coordinate_rates(assembly, state),
            generalized_accel(assembly, state, motor, t, hydro_params=hp,
                              internal=internal, extra_forces=extra))


def _rk4_step(assembly, state, motor, t, dt, hp, internal, extra):
    def offset(a, dq, dv):
        return links.GeneralizedState(state.q + a * dq, state.qdot + a * dv)

    k1q, k1v = _rates(assembly, state, motor, t, hp, internal, extra)
    k2q, k2v = _rates(assembly, offset(0.5 * dt, k1q, k1v), motor,
                      t + 0.5 * dt, hp, internal, extra)
    k3q, k3v = _rates(assembly, offset(0.5 * dt, k2q, k2v), motor,
                      t + 0.5 * dt, hp, internal, extra)
    k4q, k4v = _rates(assembly, offset(dt, k3q, k3v), motor, t + dt,
                      hp, internal, extra)
    dq = (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    dv = (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return links.GeneralizedState(state.q + dq, state.qdot + dv)


def _implicit_step(assembly, state, motor, t, dt, hp, internal, extra,
                   iters, tol):
    """Backward Euler via chord Newton.

    The chord Jacobian keeps the stiff analytic part (mass, elastic
    stiffness, damping) and drops slow couplings; the residual is the
    full nonlinear one, so a converged step is exact backward Euler.
    """
    n = assembly.n_dofs
    k_diag = internal.stiffness if internal is not None else np.zeros(n)
    d_diag = internal.damping if internal is not None else np.zeros(n)
    q0, v0 = state.q, state.qdot
    qi, vi = q0.copy(), v0.copy()
    m0 = S = None
    for it in range(iters):
        it_state = links.GeneralizedState(qi, vi)
        cr = coordinate_rates(assembly, it_state)
        acc, det = generalized_accel(assembly, it_state, motor, t + dt,
                                     hydro_params=hp, internal=internal,
                                     extra_forces=extra, details=True)
        if it == 0:
            # first iterate sits at the step start, so its mass matrix
            # is the chord mass
            m0 = det["mass"]
            S = m0 + dt * np.diag(d_diag) + dt * dt * np.diag(k_diag)
        r_q = qi - q0 - dt * cr
        r_v = vi - v0 - dt * acc
        rhs = -(m0 @ r_v) + dt * (k_diag * r_q)
        dv = np.linalg.solve(S, rhs)
        dq = -r_q + dt * dv
        qi = qi + dq
        vi = vi + dv
        if max(np.max(np.abs(dq)), np.max(np.abs(dv))) < tol:
            break
    return links.GeneralizedState(qi, vi)


def simulate(assembly, initial, t_end, *, motor=None, controller=None,
             control_dt=0.1, hydro_params=None, internal=None,
             extra_forces=None, dt=2e-4, method="rk4", newton_iters=3,
             newton_tol=1e-10, log_dt=0.02):
    """Integrate the twin and sample it at the logging rate.

    `motor` prescribes shaft speeds open loop; alternatively a
    `controller(t, state) -> (speeds, info)` callback is sampled every
    `control_dt` and held between ticks (the speeds arrive in
    prescribed coordinate order).  Deterministic: fixed step, fixed
    evaluation order, no hidden state.
    """
    if motor is not None and controller is not None:
        raise ValueError("pass either a motor program or a controller")
    if method not in ("rk4", "implicit"):
        raise ValueError("unknown integrator %r" % method)
    n_steps = _steps_per(t_end, dt, "t_end")
    n_log = _steps_per(log_dt, dt, "log_dt")
    n_ctl = _steps_per(control_dt, dt, "control_dt") if controller else 0

    data = _static_data(assembly)
    pres = data["prescribed"]
    held = np.zeros(pres.size)
    if controller is not None:
        motor = MotorProgram(assembly, lambda t: held)

    state = initial.copy()
    ticks = []
    samples = {k: [] for k in ("t", "q", "qdot", "kinetic", "potential",
                               "elastic", "command", "torque")}

    for k in range(n_steps + 1):
        t = k * dt
        if controller is not None and k % n_ctl == 0 and k < n_steps:
            speeds, info = controller(t, state)
            held[:] = np.asarray(speeds, dtype=float)
            ticks.append({"t": t, "command": held.copy(), "info": info})
        if k % n_log == 0 or k == n_steps:
            cache = kinematics.engine_for(assembly).evaluate(state)
            _, det = generalized_accel(
                assembly, state, motor, t, hydro_params=hydro_params,
                internal=internal, extra_forces=extra_forces, cache=cache,
                details=True)
            terms = energy_terms(assembly, state, hydro_params, internal,
                                 cache=cache)
            samples["t"].append(t)
            samples["q"].append(state.q.copy())
            samples["qdot"].append(state.qdot.copy())
            samples["kinetic"].append(terms["kinetic"])
            samples["potential"].append(terms["potential"])
            samples["elastic"].append(terms["elastic"])
            samples["command"].append(
                motor.commanded(t) if motor is not None else np.zeros(0))
            samples["torque"].append(det["reaction"])
        if k == n_steps:
            break
        # a blowing-up step may overflow before the finite check; the
        # check is the error path, so silence the intermediate warnings
        with np.errstate(over="ignore", invalid="ignore"):
            if method == "rk4":
                state = _rk4_step(assembly, state, motor, t, dt,
                                  hydro_params, internal, extra_forces)
            else:
                state = _implicit_step(assembly, state, motor, t, dt,
                                       hydro_params, internal, extra_forces,
                                       newton_iters, newton_tol)
        if not (np.all(np.isfinite(state.q))
                and np.all(np.isfinite(state.qdot))):
            raise SimulationError(
                "integration diverged at t = %.6f s" % (t + dt),
                t=t + dt, state=state)

    return Trajectory(
        t=np.array(samples["t"]),
        q=np.array(samples["q"]),
        qdot=np.array(samples["qdot"]),
        kinetic=np.array(samples["kinetic"]),
        potential=np.array(samples["potential"]),
        elastic=np.array(samples["elastic"]),
        motor_command=np.array(samples["command"]),
        motor_torque=np.array(samples["torque"]),
        ticks=ticks)
