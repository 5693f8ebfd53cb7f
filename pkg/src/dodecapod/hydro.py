"""Hydrostatic and hydrodynamic load models.

The flagella see slender-body resistive forces: per-length quadratic
drag split into tangential and normal components, an optional lift
term orthogonal to the local axis and the normal flow, and a
transverse added-mass section inertia.  The shell is a lumped 6-DoF
body with configurable quadratic drag and added-mass matrices.  All
load densities are odd in the relative velocity; buoyancy and gravity
are velocity independent, so hydrostatic terms derive from a potential
and the drag terms only ever remove energy.

Wrenches and twists stack the angular part first.  Water is at rest;
the relative flow at a section is its own body-frame velocity.  Drag
on the small rigid shaft and hook links is neglected (they spin close
to the hull, inside its boundary layer); their weight and buoyancy are
kept.
"""

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from . import kinematics, links, se3

GRAVITY = 9.81  # m/s^2

# shell matrices start at slender-body estimates for the hull and are
# refined by the calibration subcommands; angular block first
DEFAULT_SHELL_DRAG = (0.2, 0.2, 0.2, 30.0, 30.0, 30.0)
DEFAULT_SHELL_ADDED_MASS = (0.002, 0.002, 0.002, 5.4, 5.4, 5.4)


def _as_matrix6(value):
    value = np.asarray(value, dtype=float)
    if value.shape == (6,):
        value = np.diag(value)
    if value.shape != (6, 6):
        raise ValueError("expected a 6-vector diagonal or a 6x6 matrix")
    return value


@dataclass
class HydroParams:
    """Fluid environment and load-model coefficients.

    Rod coefficients follow the resistive-force convention: force per
    length = 0.5 * rho * C * (2r) * |v| * v for each decomposed
    component.  `rod_added_mass` is the transverse added-mass
    coefficient Ca (added mass per length = rho * Ca * pi * r^2).
    """

    water_density: float = 1000.0       # kg/m^3
    gravity: float = GRAVITY            # m/s^2, acting along -z world
    rod_drag_normal: float = 1.1        # Cd_n
    rod_drag_tangent: float = 0.01      # Cd_t
    rod_lift: float = 0.0               # Cl
    rod_added_mass: float = 1.0         # Ca
    shell_drag: np.ndarray = field(default_factory=lambda: DEFAULT_SHELL_DRAG)
    shell_added_mass: np.ndarray = field(
        default_factory=lambda: DEFAULT_SHELL_ADDED_MASS)

    def __post_init__(self):
        self.shell_drag = _as_matrix6(self.shell_drag)
        self.shell_added_mass = _as_matrix6(self.shell_added_mass)
        self.validate()

    def validate(self):
        if self.water_density <= 0.0:
            raise ValueError("water density must be positive")
        if self.gravity < 0.0:
            raise ValueError("gravity must be >= 0")
        for fname in ("rod_drag_normal", "rod_drag_tangent", "rod_lift",
                      "rod_added_mass"):
            if getattr(self, fname) < 0.0:
                raise ValueError("%s must be >= 0" % fname)
        for fname in ("shell_drag", "shell_added_mass"):
            mat = getattr(self, fname)
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError("%s must be symmetric" % fname)
            if np.linalg.eigvalsh(mat).min() < -1e-12:
                raise ValueError("%s must be positive semidefinite" % fname)


@dataclass
class BuoyancyModel:
    """Hydrostatic summary of one assembly configuration."""

    displaced_volume: float             # m^3
    center_of_buoyancy_offset: np.ndarray  # CB - CG, world frame, m
    net_mass: float                     # kg

    def buoyancy_residual(self, params):
        """Displaced mass minus body mass, kg (0 when neutral)."""
        return params.water_density * self.displaced_volume - self.net_mass

    def is_neutral(self, params, tol=1e-6):
        return abs(self.buoyancy_residual(params)) <= tol * self.net_mass


def _rigid_mass_properties(spec):
    """(mass, CoM, volume, CB) of a rigid link in its own frame."""
    mass = spec.body_inertia[5, 5]
    com = se3.unskew(spec.body_inertia[:3, 3:]) / mass
    return mass, com, spec.geometry.volume, \
        np.asarray(spec.geometry.buoyancy_center, dtype=float)


def rigid_static_wrench(pose, params, *, mass, com, volume, cb):
    """Gravity at the CoM plus buoyancy at the CB, as a body wrench."""
    rot = np.asarray(pose, dtype=float)[..., :3, :3]
    g_body = np.einsum("...ji,j->...i", rot,
                       np.array([0.0, 0.0, -params.gravity]))
    f_grav = mass * g_body
    f_buoy = -params.water_density * volume * g_body
    out = np.zeros(g_body.shape[:-1] + (6,))
    out[..., :3] = np.cross(com, f_grav) + np.cross(cb, f_buoy)
    out[..., 3:] = f_grav + f_buoy
    return out


def quadratic_drag_wrench(eta, drag_matrix):
    """-D (eta o |eta|): per-axis quadratic damping, odd in eta."""
    eta = np.asarray(eta, dtype=float)
    return -np.einsum("ij,...j->...i", drag_matrix, eta * np.abs(eta))


def shell_load(pose, eta, params, shell):
    """Hydrostatic restoring plus quadratic drag on a rigid hull.

    For a neutrally buoyant body with the CB a height d above the CoM
    this produces the metacentric moment m g d sin(tilt) opposing the
    tilt, and zero wrench level at rest.
    """
    mass, com, volume, cb = _rigid_mass_properties(shell)
    wrench = rigid_static_wrench(pose, params, mass=mass, com=com,
                                 volume=volume, cb=cb)
    return wrench + quadratic_drag_wrench(eta, params.shell_drag)


def rod_load_density(pose, eta, params, *, radius, area, density):
    """Environmental wrench per meter on a rod section, body frame.

    Combines net weight/buoyancy of the section, quadratic drag
    decomposed along the local axis (x) and across it, and lift
    orthogonal to both the axis and the normal flow.  Broadcasts over
    leading axes of `pose`/`eta`; the section scalars may carry
    matching leading axes as well.
    """
    pose = np.asarray(pose, dtype=float)
    eta = np.asarray(eta, dtype=float)
    radius = np.asarray(radius, dtype=float)
    area = np.asarray(area, dtype=float)
    density = np.asarray(density, dtype=float)

    rot = pose[..., :3, :3]
    g_body = np.einsum("...ji,j->...i", rot,
                       np.array([0.0, 0.0, -params.gravity]))
    static = ((density - params.water_density) * area)[..., None] * g_body

    v = eta[..., 3:]
    v_t = np.zeros_like(v)
    v_t[..., 0] = v[..., 0]
    v_n = v - v_t
    vn_norm = np.linalg.norm(v_n, axis=-1)
    stream = params.water_density * radius  # 0.5 * rho * (2 r)
    drag = -(stream * params.rod_drag_tangent * np.abs(v[..., 0]))[..., None] \
        * v_t
    drag = drag - (stream * params.rod_drag_normal * vn_norm)[..., None] * v_n
    axis = np.zeros_like(v)
    axis[..., 0] = 1.0
    lift = (stream * params.rod_lift * vn_norm)[..., None] \
        * np.cross(axis, v_n)

    force = static + drag + lift
    out = np.zeros(force.shape[:-1] + (6,))
    out[..., 3:] = force
    return out


def rod_added_inertia(params, radius):
    """Transverse-only added-mass section matrix, kg/m."""
    m_t = params.water_density * params.rod_added_mass * math.pi * radius**2
    out = np.zeros((6, 6))
    out[4, 4] = out[5, 5] = m_t
    return out


_STATIC = weakref.WeakKeyDictionary()


def _static_store(assembly):
    store = _STATIC.get(assembly)
    if store is None:
        store = {}
        _STATIC[assembly] = store
    return store


def _rod_sections(assembly, rod, bucket=None):
    """Per-member (radius, area, density) column vectors of a rod batch."""
    store = _static_store(assembly)
    key = ("rod", bucket)
    if bucket is None or key not in store:
        specs = [assembly.link(name) for name in rod.names]
        radius = np.array([s.cross_section_radius for s in specs])[:, None]
        area = np.array([s.area for s in specs])[:, None]
        density = np.array([s.density for s in specs])[:, None]
        if bucket is None:
            return radius, area, density
        store[key] = (radius, area, density)
    return store[key]


def _frame_statics(assembly, fd, bucket):
    """Stacked (mass, com, volume, cb) of one rigid-frame bucket."""
    store = _static_store(assembly)
    key = ("frame", bucket)
    if key not in store:
        props = [_rigid_mass_properties(assembly.link(name))
                 for name in fd.names]
        store[key] = tuple(np.array([p[k] for p in props])
                           for k in range(4))
    return store[key]


def added_mass_contribution(assembly, state, params, cache=None):
    """DoF-space added-mass matrix: sum of J^T M_a J over the body.

    Rods use the transverse section added mass integrated over their
    quadrature grid; the shell adds its lumped 6x6 matrix on the base
    coordinates.  Symmetric and positive semidefinite by construction.
    """
    engine = kinematics.engine_for(assembly)
    if cache is None:
        cache = engine.evaluate(state)
    out = np.zeros((assembly.n_dofs, assembly.n_dofs))
    if assembly.root.n_dofs == 6:
        out[:6, :6] += params.shell_added_mass
    coef = params.water_density * params.rod_added_mass * math.pi
    for bucket, rod in enumerate(cache.rods):
        radius, _, _ = _rod_sections(assembly, rod, bucket)
        m_t = coef * radius[:, 0]**2
        j_n = rod.J[:, rod.quad, 4:6, :]
        local = np.einsum("i,r,riac,riad->rcd", rod.weights, m_t, j_n, j_n)
        for m, branch in enumerate(rod.branch_idx):
            kinematics.scatter_add_matrix(out, cache.col_map[branch], local[m])
    return out


def generalized_loads(assembly, state, params, cache=None):
    """Generalized force of all drag and hydrostatic loads.

    Maps the shell wrench through the base coordinates, rigid-link
    weight/buoyancy through each frame Jacobian, and the rod load
    density through the quadrature-weighted node Jacobians.  Added
    mass is inertial and lives in `added_mass_contribution`, not here.
    """
    engine = kinematics.engine_for(assembly)
    if cache is None:
        cache = engine.evaluate(state)
    out = np.zeros(assembly.n_dofs)
    if assembly.root.n_dofs == 6:
        out[:6] += shell_load(cache.root_g, cache.root_eta, params,
                              assembly.root)
    for bucket, fd in enumerate(cache.frames):
        mass, com, volume, cb = _frame_statics(assembly, fd, bucket)
        wrench = rigid_static_wrench(fd.g, params, mass=mass[:, None],
                                     com=com, volume=volume[:, None], cb=cb)
        local = (np.swapaxes(fd.J, -1, -2) @ wrench[..., None])[..., 0]
        for m, branch in enumerate(fd.branch_idx):
            kinematics.scatter_add_vector(out, cache.col_map[branch], local[m])
    for bucket, rod in enumerate(cache.rods):
        radius, area, density = _rod_sections(assembly, rod, bucket)
        load = rod_load_density(rod.g[:, rod.quad], rod.eta[:, rod.quad],
                                params, radius=radius, area=area,
                                density=density)
        local = np.einsum("i,riac,ria->rc", rod.weights, rod.J[:, rod.quad],
                          load)
        for m, branch in enumerate(rod.branch_idx):
            kinematics.scatter_add_vector(out, cache.col_map[branch], local[m])
    return out


def potential_energy(assembly, state, params, cache=None):
    """Gravitational plus buoyant potential, J (datum at z = 0)."""
    engine = kinematics.engine_for(assembly)
    if cache is None:
        cache = engine.evaluate(state)
    g = params.gravity
    rho = params.water_density

    def rigid_term(spec, pose):
        mass, com, volume, cb = _rigid_mass_properties(spec)
        z_com = (pose[:3, :3] @ com + pose[:3, 3])[2]
        z_cb = (pose[:3, :3] @ cb + pose[:3, 3])[2]
        return g * (mass * z_com - rho * volume * z_cb)

    total = rigid_term(assembly.root, cache.root_g)
    for bucket, fd in enumerate(cache.frames):
        mass, com, volume, cb = _frame_statics(assembly, fd, bucket)
        z_com = np.einsum("ra,ra->r", fd.g[:, 2, :3], com) + fd.g[:, 2, 3]
        z_cb = np.einsum("ra,ra->r", fd.g[:, 2, :3], cb) + fd.g[:, 2, 3]
        total += g * float(mass @ z_com - rho * (volume @ z_cb))
    for bucket, rod in enumerate(cache.rods):
        _, area, density = _rod_sections(assembly, rod, bucket)
        z = rod.g[:, rod.quad, 2, 3]
        total += g * np.einsum("i,ri->", rod.weights,
                               (density - rho) * area * z)
    return total


def buoyancy_model(assembly, params, state=None, cache=None):
    """Hydrostatic bookkeeping of a configuration.

    Returns total displaced volume, the world-frame offset of the
    center of buoyancy from the center of gravity, and the body mass.
    """
    if state is None:
        state = links.neutral_state(assembly)
    engine = kinematics.engine_for(assembly)
    if cache is None:
        cache = engine.evaluate(state)
    mass = 0.0
    moment = np.zeros(3)
    volume = 0.0
    vmoment = np.zeros(3)

    def accumulate_rigid(spec, pose):
        nonlocal mass, moment, volume, vmoment
        m, com, v, cb = _rigid_mass_properties(spec)
        mass += m
        moment += m * (pose[:3, :3] @ com + pose[:3, 3])
        volume += v
        vmoment += v * (pose[:3, :3] @ cb + pose[:3, 3])

    accumulate_rigid(assembly.root, cache.root_g)
    for fd in cache.frames:
        for m, name in enumerate(fd.names):
            accumulate_rigid(assembly.link(name), fd.g[m])
    for rod in cache.rods:
        _, area, density = _rod_sections(assembly, rod)
        p = rod.g[:, rod.quad, :3, 3]
        dv = rod.weights[None, :] * area
        volume += dv.sum()
        vmoment += np.einsum("ri,ria->a", dv, p)
        mass += (dv * density).sum()
        moment += np.einsum("ri,ria->a", dv * density, p)
    return BuoyancyModel(
        displaced_volume=volume,
        center_of_buoyancy_offset=vmoment / volume - moment / mass,
        net_mass=mass)
