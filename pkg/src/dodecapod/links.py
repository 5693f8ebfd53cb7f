"""Link specifications and tree assembly for the flagellated drone.

The vehicle is modeled as an ordered tree of links rooted at the rigid
shell.  Each of the 12 faces carries one propulsion module: a motor
shaft (rigid, revolute joint about the face normal), a pre-curved hook
(rigid, fixed joint), and a soft flagellum (inextensible Kirchhoff rod
with affine torsion/bending strain fields).  Default build: 37 links,
90 generalized coordinates.

Coordinate layout of the global vector q:
  - root free joint: [roll, pitch, yaw, x, y, z] (rotations applied
    z-y-x, i.e. R = Rz(yaw) Ry(pitch) Rx(roll)); the matching qdot
    slice holds the BODY twist (angular; linear), not Euler rates
  - then one angle per revolute joint, in branch order
  - then the strain coefficients of each soft link, in branch order

Velocities are quasi-velocities: qdot of the root is the body twist,
all other entries are plain coordinate rates.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from . import se3

JOINT_KINDS = ("free6", "revolute", "fixed")

# strain components follow the twist layout (angular; linear)
STRAIN_NAMES = ("torsion", "bend_y", "bend_z", "stretch", "shear_y", "shear_z")

# Kirchhoff rod: torsion + two bendings, each affine in arclength
KIRCHHOFF_AFFINE_BASIS = (1, 1, 1, -1, -1, -1)

STRAIGHT_REFERENCE_STRAIN = (0.0, 0.0, 0.0, 1.0, 0.0, 0.0)


def _frozen(a, shape=None, dtype=float):
    arr = np.array(a, dtype=dtype)
    if shape is not None and arr.shape != shape:
        raise ValueError("expected shape %s, got %s" % (shape, arr.shape))
    arr.flags.writeable = False
    return arr


def pose_from(rotation=None, translation=None):
    """Build a 4x4 pose from an optional rotation and translation."""
    g = np.eye(4)
    if rotation is not None:
        g[:3, :3] = rotation
    if translation is not None:
        g[:3, 3] = translation
    return g


def arc_transform(length, bend_angle, phase=0.0):
    """Pose across a planar constant-curvature segment.

    The segment starts along the local +x axis and bends by
    `bend_angle` about an axis in the y-z plane; `phase` rotates that
    bending axis about x (phase 0 bends about +z, toward +y).  A zero
    angle degenerates to a straight translation of `length`.
    """
    if length <= 0.0:
        raise ValueError("arc length must be positive")
    kappa = bend_angle / length
    axis = np.array([0.0, -math.sin(phase), math.cos(phase)])
    xi = np.concatenate([kappa * axis, [1.0, 0.0, 0.0]])
    return se3.exp_twist(xi, length)


def spatial_inertia(mass, com, rotational_inertia):
    """6x6 spatial inertia about the link frame origin.

    `rotational_inertia` is the 3x3 tensor about the center of mass;
    the parallel-axis shift to the frame origin happens here.  Twist
    convention is (angular; linear).
    """
    c = np.asarray(com, dtype=float)
    ic = np.asarray(rotational_inertia, dtype=float)
    chat = se3.skew(c)
    m = np.zeros((6, 6))
    m[:3, :3] = ic - mass * (chat @ chat)
    m[:3, 3:] = mass * chat
    m[3:, :3] = -mass * chat
    m[3:, 3:] = mass * np.eye(3)
    return m


def rod_rotational_inertia(mass, length, radius):
    """Inertia tensor of a uniform cylinder about its CoM, axis = x."""
    ax = 0.5 * mass * radius**2
    tr = mass * (length**2 / 12.0 + radius**2 / 4.0)
    return np.diag([ax, tr, tr])


def slender_rod_inertia(mass, p0, p1, radius):
    """Spatial inertia of a uniform rod between two points.

    Expressed about the link frame origin; the rod axis is p1 - p0.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    length = np.linalg.norm(d)
    if length < 1e-12:
        return spatial_inertia(mass, p0, (2.0 / 5.0) * mass * radius**2 * np.eye(3))
    x = d / length
    # any frame with x along the rod works; inertia is axisymmetric
    tmp = np.array([0.0, 0.0, 1.0]) if abs(x[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    y = np.cross(tmp, x)
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    r = np.column_stack([x, y, z])
    ic = r @ rod_rotational_inertia(mass, length, radius) @ r.T
    return spatial_inertia(mass, 0.5 * (p0 + p1), ic)


def _check_spd(m, what):
    if m.shape != (6, 6):
        raise ValueError("%s inertia must be 6x6" % what)
    if not np.allclose(m, m.T, atol=1e-9):
        raise ValueError("%s inertia must be symmetric" % what)
    if np.linalg.eigvalsh(m)[0] <= 0.0:
        raise ValueError("%s inertia must be positive definite" % what)


@dataclass(frozen=True)
class LinkGeometry:
    """Primitive hydrostatic descriptor of a rigid link."""

    volume: float = 0.0                 # displaced volume, m^3
    buoyancy_center: tuple = (0.0, 0.0, 0.0)  # in the link frame, m

    def __post_init__(self):
        if self.volume < 0.0:
            raise ValueError("displaced volume must be >= 0")


@dataclass(frozen=True)
class RigidLinkSpec:
    """Rigid body attached to its parent through a simple joint."""

    name: str
    joint_kind: str
    body_inertia: np.ndarray            # 6x6 SPD, link frame
    attach_transform: np.ndarray        # joint frame in the parent frame
    joint_axis: np.ndarray = None       # unit 3-vector, revolute only
    geometry: LinkGeometry = field(default_factory=LinkGeometry)

    def __post_init__(self):
        if self.joint_kind not in JOINT_KINDS:
            raise ValueError("unknown joint kind %r" % (self.joint_kind,))
        object.__setattr__(self, "body_inertia", _frozen(self.body_inertia, (6, 6)))
        object.__setattr__(self, "attach_transform", _frozen(self.attach_transform, (4, 4)))
        _check_spd(self.body_inertia, self.name)
        if self.joint_kind == "revolute":
            if self.joint_axis is None:
                raise ValueError("revolute joint %r needs an axis" % self.name)
            axis = np.asarray(self.joint_axis, dtype=float)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
                raise ValueError("joint axis of %r must be unit length" % self.name)
            object.__setattr__(self, "joint_axis", _frozen(axis, (3,)))
        elif self.joint_axis is not None:
            raise ValueError("%r: joint_axis only applies to revolute joints" % self.name)

    @property
    def n_dofs(self):
        return {"free6": 6, "revolute": 1, "fixed": 0}[self.joint_kind]


@dataclass(frozen=True)
class SoftLinkSpec:
    """Slender deformable rod parameterized by strain fields.

    The strain basis assigns a polynomial order to each of the six
    strain components (order -1 freezes the component at its reference
    value).  Basis functions are shifted Legendre polynomials scaled so
    that the arclength inner product of two basis functions is
    length * delta_ij, which keeps stiffness and damping diagonal.
    """

    name: str
    length: float
    cross_section_radius: float
    youngs_modulus: float
    shear_modulus: float
    density: float
    attach_transform: np.ndarray
    strain_basis: tuple = KIRCHHOFF_AFFINE_BASIS
    reference_strain: tuple = STRAIGHT_REFERENCE_STRAIN

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError("rod %r: length must be positive" % self.name)
        if self.cross_section_radius <= 0.0:
            raise ValueError("rod %r: radius must be positive" % self.name)
        if self.youngs_modulus <= 0.0 or self.shear_modulus <= 0.0:
            raise ValueError("rod %r: moduli must be positive" % self.name)
        if self.density <= 0.0:
            raise ValueError("rod %r: density must be positive" % self.name)
        if len(self.strain_basis) != 6:
            raise ValueError("rod %r: strain basis needs 6 entries" % self.name)
        if any(o < -1 for o in self.strain_basis):
            raise ValueError("rod %r: basis orders must be >= -1" % self.name)
        if self.n_dofs == 0:
            raise ValueError("rod %r: strain basis yields no coordinates" % self.name)
        object.__setattr__(self, "strain_basis", tuple(int(o) for o in self.strain_basis))
        object.__setattr__(self, "attach_transform", _frozen(self.attach_transform, (4, 4)))
        object.__setattr__(self, "reference_strain",
                           tuple(float(v) for v in np.reshape(self.reference_strain, 6)))

    @property
    def n_dofs(self):
        return sum(o + 1 for o in self.strain_basis if o >= 0)

    @property
    def joint_kind(self):
        return "soft"

    @property
    def area(self):
        return math.pi * self.cross_section_radius**2

    @property
    def second_moment(self):
        return math.pi * self.cross_section_radius**4 / 4.0

    @property
    def polar_moment(self):
        return math.pi * self.cross_section_radius**4 / 2.0

    @property
    def mass(self):
        return self.density * self.area * self.length


def strain_basis_matrix(spec, x):
    """Evaluate the 6 x n_dofs strain basis of a soft link.

    `x` is an arclength or an array of arclengths in [0, length];
    returns shape x.shape + (6, n_dofs).  Row i spans strain component
    i with scaled shifted Legendre polynomials; frozen components have
    no columns.
    """
    x = np.asarray(x, dtype=float)
    u = 2.0 * x / spec.length - 1.0
    out = np.zeros(x.shape + (6, spec.n_dofs))
    col = 0
    for comp, order in enumerate(spec.strain_basis):
        if order < 0:
            continue
        vand = np.polynomial.legendre.legvander(u, order)
        scale = np.sqrt(2.0 * np.arange(order + 1) + 1.0)
        out[..., comp, col:col + order + 1] = vand * scale
        col += order + 1
    return out


def strain_field(spec, q_rod, x):
    """Local strain twist xi(x) = reference + basis(x) @ q_rod."""
    phi = strain_basis_matrix(spec, x)
    return np.asarray(spec.reference_strain) + phi @ np.asarray(q_rod, dtype=float)


@dataclass(frozen=True)
class Branch:
    """Serial chain of links hanging off the root body."""

    links: tuple
    module_id: int = None               # face/motor number when face-mounted

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        for prev, nxt in zip(self.links, self.links[1:]):
            if isinstance(prev, SoftLinkSpec) and not isinstance(nxt, SoftLinkSpec):
                # distal rigid attachments to a deformed tip would need
                # tip-frame dynamics not modeled here
                raise ValueError("rigid link %r cannot follow a soft link" % nxt.name)


@dataclass(frozen=True, eq=False)
class Assembly:
    """Immutable kinematic tree: root rigid body plus serial branches.

    dof_map assigns every link a slice of the global coordinate
    vector; the slices partition range(n_dofs).  prescribed_set lists
    coordinates driven by the motor program rather than by dynamics.
    Identity semantics (eq=False) let derived per-assembly caches key
    off the object itself.
    """

    root: RigidLinkSpec
    branches: tuple
    dof_map: dict
    n_dofs: int
    prescribed_set: tuple

    @property
    def n_links(self):
        return 1 + sum(len(b.links) for b in self.branches)

    @property
    def links(self):
        out = [self.root]
        for b in self.branches:
            out.extend(b.links)
        return tuple(out)

    @property
    def free_set(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[list(self.prescribed_set)] = False
        return tuple(np.flatnonzero(mask))

    def dof_slice(self, name):
        return self.dof_map[name]

    def link(self, name):
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError("unknown link %r" % name)

    def module_branch(self, module_id):
        for b in self.branches:
            if b.module_id == module_id:
                return b
        raise KeyError("no branch for module %d" % module_id)


def make_assembly(root, branches, prescribed_names=()):
    """Assemble the tree and assign coordinate slices.

    Slices are handed out root first, then the rigid joints of every
    branch in order, then the soft links in the same order, so the
    motor angles and the strain coordinates each form one contiguous
    block.
    """
    if root.joint_kind not in ("free6", "fixed"):
        raise ValueError("root joint must be free6 or fixed")
    branches = tuple(branches)
    names = [root.name] + [l.name for b in branches for l in b.links]
    if len(set(names)) != len(names):
        raise ValueError("duplicate link names in assembly")

    dof_map = {}
    cursor = root.n_dofs
    dof_map[root.name] = slice(0, cursor)
    for b in branches:
        for l in b.links:
            if isinstance(l, RigidLinkSpec):
                dof_map[l.name] = slice(cursor, cursor + l.n_dofs)
                cursor += l.n_dofs
    for b in branches:
        for l in b.links:
            if isinstance(l, SoftLinkSpec):
                dof_map[l.name] = slice(cursor, cursor + l.n_dofs)
                cursor += l.n_dofs

    prescribed = []
    for name in prescribed_names:
        if name not in dof_map:
            raise ValueError("prescribed link %r not in assembly" % name)
        prescribed.extend(range(dof_map[name].start, dof_map[name].stop))
    return Assembly(root=root, branches=branches, dof_map=dof_map,
                    n_dofs=cursor, prescribed_set=tuple(sorted(prescribed)))


@dataclass
class GeneralizedState:
    """Coordinates and quasi-velocities of an assembly."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.qdot = np.array(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise ValueError("q and qdot must be 1-d vectors of equal length")

    def copy(self):
        return GeneralizedState(self.q.copy(), self.qdot.copy())


def neutral_state(assembly):
    return GeneralizedState(np.zeros(assembly.n_dofs), np.zeros(assembly.n_dofs))


def root_pose(assembly, state):
    """World pose of the root link frame."""
    if assembly.root.joint_kind == "fixed":
        return assembly.root.attach_transform.copy()
    roll, pitch, yaw, x, y, z = state.q[:6]
    g = pose_from(se3.euler_zyx_to_matrix(roll, pitch, yaw), (x, y, z))
    return assembly.root.attach_transform @ g


def set_root_pose(state, g):
    """Write a world pose into the free-joint slice of q."""
    state.q[0:3] = se3.euler_zyx_from_matrix(g[:3, :3])
    state.q[3:6] = g[:3, 3]
    return state


# ---------------------------------------------------------------------------
# drone build


@dataclass(frozen=True)
class DroneParams:
    """Physical parameters of the 12-module vehicle.

    Shell-level values follow the prototype data sheet; module-level
    dimensions and the flagellum material are assumptions recorded in
    the provenance ledger of each scenario summary.
    """

    edge_length: float = 0.10           # m, dodecahedron edge
    total_mass: float = 10.75           # kg, everything in the water
    cg_drop: float = 0.035              # m, CG below the geometric center
    shaft_length: float = 0.030         # m, exposed motor shaft
    shaft_mass: float = 0.030           # kg
    shaft_radius: float = 0.004         # m
    shaft_density: float = 7800.0       # kg/m^3, for displaced volume
    hook_length: float = 0.030          # m, arclength of the bent root
    hook_mass: float = 0.010            # kg
    hook_radius: float = 0.005          # m
    hook_density: float = 1250.0        # kg/m^3, printed polymer
    hook_bend: float = math.radians(90.0)   # rad, quarter-turn pre-curvature
    flagellum_length: float = 0.15      # m
    flagellum_radius: float = 0.005     # m
    flagellum_density: float = 1100.0   # kg/m^3, cast silicone
    youngs_modulus: float = 0.8e6       # Pa
    poisson_ratio: float = 0.5          # incompressible silicone
    water_density: float = 1000.0       # kg/m^3, used for the volume trim
    buoyancy_fraction: float = 1.0      # displaced mass / mass; 1 = neutral
    removed_modules: tuple = ()         # motor numbers 1..12
    removal_mode: str = "flagellum"     # "flagellum" or "module"

    @property
    def shear_modulus(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    def validate(self):
        for fname in ("edge_length", "total_mass", "shaft_length", "shaft_mass",
                      "shaft_radius", "hook_length", "hook_mass", "hook_radius",
                      "flagellum_length", "flagellum_radius", "flagellum_density",
                      "youngs_modulus", "water_density"):
            if getattr(self, fname) <= 0.0:
                raise ValueError("%s must be positive" % fname)
        if self.removal_mode not in ("flagellum", "module"):
            raise ValueError("removal_mode must be 'flagellum' or 'module'")
        for m in self.removed_modules:
            if m not in range(1, geometry.N_FACES + 1):
                raise ValueError("no face %r to remove" % (m,))
        rod_mass = self.flagellum_density * math.pi * self.flagellum_radius**2 \
            * self.flagellum_length
        budget = geometry.N_FACES * (self.shaft_mass + self.hook_mass + rod_mass)
        if budget >= self.total_mass:
            raise ValueError("module masses exceed the total mass budget")


def _module_chain(params, module_id, face_pose, with_rod):
    """Build the shaft / hook / (flagellum) chain of one face."""
    tag = "m%02d" % module_id
    shaft = RigidLinkSpec(
        name=tag + "_shaft",
        joint_kind="revolute",
        joint_axis=(1.0, 0.0, 0.0),
        body_inertia=slender_rod_inertia(
            params.shaft_mass, (0, 0, 0), (params.shaft_length, 0, 0),
            params.shaft_radius),
        attach_transform=face_pose,
        geometry=LinkGeometry(
            volume=params.shaft_mass / params.shaft_density,
            buoyancy_center=(0.5 * params.shaft_length, 0.0, 0.0)),
    )
    bend_pose = arc_transform(params.hook_length, params.hook_bend)
    chord = bend_pose[:3, 3]
    hook = RigidLinkSpec(
        name=tag + "_hook",
        joint_kind="fixed",
        body_inertia=slender_rod_inertia(
            params.hook_mass, (0, 0, 0), chord, params.hook_radius),
        attach_transform=pose_from(translation=(params.shaft_length, 0.0, 0.0)),
        geometry=LinkGeometry(
            volume=params.hook_mass / params.hook_density,
            buoyancy_center=tuple(0.5 * chord)),
    )
    links = [shaft, hook]
    if with_rod:
        links.append(SoftLinkSpec(
            name=tag + "_flag",
            length=params.flagellum_length,
            cross_section_radius=params.flagellum_radius,
            youngs_modulus=params.youngs_modulus,
            shear_modulus=params.shear_modulus,
            density=params.flagellum_density,
            attach_transform=bend_pose,
        ))
    return Branch(links=tuple(links), module_id=module_id)


def _reference_static_moments(branches, face_poses):
    """Mass and volume first moments of the modules at q = 0.

    Walks each chain composing attach transforms; soft links are
    straight at reference, so their CoM and volume centroid sit half
    way along the local x axis.  Returns (mass, sum of mass * world
    CoM, volume, sum of volume * world centroid).
    """
    mass = 0.0
    moment = np.zeros(3)
    volume = 0.0
    vmoment = np.zeros(3)
    for branch in branches:
        g = np.eye(4)
        for link in branch.links:
            g = g @ link.attach_transform
            if isinstance(link, RigidLinkSpec):
                m = link.body_inertia[5, 5]
                mc_local = se3.unskew(link.body_inertia[:3, 3:] )
                com = g[:3, :3] @ (mc_local / m) + g[:3, 3]
                v = link.geometry.volume
                cb = g[:3, :3] @ np.asarray(link.geometry.buoyancy_center) \
                    + g[:3, 3]
            else:
                m = link.mass
                com = g[:3, :3] @ np.array([0.5 * link.length, 0, 0]) + g[:3, 3]
                v = link.area * link.length
                cb = com
            mass += m
            moment += m * com
            volume += v
            vmoment += v * cb
    return mass, moment, volume, vmoment


def build_drone_assembly(params=None):
    """Construct the full vehicle tree.

    Default build: 1 shell + 12 x (shaft, hook, flagellum) = 37 links
    and 6 + 12 + 72 = 90 coordinates, with every shaft angle in the
    prescribed set.  `removed_modules` drops flagella (keeping shaft
    and hook) or whole modules depending on `removal_mode`.

    The shell link absorbs the motor canisters and internal hardware:
    its CoM and displaced volume are trimmed so the reference
    configuration matches the requested CG drop and buoyancy fraction.
    """
    params = params or DroneParams()
    params.validate()
    edge = params.edge_length
    frames = geometry.face_frames(edge)

    branches = []
    for module_id in range(1, geometry.N_FACES + 1):
        removed = module_id in params.removed_modules
        if removed and params.removal_mode == "module":
            continue
        branches.append(_module_chain(
            params, module_id, frames[module_id - 1], with_rod=not removed))

    part_mass, part_moment, part_volume, part_vmoment = \
        _reference_static_moments(branches, frames)
    shell_mass = params.total_mass - part_mass
    # trim ballast so the reference configuration balances at the
    # requested CG drop below the geometric center
    target = params.total_mass * np.array([0.0, 0.0, -params.cg_drop])
    shell_com = (target - part_moment) / shell_mass

    # rotational inertia: uniform solid of the same mass (hull mass
    # dominates and the internals pack the volume)
    inertia_shell = geometry.solid_inertia(edge, shell_mass)

    shell_volume = params.buoyancy_fraction * params.total_mass \
        / params.water_density - part_volume
    if shell_volume <= 0.0:
        raise ValueError("buoyancy trim yields a non-positive shell volume")
    # hull volume centroid trimmed so the assembled CB sits at the
    # geometric center: the metacentric lever is then exactly cg_drop
    shell_cb = -part_vmoment / shell_volume

    shell = RigidLinkSpec(
        name="shell",
        joint_kind="free6",
        body_inertia=spatial_inertia(shell_mass, shell_com, inertia_shell),
        attach_transform=np.eye(4),
        geometry=LinkGeometry(volume=shell_volume, buoyancy_center=tuple(shell_cb)),
    )
    prescribed = [l.name for b in branches for l in b.links
                  if isinstance(l, RigidLinkSpec) and l.joint_kind == "revolute"]
    return make_assembly(shell, branches, prescribed_names=prescribed)
