"""Regular-dodecahedron shell geometry and the motor face table.

The shell is oriented with two horizontal faces: face 1 points straight up
(+z) and face 2 straight down.  The remaining ten faces form an upper ring
(normals tilted 63.435 deg from +z) and a lower ring, interleaved at 36 deg
in azimuth.  Motors are numbered M1..M12 so that opposite faces always pair
as (M1,M2), (M3,M4), ..., (M11,M12); the azimuth assignment below puts the
four motors M6, M8, M9, M11 on the +x half of the shell.

Face frames use x along the outward normal (which is also the motor shaft
axis), so a rod growing along its local x axis points away from the shell.
"""

from __future__ import annotations

import numpy as np

# Regular dodecahedron ratios (unit edge).
INRADIUS_COEF = 0.5 * np.sqrt((25.0 + 11.0 * np.sqrt(5.0)) / 10.0)  # 1.113516...
CIRCUMRADIUS_COEF = (np.sqrt(3.0) / 4.0) * (1.0 + np.sqrt(5.0))  # 1.401259...
VOLUME_COEF = (15.0 + 7.0 * np.sqrt(5.0)) / 4.0  # 7.663119...

# z component of the tilted face normals: +-1/sqrt(5).
_RING_Z = 1.0 / np.sqrt(5.0)

# Azimuth (deg) of each motor's face normal, indexed M1..M12.  None marks
# the two polar faces.  Chosen so that M6, M8, M9 and M11 all carry a
# positive x component while keeping opposite faces paired (Mj, Mj+1).
MOTOR_AZIMUTH_DEG = {
    1: None,  # +z
    2: None,  # -z
    3: 180.0,
    4: 0.0,
    5: 108.0,
    6: 288.0,
    7: 252.0,
    8: 72.0,
    9: 324.0,
    10: 144.0,
    11: 36.0,
    12: 216.0,
}

# Upper-ring motors (normal tilted towards +z); the rest of the ring faces
# tilt towards -z.  Polar faces are listed separately.
_UPPER_RING = (3, 5, 7, 9, 11)

N_FACES = 12
PAIRS = tuple((2 * j, 2 * j + 1) for j in range(6))  # zero-based motor indices


def face_normals() -> np.ndarray:
    """Unit outward normals of the twelve faces, shape (12, 3)."""
    n = np.zeros((N_FACES, 3))
    for motor in range(1, 13):
        az = MOTOR_AZIMUTH_DEG[motor]
        if az is None:
            n[motor - 1] = [0.0, 0.0, 1.0 if motor == 1 else -1.0]
        else:
            zc = _RING_Z if motor in _UPPER_RING else -_RING_Z
            r = np.sqrt(1.0 - zc * zc)
            a = np.deg2rad(az)
            n[motor - 1] = [r * np.cos(a), r * np.sin(a), zc]
    return n


def face_centers(edge: float) -> np.ndarray:
    """Face-center positions in the shell frame, shape (12, 3)."""
    return INRADIUS_COEF * edge * face_normals()


def face_frames(edge: float) -> np.ndarray:
    """Homogeneous poses of the twelve face frames, shape (12, 4, 4).

    Frame x axis is the outward normal.  The z axis is the projection of a
    fixed world reference onto the face plane (world z for ring faces,
    world x for the two polar faces), which makes the frames deterministic
    and reproducible in logs.
    """
    normals = face_normals()
    centers = face_centers(edge)
    frames = np.zeros((N_FACES, 4, 4))
    for i in range(N_FACES):
        x = normals[i]
        ref = np.array([0.0, 0.0, 1.0])
        if abs(x @ ref) > 0.9:
            ref = np.array([1.0, 0.0, 0.0])
        z = ref - (ref @ x) * x
        z = z / np.linalg.norm(z)
        y = np.cross(z, x)
        frames[i, :3, 0] = x
        frames[i, :3, 1] = y
        frames[i, :3, 2] = z
        frames[i, :3, 3] = centers[i]
        frames[i, 3, 3] = 1.0
    return frames


def vertices(edge: float) -> np.ndarray:
    """The twenty vertices in the shell frame, shape (20, 3).

    Built from the face table itself: every vertex of a regular
    dodecahedron is shared by exactly three mutually adjacent faces, and
    lies along the normalised sum of their normals at the circumradius.
    """
    n = face_normals()
    cos_adj = 1.0 / np.sqrt(5.0)  # angle between adjacent face normals
    verts = []
    for i in range(N_FACES):
        for j in range(i + 1, N_FACES):
            if abs(n[i] @ n[j] - cos_adj) > 1e-9:
                continue
            for k in range(j + 1, N_FACES):
                if (
                    abs(n[i] @ n[k] - cos_adj) < 1e-9
                    and abs(n[j] @ n[k] - cos_adj) < 1e-9
                ):
                    d = n[i] + n[j] + n[k]
                    verts.append(d / np.linalg.norm(d))
    verts = np.asarray(verts)
    if verts.shape != (20, 3):
        raise RuntimeError(f"face adjacency produced {len(verts)} vertices, expected 20")
    return CIRCUMRADIUS_COEF * edge * verts


def shell_volume(edge: float) -> float:
    """Geometric volume of the dodecahedron (m^3 for edge in m)."""
    return VOLUME_COEF * edge**3


def face_loops(edge: float) -> np.ndarray:
    """Pentagon vertex loops per face, shape (12, 5, 3).

    Loop i belongs to face i of face_normals() and runs counter-
    clockwise when viewed from outside along the outward normal.
    """
    normals = face_normals()
    verts = vertices(edge)
    inradius = INRADIUS_COEF * edge
    loops = []
    for n in normals:
        dist = verts @ n
        on_face = verts[np.abs(dist - inradius) < 1e-9 * edge]
        if on_face.shape[0] != 5:
            raise RuntimeError("face plane does not support exactly 5 vertices")
        center = inradius * n
        # order by angle in the face plane
        ref = on_face[0] - center
        ref /= np.linalg.norm(ref)
        t = np.cross(n, ref)
        rel = on_face - center
        ang = np.arctan2(rel @ t, rel @ ref)
        loops.append(on_face[np.argsort(ang)])
    return np.asarray(loops)


def solid_inertia(edge: float, mass: float) -> np.ndarray:
    """Inertia tensor of a uniform solid dodecahedron about its center.

    Exact tetrahedral decomposition: every face pentagon is fanned
    around its center and each triangle is coned to the centroid.  The
    symmetry group forces the result to be isotropic.
    """
    loops = face_loops(edge)
    centers = face_centers(edge)
    volume = 0.0
    second = np.zeros((3, 3))
    for loop, c in zip(loops, centers):
        for k in range(5):
            a, b = loop[k], loop[(k + 1) % 5]
            v = np.linalg.det(np.column_stack([c, a, b])) / 6.0
            s = c + a + b
            # second moment of a tetrahedron with one vertex at the origin
            second += (v / 20.0) * (np.outer(c, c) + np.outer(a, a)
                                    + np.outer(b, b) + np.outer(s, s))
            volume += v
    density = mass / volume
    second *= density
    return np.trace(second) * np.eye(3) - second
