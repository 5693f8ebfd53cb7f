"""SE(3) primitives for screw kinematics on batched numpy arrays.

Conventions used throughout the package:

* A twist is a 6-vector ``(omega; v)`` with the angular part first.
* A wrench is a 6-vector ``(moment; force)``, dual to twists under the
  ordinary dot product.
* Poses are 4x4 homogeneous matrices ``[[R, p], [0, 1]]``.
* All functions accept arbitrary leading batch dimensions.

The exponential of a spatially varying strain field is evaluated with a
fourth-order Magnus expansion using two Gauss-Legendre collocation points
per segment.  For a strain field that is constant along the segment the
commutator term vanishes and the result reduces to the plain screw
exponential, which keeps the constant-strain case exact.
"""

from __future__ import annotations

import numpy as np

# Below this rotation angle (rad) the closed-form Rodrigues coefficients
# lose digits to cancellation, so Taylor expansions take over.
SMALL_ANGLE = 1e-6

# Orthonormality drift ||R^T R - I||_F beyond which a rotation block is
# projected back onto SO(3) (polar factor via SVD).
ORTHONORMALITY_TOL = 1e-9

# Number of terms kept in the series for the right Jacobian of exp.  Rod
# segments keep ||Psi|| well below 1, where 14 terms reach round-off.
_TANGENT_SERIES_TERMS = 14

# Gauss-Legendre nodes on [0, 1] for the two-point Magnus collocation.
_GL2_NODES = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def skew(w: np.ndarray) -> np.ndarray:
    """Map (..., 3) vectors to (..., 3, 3) skew-symmetric matrices."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def unskew(m: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew`; uses the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


def hat(xi: np.ndarray) -> np.ndarray:
    """Map (..., 6) twists to (..., 4, 4) matrices of se(3)."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = skew(xi[..., :3])
    out[..., :3, 3] = xi[..., 3:]
    return out


def _rodrigues_coeffs(theta: np.ndarray):
    """Coefficients (a, b, c) with exp = I + a K + b K^2, V = I + b K + c K^2.

    K is the unnormalised skew matrix of the rotation vector, so the
    coefficients absorb the 1/theta powers.  Taylor branches keep the ratios
    finite through theta -> 0.
    """
    theta = np.asarray(theta, dtype=float)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / (safe**3))
    return a, b, c


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, (..., 3) rotation vectors to (..., 3, 3)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    a, b, _ = _rodrigues_coeffs(theta)
    K = skew(w)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * K2


def exp_twist(xi: np.ndarray, scale: float | np.ndarray = 1.0) -> np.ndarray:
    """Screw exponential of ``xi * scale`` as a homogeneous pose.

    ``scale`` broadcasts against the batch shape, which lets one twist be
    integrated over many arc lengths in a single call.
    """
    xi = np.asarray(xi, dtype=float)
    scale = np.asarray(scale, dtype=float)
    xi = xi * scale[..., None] if scale.ndim else xi * scale
    w = xi[..., :3]
    v = xi[..., 3:]
    theta = np.linalg.norm(w, axis=-1)
    a, b, c = _rodrigues_coeffs(theta)
    K = skew(w)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + a[..., None, None] * K + b[..., None, None] * K2
    V = eye + b[..., None, None] * K + c[..., None, None] * K2
    g = np.zeros(xi.shape[:-1] + (4, 4))
    g[..., :3, :3] = R
    g[..., :3, 3] = (V @ v[..., None])[..., 0]
    g[..., 3, 3] = 1.0
    return g


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation vector of (..., 3, 3) rotation matrices.

    Near theta = pi the skew part of R degenerates, so the axis magnitude is
    recovered from the symmetric part and only the signs are taken from the
    skew part.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R, axis1=-2, axis2=-1)
    cos_t = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    s = unskew(R)  # equals sin(theta) * axis
    sin_t = np.linalg.norm(s, axis=-1)
    # atan2 stays well conditioned at both ends of [0, pi], unlike arccos.
    theta = np.arctan2(sin_t, cos_t)

    small = theta < SMALL_ANGLE
    near_pi = theta > np.pi - 1e-2
    generic = ~(small | near_pi)

    out = np.zeros(R.shape[:-2] + (3,))

    # generic branch: scale the skew part by theta / sin(theta)
    safe_sin = np.where(generic, sin_t, 1.0)
    out = np.where(generic[..., None], (theta / safe_sin)[..., None] * s, out)
    # small angle: s is already theta * axis to O(theta^3)
    out = np.where(small[..., None], s * (1.0 + theta[..., None] ** 2 / 6.0), out)

    if np.any(near_pi):
        # R + R^T = 2 cos(theta) I + 2 (1 - cos(theta)) n n^T
        nnt = (R + np.swapaxes(R, -1, -2)) / 2.0 - cos_t[..., None, None] * np.eye(3)
        denom = np.where(near_pi, 1.0 - cos_t, 1.0)
        n_abs = np.sqrt(np.clip(np.diagonal(nnt, axis1=-2, axis2=-1) / denom[..., None], 0.0, None))
        # Signs: pick the largest component positive, then fix the others
        # from the off-diagonal products n_i n_j.
        k = np.argmax(n_abs, axis=-1)
        sign = np.ones_like(n_abs)
        idx = np.indices(k.shape)
        for j in range(3):
            prod = nnt[(*idx, k, np.full_like(k, j))]
            sign[..., j] = np.where(np.abs(prod) > 0, np.sign(prod), 1.0)
        sign = sign * np.sign(sign[(*idx, k)])[..., None]
        n = n_abs * sign
        # The skew part still carries the global sign of the axis while
        # sin(theta) > 0; use it when it is meaningful.
        dot = np.sum(s * n, axis=-1)
        n = np.where((dot < 0)[..., None], -n, n)
        out = np.where(near_pi[..., None], theta[..., None] * n, out)
    return out


def log_pose(g: np.ndarray) -> np.ndarray:
    """Twist logarithm of (..., 4, 4) poses, inverse of :func:`exp_twist`."""
    g = np.asarray(g, dtype=float)
    w = log_so3(g[..., :3, :3])
    theta = np.linalg.norm(w, axis=-1)
    K = skew(w)
    K2 = K @ K
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # V^{-1} = I - K/2 + coef * K^2.  The half-angle cotangent form avoids
    # the (1 + cos) cancellation that ruins the naive formula near pi.
    cot_term = 1.0 / (2.0 * safe * np.tan(safe / 2.0))
    coef = np.where(
        small,
        1.0 / 12.0 + theta * theta / 720.0,
        1.0 / (safe * safe) - cot_term,
    )
    eye = np.broadcast_to(np.eye(3), K.shape)
    Vinv = eye - 0.5 * K + coef[..., None, None] * K2
    v = (Vinv @ g[..., :3, 3:])[..., 0]
    return np.concatenate([w, v], axis=-1)


def compose(*poses: np.ndarray) -> np.ndarray:
    """Left-to-right product of homogeneous poses."""
    out = np.asarray(poses[0], dtype=float)
    for p in poses[1:]:
        out = out @ p
    return out


def invert_pose(g: np.ndarray) -> np.ndarray:
    """Inverse of (..., 4, 4) poses without a general matrix inverse."""
    g = np.asarray(g, dtype=float)
    Rt = np.swapaxes(g[..., :3, :3], -1, -2)
    out = np.zeros_like(g)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -(Rt @ g[..., :3, 3:])[..., 0]
    out[..., 3, 3] = 1.0
    return out


def adjoint_of_pose(g: np.ndarray) -> np.ndarray:
    """Adjoint Ad_g mapping body twists of frame B into frame A for g = g_AB.

    With the (angular; linear) ordering::

        Ad_g = [[R,          0],
                [skew(p) R,  R]]
    """
    g = np.asarray(g, dtype=float)
    R = g[..., :3, :3]
    p = g[..., :3, 3]
    out = np.zeros(g.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., 3:, :3] = skew(p) @ R
    return out


def adjoint_inv_of_pose(g: np.ndarray) -> np.ndarray:
    """Ad_{g^{-1}} computed directly from R and p (no pose inversion)."""
    g = np.asarray(g, dtype=float)
    Rt = np.swapaxes(g[..., :3, :3], -1, -2)
    p = g[..., :3, 3]
    out = np.zeros(g.shape[:-2] + (6, 6))
    out[..., :3, :3] = Rt
    out[..., 3:, 3:] = Rt
    out[..., 3:, :3] = -Rt @ skew(p)
    return out


def ad_twist(xi: np.ndarray) -> np.ndarray:
    """Lie bracket operator ad_xi on twists: ad_xi eta = [xi, eta]."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    Kw = skew(xi[..., :3])
    out[..., :3, :3] = Kw
    out[..., 3:, 3:] = Kw
    out[..., 3:, :3] = skew(xi[..., 3:])
    return out


def coad_twist(xi: np.ndarray) -> np.ndarray:
    """Coadjoint ad*_xi = ad_xi^T acting on wrenches."""
    return np.swapaxes(ad_twist(xi), -1, -2)


def tangent_exp(xi: np.ndarray) -> np.ndarray:
    """Right (body) Jacobian of the exponential map.

    T(xi) satisfies ``exp(xi)^{-1} d/dt exp(xi(t)) = hat(T(xi) xi_dot)``.
    Evaluated as the series sum_n (-ad_xi)^n / (n+1)!, which converges to
    round-off for the sub-radian arguments used here.
    """
    A = -ad_twist(xi)
    out = np.broadcast_to(np.eye(6), A.shape).copy()
    term = np.broadcast_to(np.eye(6), A.shape).copy()
    for n in range(1, _TANGENT_SERIES_TERMS):
        term = term @ A / (n + 1.0)
        out = out + term
    return out


def tangent_exp_with_rate(xi: np.ndarray, xi_dot: np.ndarray):
    """Return (T(xi), d/dt T(xi)) for time-varying xi.

    The derivative applies the product rule term by term through the same
    truncated series as :func:`tangent_exp`.
    """
    A = -ad_twist(xi)
    Ad = -ad_twist(xi_dot)
    eye = np.broadcast_to(np.eye(6), A.shape)
    out = eye.copy()
    dout = np.zeros_like(A)
    term = eye.copy()
    dterm = np.zeros_like(A)
    for n in range(1, _TANGENT_SERIES_TERMS):
        dterm = (dterm @ A + term @ Ad) / (n + 1.0)
        term = term @ A / (n + 1.0)
        out = out + term
        dout = dout + dterm
    return out, dout


def magnus_psi(xi_a: np.ndarray, xi_b: np.ndarray, h: float | np.ndarray) -> np.ndarray:
    """Fourth-order Magnus twist for one segment of length ``h``.

    ``xi_a`` and ``xi_b`` are the strain twists at the two Gauss-Legendre
    nodes (earlier node first).  Solves dg/dX = g hat(xi(X)).
    """
    h = np.asarray(h, dtype=float)[..., None]
    comm = (ad_twist(xi_a) @ xi_b[..., None])[..., 0]
    return 0.5 * h * (xi_a + xi_b) + (np.sqrt(3.0) / 12.0) * h * h * comm


def gl2_nodes(x0: float | np.ndarray, x1: float | np.ndarray):
    """Two-point Gauss-Legendre abscissae on [x0, x1]."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    d = x1 - x0
    return x0 + _GL2_NODES[0] * d, x0 + _GL2_NODES[1] * d


def exp_varying_strain(strain, x0: float, x1: float, segments: int = 16) -> np.ndarray:
    """Pose of frame ``x1`` relative to frame ``x0`` for a strain field.

    Parameters
    ----------
    strain : callable
        Maps arc length X to a 6-vector twist (vectorised over arrays).
    x0, x1 : float
        Integration interval along the rod.
    segments : int
        Number of Magnus segments.  Each segment uses the two-point
        Gauss-Legendre collocation, giving fourth-order accuracy; constant
        fields are exact with any segment count.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    edges = np.linspace(x0, x1, segments + 1)
    sa, sb = gl2_nodes(edges[:-1], edges[1:])
    xi_a = np.asarray([np.asarray(strain(x), dtype=float) for x in sa])
    xi_b = np.asarray([np.asarray(strain(x), dtype=float) for x in sb])
    psi = magnus_psi(xi_a, xi_b, edges[1:] - edges[:-1])
    g = np.eye(4)
    for k in range(segments):
        g = g @ exp_twist(psi[k])
    return g


def orthonormality_defect(R: np.ndarray) -> np.ndarray:
    """Frobenius norm of R^T R - I over the batch."""
    R = np.asarray(R, dtype=float)
    d = np.swapaxes(R, -1, -2) @ R - np.eye(3)
    return np.linalg.norm(d, axis=(-2, -1))


def reorthonormalize(g: np.ndarray, tol: float = ORTHONORMALITY_TOL) -> np.ndarray:
    """Project rotation blocks back onto SO(3) when drift exceeds ``tol``.

    Uses the polar factor U V^T from the SVD, the nearest rotation in the
    Frobenius sense.  Poses within tolerance are returned unchanged.
    """
    g = np.asarray(g, dtype=float)
    defect = orthonormality_defect(g[..., :3, :3])
    if np.all(defect <= tol):
        return g
    out = np.array(g, copy=True)
    R = out[..., :3, :3]
    bad = defect > tol
    U, _, Vt = np.linalg.svd(R[bad])
    fixed = U @ Vt
    # Guard against reflections from a degenerate SVD.
    det = np.linalg.det(fixed)
    flip = det < 0
    if np.any(flip):
        U[flip, :, -1] *= -1.0
        fixed = U @ Vt
    R[bad] = fixed
    return out


def euler_zyx_to_matrix(phi: np.ndarray, theta: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """R = Rz(psi) Ry(theta) Rx(phi), the yaw-pitch-roll convention."""
    phi, theta, psi = np.broadcast_arrays(
        np.asarray(phi, float), np.asarray(theta, float), np.asarray(psi, float)
    )
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    R = np.empty(phi.shape + (3, 3))
    R[..., 0, 0] = cp * ct
    R[..., 0, 1] = cp * st * sf - sp * cf
    R[..., 0, 2] = cp * st * cf + sp * sf
    R[..., 1, 0] = sp * ct
    R[..., 1, 1] = sp * st * sf + cp * cf
    R[..., 1, 2] = sp * st * cf - cp * sf
    R[..., 2, 0] = -st
    R[..., 2, 1] = ct * sf
    R[..., 2, 2] = ct * cf
    return R


def euler_zyx_rates_matrix(phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Matrix E with (phi_dot, theta_dot, psi_dot) = E @ omega_body."""
    phi = np.asarray(phi, float)
    theta = np.asarray(theta, float)
    cf, sf = np.cos(phi), np.sin(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    E = np.empty(np.broadcast(phi, theta).shape + (3, 3))
    E[..., 0, 0] = 1.0
    E[..., 0, 1] = sf * tt
    E[..., 0, 2] = cf * tt
    E[..., 1, 0] = 0.0
    E[..., 1, 1] = cf
    E[..., 1, 2] = -sf
    E[..., 2, 0] = 0.0
    E[..., 2, 1] = sf / ct
    E[..., 2, 2] = cf / ct
    return E


def euler_zyx_from_matrix(R: np.ndarray):
    """Extract (phi, theta, psi) with R = Rz(psi) Ry(theta) Rx(phi)."""
    R = np.asarray(R, dtype=float)
    theta = -np.arcsin(np.clip(R[..., 2, 0], -1.0, 1.0))
    phi = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    psi = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    return phi, theta, psi
