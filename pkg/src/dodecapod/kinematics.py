"""Forward kinematics, geometric Jacobians, and their rates.

One evaluation sweeps the whole tree: the root pose seeds every
branch, rigid joints apply screw updates, and soft links integrate
their strain field with one fourth-order Magnus step per quadrature
interval.  The recursion carries four quantities per frame:

    g      world pose
    J      body Jacobian wrt the coordinates on the root path
    Jd     time derivative of J along the current motion
    eta    body twist J @ qdot

moving from a parent frame to a child frame across a map h with local
twist zeta = (h^-1 h_dot)vee:

    g_c   = g_p h
    J_c   = Ad_{h^-1} J_p  (+ own columns)
    Jd_c  = Ad_{h^-1} Jd_p - ad_zeta Ad_{h^-1} J_p  (+ own column rates)
    eta_c = Ad_{h^-1} eta_p + zeta

Branches with the same link signature are processed together with a
leading batch axis, which keeps a full 12-flagella evaluation at a
couple hundred numpy calls.

Free-joint coordinates store yaw-pitch-roll angles and position while
the matching velocities are the body twist, so the root Jacobian block
is the identity.  Finite-difference checks must therefore perturb the
root multiplicatively; :func:`perturb_dof` and
:func:`advance_coordinates` implement the matching perturbations.
"""

import weakref
from dataclasses import dataclass

import numpy as np

from . import se3
from .links import (Assembly, GeneralizedState, RigidLinkSpec, SoftLinkSpec,
                    root_pose, set_root_pose, strain_basis_matrix)

# Gauss-Legendre points per soft link; mass, load, and stiffness
# integrals along a rod all use this rule.
N_QUAD = 10

_MAGNUS_C2 = np.sqrt(3.0) / 12.0


def _gauss_legendre(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass
class FrameData:
    """Kinematic state of one rigid frame per batched branch member."""

    names: list
    branch_idx: np.ndarray      # (R,)
    g: np.ndarray               # (R, 4, 4)
    J: np.ndarray               # (R, 6, C)
    Jd: np.ndarray              # (R, 6, C)
    eta: np.ndarray             # (R, 6)


@dataclass
class RodData:
    """Kinematic state of a batch of soft links at their node frames.

    Node i sits at arclength node_x[i]; node 0 is the rod base and the
    last node is the tip.  Nodes 1..N_QUAD carry quadrature weights
    for arclength integrals.
    """

    names: list
    branch_idx: np.ndarray      # (R,)
    node_x: np.ndarray          # (n_nodes,)
    weights: np.ndarray         # (N_QUAD,)
    quad: slice
    col_start: int              # local column of the strain block
    g: np.ndarray               # (R, n_nodes, 4, 4)
    J: np.ndarray               # (R, n_nodes, 6, C)
    Jd: np.ndarray              # (R, n_nodes, 6, C)
    eta: np.ndarray             # (R, n_nodes, 6)


@dataclass
class KinCache:
    """Everything one state evaluation produces."""

    root_g: np.ndarray
    root_eta: np.ndarray
    frames: list                # FrameData per rigid bucket, stage order
    rods: list                  # RodData per soft bucket
    col_map: np.ndarray         # (B, C) global column per local column, -1 pad
    n_dofs: int

    def globalize(self, local, branch):
        """Scatter (..., 6, C) path-local columns to (..., 6, n_dofs)."""
        cols = self.col_map[branch]
        keep = cols >= 0
        out = np.zeros(local.shape[:-1] + (self.n_dofs,))
        out[..., cols[keep]] = local[..., keep]
        return out


class _RevoluteBucket:
    def __init__(self, members):
        self.idx = np.array([m[0] for m in members])
        self.names = [m[1].name for m in members]
        self.attach = np.stack([m[1].attach_transform for m in members])
        axes = np.stack([m[1].joint_axis for m in members])
        self.screw = np.concatenate([axes, np.zeros_like(axes)], axis=1)
        self.col = np.array([m[2] for m in members])
        self.dof = np.array([m[3] for m in members])

    def apply(self, q, qdot, g, J, Jd, eta):
        th = q[self.dof]
        thd = qdot[self.dof]
        h = self.attach @ se3.exp_twist(self.screw, th)
        X = se3.adjoint_inv_of_pose(h)
        zeta = self.screw * thd[:, None]
        XJ = X @ J
        Jd = X @ Jd - se3.ad_twist(zeta) @ XJ
        J = XJ
        r = np.arange(len(self.idx))
        J[r, :, self.col] += self.screw
        eta = (X @ eta[..., None])[..., 0] + zeta
        return g @ h, J, Jd, eta


class _FixedBucket:
    def __init__(self, members):
        self.idx = np.array([m[0] for m in members])
        self.names = [m[1].name for m in members]
        self.attach = np.stack([m[1].attach_transform for m in members])
        self.X = se3.adjoint_inv_of_pose(self.attach)

    def apply(self, q, qdot, g, J, Jd, eta):
        return (g @ self.attach, self.X @ J, self.X @ Jd,
                (self.X @ eta[..., None])[..., 0])


class _SoftBucket:
    """Batch of identically parameterized rods (grids are shared)."""

    def __init__(self, members, n_quad):
        self.idx = np.array([m[0] for m in members])
        self.names = [m[1].name for m in members]
        self.spec = members[0][1]
        self.attach = np.stack([m[1].attach_transform for m in members])
        self.X_attach = se3.adjoint_inv_of_pose(self.attach)
        self.col_start = members[0][2]
        if any(m[2] != self.col_start for m in members):
            raise ValueError("soft links batched together must share a column slot")
        nd = self.spec.n_dofs
        self.dof_idx = np.array([np.arange(m[3], m[3] + nd) for m in members])

        spec = self.spec
        xq, wq = _gauss_legendre(n_quad, 0.0, spec.length)
        self.node_x = np.concatenate([[0.0], xq, [spec.length]])
        self.weights = wq
        self.quad = slice(1, 1 + n_quad)
        edges = self.node_x
        self.h = edges[1:] - edges[:-1]
        ya, yb = se3.gl2_nodes(edges[:-1], edges[1:])
        self.phi_a = strain_basis_matrix(spec, ya)      # (n_int, 6, nd)
        self.phi_b = strain_basis_matrix(spec, yb)
        self.ref = np.asarray(spec.reference_strain)

    def step_terms(self, phi_a, phi_b, h, qrod, qdrod):
        """Magnus twist, its q-gradient, and rate terms for one interval."""
        xi_a = self.ref + (phi_a @ qrod[..., None])[..., 0]
        xi_b = self.ref + (phi_b @ qrod[..., None])[..., 0]
        xid_a = (phi_a @ qdrod[..., None])[..., 0]
        xid_b = (phi_b @ qdrod[..., None])[..., 0]
        ad_a = se3.ad_twist(xi_a)
        ad_b = se3.ad_twist(xi_b)
        psi = 0.5 * h * (xi_a + xi_b) \
            + _MAGNUS_C2 * h * h * (ad_a @ xi_b[..., None])[..., 0]
        dpsi = 0.5 * h * (phi_a + phi_b) \
            + _MAGNUS_C2 * h * h * (ad_a @ phi_b - ad_b @ phi_a)
        psid = (dpsi @ qdrod[..., None])[..., 0]
        dpsi_rate = _MAGNUS_C2 * h * h \
            * (se3.ad_twist(xid_a) @ phi_b - se3.ad_twist(xid_b) @ phi_a)
        T, Td = se3.tangent_exp_with_rate(psi, psid)
        B = T @ dpsi
        Bd = Td @ dpsi + T @ dpsi_rate
        return psi, B, Bd

    def advance(self, psi, B, Bd, qdrod, g, J, Jd, eta):
        """Carry the recursion across one interval (any batch shape)."""
        hp = se3.exp_twist(psi)
        X = se3.adjoint_inv_of_pose(hp)
        zeta = (B @ qdrod[..., None])[..., 0]
        XJ = X @ J
        Jd = X @ Jd - se3.ad_twist(zeta) @ XJ
        J = XJ
        nd = B.shape[-1]
        J[..., :, self.col_start:self.col_start + nd] += B
        Jd[..., :, self.col_start:self.col_start + nd] += Bd
        eta = (X @ eta[..., None])[..., 0] + zeta
        return g @ hp, J, Jd, eta

    def _steps_batched(self, qrod, qdrod):
        """Magnus data of every interval at once, shapes (n_int, R, ...).

        No interval depends on another through q, so the expensive
        series evaluations amortize over one big batch; only the frame
        accumulation below stays sequential.
        """
        phi_a = self.phi_a[:, None]                 # (n_int, 1, 6, nd)
        phi_b = self.phi_b[:, None]
        h3 = self.h[:, None, None]
        h4 = self.h[:, None, None, None]
        xi_a = self.ref + np.einsum("iojk,rk->irj", phi_a, qrod)
        xi_b = self.ref + np.einsum("iojk,rk->irj", phi_b, qrod)
        xid_a = np.einsum("iojk,rk->irj", phi_a, qdrod)
        xid_b = np.einsum("iojk,rk->irj", phi_b, qdrod)
        ad_a = se3.ad_twist(xi_a)
        ad_b = se3.ad_twist(xi_b)
        psi = 0.5 * h3 * (xi_a + xi_b) \
            + _MAGNUS_C2 * h3 * h3 * (ad_a @ xi_b[..., None])[..., 0]
        dpsi = 0.5 * h4 * (phi_a + phi_b) \
            + _MAGNUS_C2 * h4 * h4 * (ad_a @ phi_b - ad_b @ phi_a)
        qd1 = qdrod[None, :, :, None]
        psid = (dpsi @ qd1)[..., 0]
        dpsi_rate = _MAGNUS_C2 * h4 * h4 \
            * (se3.ad_twist(xid_a) @ phi_b - se3.ad_twist(xid_b) @ phi_a)
        T, Td = se3.tangent_exp_with_rate(psi, psid)
        B = T @ dpsi
        Bd = Td @ dpsi + T @ dpsi_rate
        hp = se3.exp_twist(psi)
        X = se3.adjoint_inv_of_pose(hp)
        zeta = (B @ qd1)[..., 0]
        return hp, X, B, Bd, zeta

    def apply(self, q, qdot, g, J, Jd, eta):
        qrod = q[self.dof_idx]
        qdrod = qdot[self.dof_idx]
        # move to the rod base frame
        g = g @ self.attach
        XJ = self.X_attach @ J
        Jd = self.X_attach @ Jd
        eta = (self.X_attach @ eta[..., None])[..., 0]
        J = XJ

        hp, X, B, Bd, zeta = self._steps_batched(qrod, qdrod)
        ad_zeta = se3.ad_twist(zeta)
        nd = B.shape[-1]
        cs = self.col_start

        n_nodes = len(self.node_x)
        R, _, C = J.shape
        out_g = np.zeros((R, n_nodes, 4, 4))
        out_J = np.zeros((R, n_nodes, 6, C))
        out_Jd = np.zeros((R, n_nodes, 6, C))
        out_eta = np.zeros((R, n_nodes, 6))
        out_g[:, 0], out_J[:, 0], out_Jd[:, 0], out_eta[:, 0] = g, J, Jd, eta
        for i in range(n_nodes - 1):
            XJ = X[i] @ J
            Jd = X[i] @ Jd - ad_zeta[i] @ XJ
            J = XJ
            J[:, :, cs:cs + nd] += B[i]
            Jd[:, :, cs:cs + nd] += Bd[i]
            eta = (X[i] @ eta[..., None])[..., 0] + zeta[i]
            g = g @ hp[i]
            out_g[:, i + 1], out_J[:, i + 1] = g, J
            out_Jd[:, i + 1], out_eta[:, i + 1] = Jd, eta
        return RodData(names=self.names, branch_idx=self.idx,
                       node_x=self.node_x, weights=self.weights,
                       quad=self.quad, col_start=self.col_start,
                       g=out_g, J=out_J, Jd=out_Jd, eta=out_eta)

    def partial(self, node, x, qrod, qdrod, g, J, Jd, eta):
        """One sub-interval step from node (the last one left of x) to x."""
        spec = self.spec
        ya, yb = se3.gl2_nodes(self.node_x[node], x)
        phi_a = strain_basis_matrix(spec, ya)
        phi_b = strain_basis_matrix(spec, yb)
        psi, B, Bd = self.step_terms(phi_a, phi_b, x - self.node_x[node],
                                     qrod, qdrod)
        return self.advance(psi, B, Bd, qdrod, g, J, Jd, eta)


class KinematicsEngine:
    """Per-assembly precomputation plus the batched sweep."""

    def __init__(self, assembly, n_quad=N_QUAD):
        self.assembly = assembly
        self.n_quad = n_quad
        branches = assembly.branches
        nb = len(branches)
        root_cols = assembly.root.n_dofs

        # local column layout per branch: root block, then chain order
        col_lists = []
        for b in branches:
            cols = list(range(root_cols))
            for link in b.links:
                sl = assembly.dof_map[link.name]
                cols.extend(range(sl.start, sl.stop))
            col_lists.append(cols)
        self.C = max((len(c) for c in col_lists), default=root_cols)
        self.C = max(self.C, root_cols)
        self.col_map = -np.ones((max(nb, 1), self.C), dtype=int)
        for i, cols in enumerate(col_lists):
            self.col_map[i, :len(cols)] = cols
        if nb == 0:
            self.col_map[0, :root_cols] = np.arange(root_cols)
        self.root_cols = root_cols

        # bucket the links stage by stage
        depth = max((len(b.links) for b in branches), default=0)
        self.stages = []
        for k in range(depth):
            local_col = []
            for b in branches:
                used = root_cols + sum(l.n_dofs for l in b.links[:k])
                local_col.append(used)
            members = {}
            for i, b in enumerate(branches):
                if len(b.links) <= k:
                    continue
                link = b.links[k]
                entry = (i, link, local_col[i],
                         assembly.dof_map[link.name].start)
                members.setdefault(self._signature(link), []).append(entry)
            buckets = []
            for sig, group in sorted(members.items(), key=lambda kv: str(kv[0])):
                kind = sig[0]
                if kind == "revolute":
                    buckets.append(_RevoluteBucket(group))
                elif kind == "fixed":
                    buckets.append(_FixedBucket(group))
                else:
                    buckets.append(_SoftBucket(group, n_quad))
            self.stages.append(buckets)

        # name lookup: link name -> ("rigid"/"soft", stage, bucket, member)
        self.where = {}
        for si, stage in enumerate(self.stages):
            for bi, bucket in enumerate(stage):
                for mi, name in enumerate(bucket.names):
                    self.where[name] = (si, bi, mi)

    @staticmethod
    def _signature(link):
        if isinstance(link, SoftLinkSpec):
            return ("soft", link.length, link.strain_basis,
                    link.reference_strain)
        return (link.joint_kind,)

    def evaluate(self, state):
        asm = self.assembly
        q, qdot = state.q, state.qdot
        if q.shape[0] != asm.n_dofs:
            raise ValueError("state has %d coordinates, assembly needs %d"
                             % (q.shape[0], asm.n_dofs))
        nb = len(asm.branches)
        g0 = root_pose(asm, state)
        eta0 = qdot[:6].copy() if self.root_cols == 6 else np.zeros(6)

        g = np.broadcast_to(g0, (nb, 4, 4)).copy()
        J = np.zeros((nb, 6, self.C))
        J[:, :, :self.root_cols] = np.eye(6)[:, :self.root_cols]
        Jd = np.zeros((nb, 6, self.C))
        eta = np.broadcast_to(eta0, (nb, 6)).copy()

        frames = []
        rods = []
        for stage in self.stages:
            for bucket in stage:
                i = bucket.idx
                out = bucket.apply(q, qdot, g[i], J[i], Jd[i], eta[i])
                if isinstance(bucket, _SoftBucket):
                    rods.append(out)
                    g[i] = out.g[:, -1]
                    J[i] = out.J[:, -1]
                    Jd[i] = out.Jd[:, -1]
                    eta[i] = out.eta[:, -1]
                else:
                    g[i], J[i], Jd[i], eta[i] = out
                    frames.append(FrameData(
                        names=bucket.names, branch_idx=i,
                        g=g[i].copy(), J=J[i].copy(), Jd=Jd[i].copy(),
                        eta=eta[i].copy()))
        return KinCache(root_g=g0, root_eta=eta0, frames=frames, rods=rods,
                        col_map=self.col_map, n_dofs=asm.n_dofs)

    def query(self, state, link_name, x=None, cache=None):
        """(pose, twist, J, Jdot) of a link frame, Jacobians globalized."""
        asm = self.assembly
        cache = cache or self.evaluate(state)
        if link_name == asm.root.name:
            J = np.zeros((6, asm.n_dofs))
            J[:, :self.root_cols] = np.eye(6)[:, :self.root_cols]
            return cache.root_g, cache.root_eta, J, np.zeros_like(J)
        if link_name not in self.where:
            raise KeyError("unknown link %r" % link_name)
        si, bi, mi = self.where[link_name]
        bucket = self.stages[si][bi]
        branch = bucket.idx[mi]

        if not isinstance(bucket, _SoftBucket):
            if x is not None:
                raise ValueError("%r is rigid; arclength does not apply" % link_name)
            for fd in cache.frames:
                if link_name in fd.names:
                    m = fd.names.index(link_name)
                    return (fd.g[m], fd.eta[m],
                            cache.globalize(fd.J[m], branch),
                            cache.globalize(fd.Jd[m], branch))
            raise KeyError(link_name)

        rod = next(r for r in cache.rods if link_name in r.names)
        m = rod.names.index(link_name)
        spec = bucket.spec
        if x is None:
            x = spec.length
        if not 0.0 <= x <= spec.length + 1e-12:
            raise ValueError("arclength %g outside [0, %g]" % (x, spec.length))
        x = min(x, spec.length)
        hit = np.flatnonzero(np.abs(rod.node_x - x) < 1e-12)
        if hit.size:
            i = hit[0]
            return (rod.g[m, i], rod.eta[m, i],
                    cache.globalize(rod.J[m, i], branch),
                    cache.globalize(rod.Jd[m, i], branch))
        i = int(np.searchsorted(rod.node_x, x)) - 1
        qrod = state.q[bucket.dof_idx[m]]
        qdrod = state.qdot[bucket.dof_idx[m]]
        g, J, Jd, eta = bucket.partial(
            i, x, qrod, qdrod,
            rod.g[m, i], rod.J[m, i], rod.Jd[m, i], rod.eta[m, i])
        return g, eta, cache.globalize(J, branch), cache.globalize(Jd, branch)


_ENGINES = weakref.WeakKeyDictionary()


def engine_for(assembly):
    """Memoized engine per assembly object."""
    try:
        return _ENGINES[assembly]
    except KeyError:
        eng = KinematicsEngine(assembly)
        _ENGINES[assembly] = eng
        return eng


def forward_kinematics(assembly, state, link_name, x=None):
    """World pose and body twist of a link frame.

    For soft links, ``x`` selects the cross-section arclength
    (defaults to the tip); rigid links take no arclength.
    """
    g, eta, _, _ = engine_for(assembly).query(state, link_name, x)
    return g, eta


def jacobian(assembly, state, link_name, x=None):
    """Body Jacobian (6 x n_dofs) of a link frame and its time rate.

    Columns of coordinates off the root path are identically zero.
    """
    _, _, J, Jd = engine_for(assembly).query(state, link_name, x)
    return J, Jd


def perturb_dof(assembly, state, k, h):
    """Shift coordinate k by h along its quasi-velocity direction.

    Root coordinates move the pose multiplicatively (g exp(h e_k)) so
    finite differences line up with body-frame Jacobian columns; all
    other coordinates are plain additions.
    """
    out = state.copy()
    if assembly.root.joint_kind == "free6" and k < 6:
        e = np.zeros(6)
        e[k] = h
        set_root_pose(out, root_pose(assembly, out) @ se3.exp_twist(e))
    else:
        out.q[k] += h
    return out


def advance_coordinates(assembly, state, h):
    """Move every coordinate along the current qdot for a time h.

    The root pose follows its body twist exactly (group exponential);
    the rest advance linearly.  Used for finite-difference checks of
    Jacobian rates.
    """
    out = state.copy()
    out.q = state.q + h * state.qdot
    if assembly.root.joint_kind == "free6":
        g = root_pose(assembly, state) @ se3.exp_twist(h * state.qdot[:6])
        set_root_pose(out, g)
    return out


def scatter_add_vector(out, cols, local):
    """Accumulate path-local coefficients into a global DoF vector."""
    keep = cols >= 0
    np.add.at(out, cols[keep], local[keep])


def scatter_add_matrix(out, cols, local):
    """Accumulate a path-local block into a global DoF matrix."""
    keep = cols >= 0
    out[np.ix_(cols[keep], cols[keep])] += local[np.ix_(keep, keep)]
