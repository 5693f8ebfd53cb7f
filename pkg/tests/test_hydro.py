"""Hydrostatic and hydrodynamic load model tests."""

import math

import numpy as np
import pytest
from numpy.polynomial import Legendre, Polynomial

from dodecapod import hydro, kinematics, links, se3


def rod_assembly(density=1000.0, radius=0.005, length=0.15):
    """Fixed base carrying one straight soft rod along +x."""
    root = links.RigidLinkSpec(
        name="base", joint_kind="fixed",
        body_inertia=links.spatial_inertia(1.0, np.zeros(3), 1e-3 * np.eye(3)),
        attach_transform=np.eye(4))
    rod = links.SoftLinkSpec(
        name="rod", length=length, cross_section_radius=radius,
        youngs_modulus=1e6, shear_modulus=1e6 / 3.0, density=density,
        attach_transform=np.eye(4))
    return links.make_assembly(root, [links.Branch(links=(rod,))])


def lone_body(mass=10.75, com=(0.0, 0.0, -0.035), volume=None,
              cb=(0.0, 0.0, 0.0)):
    """Free-floating rigid body, neutrally buoyant unless told otherwise."""
    if volume is None:
        volume = mass / 1000.0
    return links.RigidLinkSpec(
        name="hull", joint_kind="free6",
        body_inertia=links.spatial_inertia(mass, com, 0.06 * np.eye(3)),
        attach_transform=np.eye(4),
        geometry=links.LinkGeometry(volume=volume, buoyancy_center=cb))


def random_state(asm, rng, strain_scale=1.5, speed=1.0):
    q = np.zeros(asm.n_dofs)
    qdot = rng.normal(scale=speed, size=asm.n_dofs)
    if asm.root.joint_kind == "free6":
        q[0:3] = rng.uniform(-0.4, 0.4, 3)
        q[3:6] = rng.normal(scale=0.5, size=3)
    start = asm.root.n_dofs
    q[start:] = rng.normal(scale=strain_scale, size=asm.n_dofs - start)
    return links.GeneralizedState(q, qdot)


class TestHydroParams:
    def test_defaults_validate(self):
        p = hydro.HydroParams()
        assert p.shell_drag.shape == (6, 6)
        assert p.shell_added_mass.shape == (6, 6)

    def test_diagonal_shorthand(self):
        p = hydro.HydroParams(shell_drag=(1, 2, 3, 4, 5, 6))
        assert np.allclose(p.shell_drag, np.diag([1, 2, 3, 4, 5, 6]))

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            hydro.HydroParams(water_density=0.0)

    def test_rejects_indefinite_drag(self):
        mat = np.diag([1.0, 1.0, 1.0, -2.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            hydro.HydroParams(shell_drag=mat)

    def test_rejects_negative_coefficient(self):
        with pytest.raises(ValueError):
            hydro.HydroParams(rod_drag_normal=-0.1)


class TestRodLoadDensity:
    section = dict(radius=0.005, area=math.pi * 0.005**2, density=1000.0)

    def test_neutral_section_at_rest(self):
        p = hydro.HydroParams()
        pose = links.pose_from(rotation=se3.exp_so3([0.3, -0.2, 0.9]),
                               translation=(1.0, 2.0, -3.0))
        out = hydro.rod_load_density(pose, np.zeros(6), p, **self.section)
        assert np.allclose(out, 0.0, atol=1e-14)

    def test_normal_drag_closed_form(self):
        p = hydro.HydroParams()
        v = np.array([0.0, 0.3, -0.4])
        eta = np.r_[np.zeros(3), v]
        out = hydro.rod_load_density(np.eye(4), eta, p, **self.section)
        want = -0.5 * p.water_density * p.rod_drag_normal * 0.01 \
            * np.linalg.norm(v) * v
        assert np.allclose(out[:3], 0.0)
        assert np.allclose(out[3:], want, rtol=1e-12)

    def test_tangential_drag_closed_form(self):
        p = hydro.HydroParams()
        eta = np.array([0.0, 0.0, 0.0, 0.7, 0.0, 0.0])
        out = hydro.rod_load_density(np.eye(4), eta, p, **self.section)
        want = -0.5 * p.water_density * p.rod_drag_tangent * 0.01 * 0.7**2
        assert np.allclose(out[3:], [want, 0.0, 0.0], rtol=1e-12)

    def test_drag_odd_in_velocity(self):
        p = hydro.HydroParams(rod_lift=0.8)
        rng = np.random.default_rng(7)
        for _ in range(10):
            eta = np.r_[np.zeros(3), rng.normal(size=3)]
            fwd = hydro.rod_load_density(np.eye(4), eta, p, **self.section)
            rev = hydro.rod_load_density(np.eye(4), -eta, p, **self.section)
            assert np.allclose(fwd, -rev, atol=1e-13)

    def test_lift_orthogonal_to_flow_and_axis(self):
        p = hydro.HydroParams(rod_lift=0.5)
        p0 = hydro.HydroParams(rod_lift=0.0)
        rng = np.random.default_rng(3)
        for _ in range(5):
            eta = np.r_[np.zeros(3), rng.normal(size=3)]
            lift = (hydro.rod_load_density(np.eye(4), eta, p, **self.section)
                    - hydro.rod_load_density(np.eye(4), eta, p0,
                                             **self.section))[3:]
            v_n = np.array([0.0, eta[4], eta[5]])
            assert abs(lift[0]) < 1e-14
            assert abs(lift @ v_n) < 1e-12

    def test_lift_direction(self):
        p = hydro.HydroParams(rod_lift=0.5)
        eta = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        out = hydro.rod_load_density(np.eye(4), eta, p, **self.section)
        lift_z = 0.5 * p.water_density * 0.5 * 0.01
        drag_y = -0.5 * p.water_density * p.rod_drag_normal * 0.01
        assert np.allclose(out[3:], [0.0, drag_y, lift_z], rtol=1e-12)

    def test_drag_power_nonpositive(self):
        p = hydro.HydroParams(rod_lift=0.3)
        rng = np.random.default_rng(11)
        for _ in range(20):
            v = rng.normal(size=3)
            eta = np.r_[np.zeros(3), v]
            out = hydro.rod_load_density(np.eye(4), eta, p, **self.section)
            assert out[3:] @ v <= 1e-15

    def test_buoyant_section_pushes_up(self):
        p = hydro.HydroParams()
        light = dict(self.section, density=800.0)
        out = hydro.rod_load_density(np.eye(4), np.zeros(6), p, **light)
        assert out[5] > 0.0
        assert np.allclose(out[[0, 1, 2, 3, 4]], 0.0)

    def test_batched_matches_scalar(self):
        p = hydro.HydroParams(rod_lift=0.2)
        rng = np.random.default_rng(5)
        poses = np.stack([links.pose_from(
            rotation=se3.exp_so3(rng.normal(size=3)),
            translation=rng.normal(size=3)) for _ in range(8)])
        etas = rng.normal(size=(8, 6))
        batch = hydro.rod_load_density(poses, etas, p, **self.section)
        for i in range(8):
            one = hydro.rod_load_density(poses[i], etas[i], p, **self.section)
            assert np.allclose(batch[i], one, atol=1e-14)


class TestShellLoad:
    def test_level_neutral_rest(self):
        p = hydro.HydroParams()
        body = lone_body()
        out = hydro.shell_load(np.eye(4), np.zeros(6), p, body)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_restoring_moment_at_ten_degrees(self):
        p = hydro.HydroParams()
        body = lone_body()
        tilt = math.radians(10.0)
        pose = links.pose_from(rotation=se3.exp_so3([tilt, 0.0, 0.0]))
        out = hydro.shell_load(pose, np.zeros(6), p, body)
        lever = 10.75 * 9.81 * 0.035 * math.sin(tilt)
        assert np.allclose(out[0], -lever, rtol=1e-12)
        assert np.allclose(out[1:], 0.0, atol=1e-12)

    def test_net_buoyancy_pushes_up(self):
        p = hydro.HydroParams()
        body = lone_body(volume=10.75 / 1000.0 * 1.02)
        out = hydro.shell_load(np.eye(4), np.zeros(6), p, body)
        f_world = np.eye(3) @ out[3:]
        assert f_world[2] > 0.0
        pose = links.pose_from(rotation=se3.exp_so3([0.4, 0.2, 0.0]))
        out = hydro.shell_load(pose, np.zeros(6), p, body)
        assert (pose[:3, :3] @ out[3:])[2] > 0.0

    def test_quadratic_drag_scaling(self):
        p = hydro.HydroParams()
        body = lone_body()
        eta = np.array([0.1, -0.2, 0.3, 0.4, -0.5, 0.6])
        one = hydro.shell_load(np.eye(4), eta, p, body)
        two = hydro.shell_load(np.eye(4), 2.0 * eta, p, body)
        assert np.allclose(two, 4.0 * one, rtol=1e-12)
        rev = hydro.shell_load(np.eye(4), -eta, p, body)
        assert np.allclose(rev, -one, rtol=1e-12)


class TestBuoyancyModel:
    def test_drone_is_neutral(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        model = hydro.buoyancy_model(asm, p)
        assert abs(model.buoyancy_residual(p)) < 1e-9 * model.net_mass
        assert model.is_neutral(p)
        assert model.net_mass == pytest.approx(10.75, abs=1e-9)

    def test_drone_metacentric_lever(self):
        asm = links.build_drone_assembly()
        model = hydro.buoyancy_model(asm, hydro.HydroParams())
        assert np.allclose(model.center_of_buoyancy_offset,
                           [0.0, 0.0, 0.035], atol=1e-9)

    def test_ballast_fraction_shifts_residual(self):
        params = links.DroneParams(buoyancy_fraction=0.98)
        asm = links.build_drone_assembly(params)
        p = hydro.HydroParams()
        model = hydro.buoyancy_model(asm, p)
        assert model.buoyancy_residual(p) == pytest.approx(-0.02 * 10.75,
                                                           abs=1e-9)
        assert not model.is_neutral(p)

    def test_offset_follows_the_pose(self):
        asm = links.build_drone_assembly()
        state = links.neutral_state(asm)
        state.q[0] = 0.5
        model = hydro.buoyancy_model(asm, hydro.HydroParams(), state=state)
        want = se3.exp_so3([0.5, 0.0, 0.0])[:3, :3] @ [0.0, 0.0, 0.035]
        assert np.allclose(model.center_of_buoyancy_offset, want, atol=1e-9)


def scaled_legendre_double_integral(length, k):
    """Twice-integrated scaled shifted Legendre polynomial on [0, L]."""
    leg = Legendre.basis(k, domain=[0.0, length])
    poly = leg.convert(kind=Polynomial) * math.sqrt(2 * k + 1)
    return poly.integ(2)


class TestAddedMass:
    def test_zero_coefficients_zero_matrix(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams(rod_added_mass=0.0,
                              shell_added_mass=np.zeros((6, 6)))
        state = links.neutral_state(asm)
        out = hydro.added_mass_contribution(asm, state, p)
        assert np.allclose(out, 0.0, atol=1e-15)

    def test_shell_block_isolated(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams(rod_added_mass=0.0)
        state = links.neutral_state(asm)
        out = hydro.added_mass_contribution(asm, state, p)
        assert np.allclose(out[:6, :6], p.shell_added_mass)
        out[:6, :6] = 0.0
        assert np.allclose(out, 0.0)

    def test_straight_rod_analytic_oracle(self):
        length, radius = 0.15, 0.005
        asm = rod_assembly(radius=radius, length=length)
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        got = hydro.added_mass_contribution(asm, state, p)

        m_t = p.water_density * p.rod_added_mass * math.pi * radius**2
        # transverse velocity shape of a bending coordinate is the
        # double integral of its curvature basis function
        shapes = [scaled_legendre_double_integral(length, k) for k in (0, 1)]
        gram = np.array([[float((a * b).integ()(length)) for b in shapes]
                         for a in shapes])
        want = m_t * gram
        scale = np.abs(want).max()
        # torsion produces no centerline motion
        assert np.allclose(got[0:2, :], 0.0, atol=1e-12 * scale)
        np.testing.assert_allclose(got[2:4, 2:4], want, atol=1e-10 * scale)
        np.testing.assert_allclose(got[4:6, 4:6], want, atol=1e-10 * scale)
        assert np.allclose(got[2:4, 4:6], 0.0, atol=1e-12 * scale)

    @staticmethod
    def dense_oracle(asm, state, p, per_interval=20):
        """Composite Gauss quadrature of J^T M_a J at arbitrary arclengths."""
        spec = asm.link("rod")
        engine = kinematics.engine_for(asm)
        cache = engine.evaluate(state)
        m_t = p.water_density * p.rod_added_mass * math.pi \
            * spec.cross_section_radius**2
        xg, wg = np.polynomial.legendre.leggauss(per_interval)
        nodes = cache.rods[0].node_x
        want = np.zeros((asm.n_dofs, asm.n_dofs))
        for a, b in zip(nodes[:-1], nodes[1:]):
            xs = 0.5 * (b - a) * xg + 0.5 * (a + b)
            ws = 0.5 * (b - a) * wg
            for x, w in zip(xs, ws):
                _, _, J, _ = engine.query(state, "rod", x, cache=cache)
                jn = J[4:6]
                want += w * m_t * jn.T @ jn
        return want, cache

    def test_straight_rod_dense_quadrature(self):
        asm = rod_assembly()
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        want, cache = self.dense_oracle(asm, state, p)
        got = hydro.added_mass_contribution(asm, state, p, cache=cache)
        np.testing.assert_allclose(got, want, rtol=0.0,
                                   atol=1e-8 * np.abs(want).max())

    def test_dense_quadrature_on_bent_states(self):
        # the node rule and the dense rule sample the same discretized
        # rod, so they agree to the inter-node consistency level
        asm = rod_assembly()
        p = hydro.HydroParams()
        rng = np.random.default_rng(17)
        for _ in range(5):
            state = random_state(asm, rng, strain_scale=1.0)
            want, cache = self.dense_oracle(asm, state, p)
            got = hydro.added_mass_contribution(asm, state, p, cache=cache)
            np.testing.assert_allclose(got, want, rtol=0.0,
                                       atol=1e-6 * np.abs(want).max())

    def test_symmetric_psd_on_random_states(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        rng = np.random.default_rng(23)
        for _ in range(20):
            state = random_state(asm, rng)
            out = hydro.added_mass_contribution(asm, state, p)
            assert np.allclose(out, out.T, atol=1e-12)
            assert np.linalg.eigvalsh(out).min() > -1e-10


class TestGeneralizedLoads:
    def test_reference_build_shell_balanced(self):
        # the volume trim zeroes the net load on the shell; the slightly
        # heavy rods keep only their own small sag moments
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        out = hydro.generalized_loads(asm, state, p)
        assert np.max(np.abs(out[:6])) < 1e-9
        rod_net_weight = 100.0 * np.pi * 0.005**2 * 9.81 * 0.15
        free = [k for k in asm.free_set if k >= 6]
        assert np.max(np.abs(out[free])) < rod_net_weight * 0.15

    def test_density_matched_build_in_equilibrium(self):
        asm = links.build_drone_assembly(
            links.DroneParams(flagellum_density=1000.0))
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        out = hydro.generalized_loads(asm, state, p)
        assert np.max(np.abs(out[list(asm.free_set)])) < 1e-9

    def test_matches_potential_gradient(self):
        params = links.DroneParams(flagellum_density=1150.0)
        asm = links.build_drone_assembly(params)
        p = hydro.HydroParams()
        rng = np.random.default_rng(31)
        state = random_state(asm, rng)
        state.qdot[:] = 0.0
        got = hydro.generalized_loads(asm, state, p)
        h = 1e-5
        fd = np.zeros(asm.n_dofs)
        for k in range(asm.n_dofs):
            plus = kinematics.perturb_dof(asm, state, k, +h)
            minus = kinematics.perturb_dof(asm, state, k, -h)
            fd[k] = -(hydro.potential_energy(asm, plus, p)
                      - hydro.potential_energy(asm, minus, p)) / (2.0 * h)
        np.testing.assert_allclose(fd, got, rtol=1e-6, atol=1e-7)

    def test_drag_dissipates(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams(rod_lift=0.2)
        rng = np.random.default_rng(41)
        for _ in range(10):
            state = random_state(asm, rng, speed=2.0)
            moving = hydro.generalized_loads(asm, state, p)
            still = hydro.generalized_loads(
                asm, links.GeneralizedState(state.q, np.zeros(asm.n_dofs)), p)
            assert state.qdot @ (moving - still) <= 1e-12

    def test_quadrature_refinement_static(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        rng = np.random.default_rng(43)
        state = random_state(asm, rng)
        state.qdot[:] = 0.0
        fine = kinematics.KinematicsEngine(asm, n_quad=20)
        q10 = hydro.generalized_loads(asm, state, p)
        q20 = hydro.generalized_loads(asm, state, p,
                                      cache=fine.evaluate(state))
        assert np.max(np.abs(q10 - q20)) < 1e-5 * (np.max(np.abs(q10)) + 1.0)

    def test_quadrature_refinement_moving(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        rng = np.random.default_rng(47)
        state = random_state(asm, rng)
        fine = kinematics.KinematicsEngine(asm, n_quad=20)
        q10 = hydro.generalized_loads(asm, state, p)
        q20 = hydro.generalized_loads(asm, state, p,
                                      cache=fine.evaluate(state))
        assert np.max(np.abs(q10 - q20)) < 1e-4 * (np.max(np.abs(q10)) + 1.0)


class TestPotentialEnergy:
    def test_lone_body_analytic(self):
        body = lone_body(volume=0.012, cb=(0.01, 0.0, 0.02))
        asm = links.make_assembly(body, [])
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        state.q[0:3] = [0.3, -0.2, 0.5]
        state.q[3:6] = [0.4, 1.0, -2.0]
        pose = links.root_pose(asm, state)
        z_com = (pose[:3, :3] @ [0.0, 0.0, -0.035] + pose[:3, 3])[2]
        z_cb = (pose[:3, :3] @ [0.01, 0.0, 0.02] + pose[:3, 3])[2]
        want = 9.81 * (10.75 * z_com - 1000.0 * 0.012 * z_cb)
        assert hydro.potential_energy(asm, state, p) == pytest.approx(
            want, rel=1e-12)

    def test_neutral_drone_depth_invariant(self):
        asm = links.build_drone_assembly()
        p = hydro.HydroParams()
        state = links.neutral_state(asm)
        e0 = hydro.potential_energy(asm, state, p)
        state.q[5] = -4.0
        e1 = hydro.potential_energy(asm, state, p)
        assert e1 == pytest.approx(e0, abs=1e-9)
