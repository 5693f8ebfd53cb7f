"""Forward kinematics and Jacobian tests against finite differences."""

import math

import numpy as np
import pytest

from dodecapod import kinematics, links, se3


def single_rod_assembly(root_kind="fixed", length=0.15, bend=0.0):
    """Stationary or floating base carrying one soft rod."""
    root = links.RigidLinkSpec(
        name="base", joint_kind=root_kind,
        body_inertia=links.spatial_inertia(1.0, np.zeros(3), 1e-3 * np.eye(3)),
        attach_transform=np.eye(4))
    rod = links.SoftLinkSpec(
        name="rod", length=length, cross_section_radius=0.005,
        youngs_modulus=1e6, shear_modulus=1e6 / 3.0, density=1100.0,
        attach_transform=links.arc_transform(0.02, bend) if bend else np.eye(4))
    return links.make_assembly(root, [links.Branch(links=(rod,))])


def module_assembly():
    """Free base with one shaft-hook-flagellum chain (13 coordinates)."""
    root = links.RigidLinkSpec(
        name="base", joint_kind="free6",
        body_inertia=links.spatial_inertia(
            10.0, [0, 0, -0.03], 0.06 * np.eye(3)),
        attach_transform=np.eye(4))
    mount = links.pose_from(
        rotation=se3.exp_so3(np.array([0.0, -np.pi / 2.0, 0.0])),
        translation=(0.0, 0.0, 0.11))
    shaft = links.RigidLinkSpec(
        name="shaft", joint_kind="revolute", joint_axis=(1.0, 0.0, 0.0),
        body_inertia=links.slender_rod_inertia(0.03, (0, 0, 0), (0.03, 0, 0), 0.004),
        attach_transform=mount)
    hook = links.RigidLinkSpec(
        name="hook", joint_kind="fixed",
        body_inertia=links.slender_rod_inertia(0.01, (0, 0, 0), (0.028, 0.01, 0), 0.005),
        attach_transform=links.pose_from(translation=(0.03, 0.0, 0.0)))
    rod = links.SoftLinkSpec(
        name="rod", length=0.15, cross_section_radius=0.005,
        youngs_modulus=0.8e6, shear_modulus=0.8e6 / 3.0, density=1100.0,
        attach_transform=links.arc_transform(0.03, math.radians(60.0)))
    return links.make_assembly(
        root, [links.Branch(links=(shaft, hook, rod), module_id=1)],
        prescribed_names=["shaft"])


def random_state(asm, rng, strain_scale=3.0):
    q = np.zeros(asm.n_dofs)
    qdot = rng.normal(scale=1.5, size=asm.n_dofs)
    if asm.root.joint_kind == "free6":
        q[0:3] = rng.uniform(-0.4, 0.4, 3)
        q[3:6] = rng.normal(scale=0.5, size=3)
    start = asm.root.n_dofs
    q[start:] = rng.normal(scale=strain_scale, size=asm.n_dofs - start)
    return links.GeneralizedState(q, qdot)


def fd_jacobian(asm, state, name, x, h=1e-6):
    cols = []
    for k in range(asm.n_dofs):
        plus = kinematics.perturb_dof(asm, state, k, +h)
        minus = kinematics.perturb_dof(asm, state, k, -h)
        gp, _ = kinematics.forward_kinematics(asm, plus, name, x)
        gm, _ = kinematics.forward_kinematics(asm, minus, name, x)
        rel = se3.invert_pose(gm) @ gp
        cols.append(se3.log_pose(rel) / (2.0 * h))
    return np.array(cols).T


class TestReferenceConfiguration:
    def test_straight_rod_tip(self):
        asm = single_rod_assembly()
        state = links.neutral_state(asm)
        g, eta = kinematics.forward_kinematics(asm, state, "rod", 0.15)
        assert np.allclose(g[:3, 3], [0.15, 0, 0], atol=1e-14)
        assert np.allclose(g[:3, :3], np.eye(3), atol=1e-14)
        assert np.allclose(eta, 0.0)

    def test_drone_flagella_follow_hook_tangents(self):
        asm = links.build_drone_assembly()
        params = links.DroneParams()
        state = links.neutral_state(asm)
        for j in (1, 4, 9):
            branch = asm.module_branch(j)
            base = np.eye(4)
            for link in branch.links:
                base = base @ link.attach_transform
            g, _ = kinematics.forward_kinematics(asm, state, "m%02d_flag" % j, 0.0)
            assert np.allclose(g, base, atol=1e-12)
            tip, _ = kinematics.forward_kinematics(asm, state, "m%02d_flag" % j)
            expect = base @ links.pose_from(
                translation=(params.flagellum_length, 0, 0))
            assert np.allclose(tip, expect, atol=1e-12)

    def test_rigid_transport_in_z(self):
        asm = links.build_drone_assembly()
        s0 = links.neutral_state(asm)
        s1 = links.neutral_state(asm)
        s1.q[5] = 1.0
        for name, x in [("m03_shaft", None), ("m07_flag", 0.1), ("m12_flag", None)]:
            g0, _ = kinematics.forward_kinematics(asm, s0, name, x)
            g1, _ = kinematics.forward_kinematics(asm, s1, name, x)
            assert np.allclose(g1[:3, 3] - g0[:3, 3], [0, 0, 1], atol=1e-12)
            assert np.allclose(g1[:3, :3], g0[:3, :3], atol=1e-12)

    def test_quarter_circle_arc(self):
        asm = single_rod_assembly()
        state = links.neutral_state(asm)
        L = 0.15
        kappa = math.pi / (2.0 * L)
        state.q[4] = kappa          # constant bending about z
        g, _ = kinematics.forward_kinematics(asm, state, "rod", L)
        radius = 2.0 * L / math.pi
        assert np.allclose(g[:3, 3], [radius, radius, 0.0], atol=1e-9)
        assert np.allclose(g[:3, 0], [0.0, 1.0, 0.0], atol=1e-9)
        # midpoint lies on the same circle, rotated half as far
        gm, _ = kinematics.forward_kinematics(asm, state, "rod", L / 2.0)
        r_c = 1.0 / kappa
        assert np.allclose(gm[:3, 3],
                           [r_c * math.sin(math.pi / 4.0),
                            r_c * (1.0 - math.cos(math.pi / 4.0)), 0.0],
                           atol=1e-9)

    def test_motor_angle_spins_flagellum(self):
        asm = module_assembly()
        state = links.neutral_state(asm)
        state.q[6] = 1.3
        g, _ = kinematics.forward_kinematics(asm, state, "rod", 0.15)
        # spinning about the face normal keeps the tip on a circle
        # centered on the shaft axis
        mount = asm.link("shaft").attach_transform
        axis = mount[:3, :3] @ np.array([1.0, 0.0, 0.0])
        center = mount[:3, 3]
        s0 = links.neutral_state(asm)
        g0, _ = kinematics.forward_kinematics(asm, s0, "rod", 0.15)
        r1 = g[:3, 3] - center
        r0 = g0[:3, 3] - center
        assert abs(r1 @ axis - r0 @ axis) < 1e-12
        assert abs(np.linalg.norm(r1) - np.linalg.norm(r0)) < 1e-12
        assert np.linalg.norm(g[:3, 3] - g0[:3, 3]) > 0.01


class TestJacobian:
    def test_shell_identity_block(self):
        asm = links.build_drone_assembly()
        state = links.neutral_state(asm)
        J, Jd = kinematics.jacobian(asm, state, "shell")
        assert np.allclose(J[:, :6], np.eye(6))
        assert np.allclose(J[:, 6:], 0.0)
        assert np.allclose(Jd, 0.0)

    def test_tree_locality(self):
        asm = links.build_drone_assembly()
        rng = np.random.default_rng(5)
        state = random_state(asm, rng)
        J, Jd = kinematics.jacobian(asm, state, "m01_flag", 0.12)
        on_path = np.zeros(90, dtype=bool)
        on_path[0:6] = True
        on_path[asm.dof_map["m01_shaft"]] = True
        on_path[asm.dof_map["m01_flag"]] = True
        assert np.all(J[:, ~on_path] == 0.0)
        assert np.all(Jd[:, ~on_path] == 0.0)
        assert np.linalg.norm(J[:, on_path]) > 0.1

    def test_finite_difference_module(self):
        asm = module_assembly()
        rng = np.random.default_rng(17)
        for trial in range(50):
            state = random_state(asm, rng)
            x = None if trial % 3 == 0 else rng.uniform(0.0, 0.15)
            name = "rod" if trial % 4 else "hook"
            if name == "hook":
                x = None
            J, _ = kinematics.jacobian(asm, state, name, x)
            Jfd = fd_jacobian(asm, state, name, x)
            err = np.linalg.norm(Jfd - J) / max(1.0, np.linalg.norm(J))
            assert err < 1e-5

    def test_finite_difference_drone(self):
        asm = links.build_drone_assembly()
        rng = np.random.default_rng(23)
        for trial in range(5):
            state = random_state(asm, rng)
            name, x = [("m03_shaft", None), ("m07_flag", 0.15),
                       ("m07_flag", 0.083), ("m11_flag", None),
                       ("shell", None)][trial]
            J, _ = kinematics.jacobian(asm, state, name, x)
            h = 1e-6
            for k in range(90):
                if not np.any(J[:, k]) and k >= 6:
                    continue    # off-path columns checked in locality test
                gp, _ = kinematics.forward_kinematics(
                    asm, kinematics.perturb_dof(asm, state, k, +h), name, x)
                gm, _ = kinematics.forward_kinematics(
                    asm, kinematics.perturb_dof(asm, state, k, -h), name, x)
                col = se3.log_pose(se3.invert_pose(gm) @ gp) / (2.0 * h)
                assert np.linalg.norm(col - J[:, k]) < 1e-5 * max(1.0, np.linalg.norm(J))

    def test_jacobian_rate_module(self):
        asm = module_assembly()
        rng = np.random.default_rng(29)
        h = 1e-4
        for trial in range(20):
            state = random_state(asm, rng)
            x = None if trial % 2 else rng.uniform(0.01, 0.15)
            J, Jd = kinematics.jacobian(asm, state, "rod", x)
            Jp, _ = kinematics.jacobian(
                asm, kinematics.advance_coordinates(asm, state, +h), "rod", x)
            Jm, _ = kinematics.jacobian(
                asm, kinematics.advance_coordinates(asm, state, -h), "rod", x)
            Jd_fd = (Jp - Jm) / (2.0 * h)
            err = np.linalg.norm(Jd_fd - Jd) / max(1.0, np.linalg.norm(Jd))
            assert err < 1e-4

    def test_jacobian_rate_drone(self):
        asm = links.build_drone_assembly()
        rng = np.random.default_rng(31)
        h = 1e-4
        for trial in range(3):
            state = random_state(asm, rng)
            name = ["m05_flag", "m02_flag", "m09_shaft"][trial]
            J, Jd = kinematics.jacobian(asm, state, name)
            Jp, _ = kinematics.jacobian(
                asm, kinematics.advance_coordinates(asm, state, +h), name)
            Jm, _ = kinematics.jacobian(
                asm, kinematics.advance_coordinates(asm, state, -h), name)
            err = np.linalg.norm((Jp - Jm) / (2.0 * h) - Jd)
            assert err < 1e-4 * max(1.0, np.linalg.norm(Jd))

    def test_twist_equals_jacobian_times_qdot(self):
        asm = links.build_drone_assembly()
        rng = np.random.default_rng(37)
        state = random_state(asm, rng)
        for name, x in [("shell", None), ("m04_shaft", None),
                        ("m06_flag", 0.05), ("m06_flag", None)]:
            g, eta = kinematics.forward_kinematics(asm, state, name, x)
            J, _ = kinematics.jacobian(asm, state, name, x)
            assert np.allclose(eta, J @ state.qdot, atol=1e-12)


class TestArclengthQueries:
    def test_node_and_between_node_consistency(self):
        asm = single_rod_assembly()
        rng = np.random.default_rng(41)
        state = random_state(asm, rng, strain_scale=1.5)
        spec = asm.link("rod")
        q_rod = state.q[asm.dof_map["rod"]]

        def field(x):
            return links.strain_field(spec, q_rod, np.asarray(x))

        # one Magnus step per quadrature interval: fourth order in the
        # interval length, well under 1e-6 at working curvatures
        for x in [0.0, 0.031, 0.0755, 0.11, 0.15]:
            g, _ = kinematics.forward_kinematics(asm, state, "rod", x)
            oracle = se3.exp_varying_strain(field, 0.0, x, segments=64) \
                if x > 0 else np.eye(4)
            assert np.allclose(g, oracle, atol=1e-6)

    def test_node_count_refinement_is_fourth_order(self):
        asm = single_rod_assembly()
        rng = np.random.default_rng(41)
        state = random_state(asm, rng, strain_scale=4.0)
        spec = asm.link("rod")
        q_rod = state.q[asm.dof_map["rod"]]

        def field(x):
            return links.strain_field(spec, q_rod, np.asarray(x))

        oracle = se3.exp_varying_strain(field, 0.0, spec.length, segments=512)
        errs = []
        for n_quad in (10, 20):
            eng = kinematics.KinematicsEngine(asm, n_quad=n_quad)
            g, _, _, _ = eng.query(state, "rod", spec.length)
            errs.append(np.abs(g - oracle).max())
        # halving the interval length must cut the error by about 2^4
        assert errs[1] < errs[0] / 8.0

    def test_constant_strain_exact_between_nodes(self):
        asm = single_rod_assembly()
        state = links.neutral_state(asm)
        xi = np.array([2.0, -1.0, 3.0, 1.0, 0.0, 0.0])
        state.q[asm.dof_map["rod"]][::2] = xi[:3]   # constant components
        for x in [0.013, 0.074, 0.12]:
            g, _ = kinematics.forward_kinematics(asm, state, "rod", x)
            assert np.allclose(g, se3.exp_twist(xi, x), atol=1e-12)

    def test_out_of_range_rejected(self):
        asm = single_rod_assembly()
        state = links.neutral_state(asm)
        with pytest.raises(ValueError, match="arclength"):
            kinematics.forward_kinematics(asm, state, "rod", 0.2)
        with pytest.raises(ValueError, match="arclength"):
            kinematics.forward_kinematics(asm, state, "rod", -0.01)

    def test_unknown_link_rejected(self):
        asm = single_rod_assembly()
        state = links.neutral_state(asm)
        with pytest.raises(KeyError):
            kinematics.forward_kinematics(asm, state, "nope")

    def test_rigid_link_takes_no_arclength(self):
        asm = module_assembly()
        state = links.neutral_state(asm)
        with pytest.raises(ValueError, match="rigid"):
            kinematics.forward_kinematics(asm, state, "hook", 0.01)


class TestInextensibility:
    def test_linear_strain_fixed_at_reference(self):
        asm = links.build_drone_assembly()
        rng = np.random.default_rng(43)
        state = random_state(asm, rng)
        spec = asm.link("m01_flag")
        q_rod = state.q[asm.dof_map["m01_flag"]]
        xs = np.linspace(0.0, spec.length, 11)
        xi = links.strain_field(spec, q_rod, xs)
        assert np.allclose(xi[:, 3:], [1.0, 0.0, 0.0], atol=0.0)
