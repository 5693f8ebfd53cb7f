"""Flat PD controller, references, and the wrench synthesis."""

import math

import numpy as np
import pytest

from dodecapod import control, dynamics, links, shell_model

PARAMS = shell_model.SimpleModelParams.from_drone()


class TestControlGains:
    def test_defaults_critically_damped(self):
        g = control.ControlGains()
        assert np.allclose(g.kp, 1.0)
        assert np.allclose(g.kd, 2.0)

    def test_scalar_broadcast(self):
        g = control.ControlGains(kp=4.0)
        assert np.allclose(g.kp, 4.0)
        assert np.allclose(g.kd, 4.0)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            control.ControlGains(kp=0.0)
        with pytest.raises(ValueError, match="positive"):
            control.ControlGains(kp=1.0, kd=-1.0)


class TestFlatReference:
    def test_inconsistent_rate_rejected(self):
        with pytest.raises(ValueError, match="inconsistent"):
            control.FlatReference(
                value=lambda t: np.array([t, 0.0, 0.0, 0.0]),
                rate=lambda t: np.array([-1.0, 0.0, 0.0, 0.0]),
                accel=lambda t: np.zeros(4))

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError, match="4-vector"):
            control.FlatReference(value=lambda t: np.zeros(3),
                                  rate=lambda t: np.zeros(3),
                                  accel=lambda t: np.zeros(3))

    def test_consistent_accepted(self):
        ref = control.FlatReference(
            value=lambda t: np.array([math.sin(t), 0.0, 0.5 * t * t, 2.0]),
            rate=lambda t: np.array([math.cos(t), 0.0, t, 0.0]),
            accel=lambda t: np.array([-math.sin(t), 0.0, 1.0, 0.0]))
        assert ref.open_loop == (False, False)


class TestReferenceFactories:
    def test_hold_is_constant(self):
        ref = control.hold_reference(z=0.4, psi=1.0)
        for t in (0.0, 3.0, 100.0):
            assert np.allclose(ref.value(t), [0.0, 0.0, 0.4, 1.0])
            assert np.allclose(ref.rate(t), 0.0)
            assert np.allclose(ref.accel(t), 0.0)

    def test_semicircle_endpoints_and_geometry(self):
        radius, duration = 2.0, 60.0
        ref = control.semicircle_reference(radius, duration)
        assert np.allclose(ref.value(0.0), [0.0, 0.0, 0.0, 0.0])
        assert np.allclose(ref.value(duration),
                           [0.0, 2.0 * radius, 0.0, math.pi], atol=1e-12)
        assert np.allclose(ref.rate(0.0), 0.0)
        assert np.allclose(ref.rate(duration), 0.0, atol=1e-12)
        # the path stays on the circle centred at (0, R) and the
        # heading stays tangent to it
        for t in np.linspace(0.0, duration, 13):
            x, y, z, psi = ref.value(t)
            assert abs(math.hypot(x, y - radius) - radius) < 1e-12
            assert abs(z) < 1e-15
            vx, vy, _, _ = ref.rate(t)
            speed = math.hypot(vx, vy)
            if speed > 1e-9:
                assert abs(math.atan2(vy, vx) - psi) < 1e-9

    def test_semicircle_holds_after_duration(self):
        ref = control.semicircle_reference(2.0, 60.0)
        assert np.allclose(ref.value(61.0), ref.value(60.0))
        assert np.allclose(ref.rate(75.0), 0.0)

    def test_bad_arguments_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            control.semicircle_reference(radius=-1.0)


class TestFlatPdController:
    def test_zero_error_zero_output(self):
        ref = control.hold_reference()
        nu = control.flat_pd_controller(0.0, np.zeros(6), np.zeros(6), ref)
        assert np.allclose(nu, 0.0)

    def test_pure_depth_error_gain_four(self):
        # K_p = K_d = 4: poles at -2 double, nu_z = 4 e_z from rest
        ref = control.hold_reference(z=0.1)
        gains = control.ControlGains(kp=4.0, kd=4.0)
        nu = control.flat_pd_controller(0.0, np.zeros(6), np.zeros(6),
                                        ref, gains)
        assert abs(nu[2] - 4.0 * 0.1) < 1e-14
        assert np.allclose(nu[[0, 1, 3]], 0.0)

    def test_heading_error_wraps(self):
        ref = control.hold_reference(psi=math.radians(179.0))
        q = np.zeros(6)
        q[2] = math.radians(-179.0)
        nu = control.flat_pd_controller(0.0, q, np.zeros(6), ref)
        # the short way round is -2 degrees, not +358
        assert abs(nu[3] - (-math.radians(2.0))) < 1e-12

    def test_open_loop_axis_passes_acceleration(self):
        # large planar offsets in the reference must not leak into the
        # open-loop axes; the closed-loop z axis still sees its error
        accel = np.array([0.3, -0.2, 0.0, 0.0])
        offset = np.array([5.0, -3.0, 9.9, 0.0])
        ref = control.FlatReference(
            value=lambda t: offset + 0.5 * accel * t * t,
            rate=lambda t: accel * t,
            accel=lambda t: accel.copy(),
            open_loop=(True, True))
        nu = control.flat_pd_controller(0.0, np.zeros(6), np.zeros(6), ref)
        assert nu[0] == accel[0] and nu[1] == accel[1]
        assert abs(nu[2] - (0.0 + 2.0 * 0.0 + 1.0 * 9.9)) < 1e-12

    def test_rate_feedback_uses_world_rates(self):
        # body-frame surge at 90 degree yaw moves the world y-axis
        ref = control.hold_reference()
        q = np.zeros(6)
        q[2] = math.pi / 2.0
        qdot = np.zeros(6)
        qdot[3] = 0.2
        nu = control.flat_pd_controller(0.0, q, qdot, ref)
        assert abs(nu[0]) < 1e-12
        assert abs(nu[1] - (-2.0 * 0.2)) < 1e-12


class TestWrenchFromNu:
    def test_zero_nu_at_equilibrium_zero_wrench(self):
        wrench = control.wrench_from_nu(np.zeros(4), np.zeros(6),
                                        np.zeros(6), PARAMS)
        assert np.allclose(wrench, 0.0)

    def test_hover_compensates_net_weight(self):
        heavy = shell_model.SimpleModelParams.from_drone(net_weight=0.3)
        wrench = control.wrench_from_nu(np.zeros(4), np.zeros(6),
                                        np.zeros(6), heavy)
        assert abs(wrench[5] - 0.3) < 1e-12
        assert np.allclose(np.delete(wrench, 5), 0.0, atol=1e-12)

    def test_yaw_only_nu_gives_moment_only_wrench(self):
        nu = np.array([0.0, 0.0, 0.0, 0.8])
        wrench = control.wrench_from_nu(nu, np.zeros(6), np.zeros(6), PARAMS)
        assert abs(wrench[2]) > 0.0
        assert np.allclose(wrench[3:], 0.0, atol=1e-12)

    def test_roll_pitch_channels_always_zero(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            q = rng.uniform(-0.5, 0.5, 6)
            qdot = rng.uniform(-0.3, 0.3, 6)
            nu = rng.uniform(-1.0, 1.0, 4)
            wrench = control.wrench_from_nu(nu, q, qdot, PARAMS)
            assert wrench[0] == 0.0 and wrench[1] == 0.0

    def test_inverse_dynamics_realizes_heave_and_yaw(self):
        # applying the synthesized wrench to the reduced model at rest
        # must reproduce the commanded heave and yaw accelerations;
        # only the (small) zeroed roll/pitch channels perturb them
        nu = np.array([0.0, 0.0, 0.02, 0.05])
        q = np.array([0.0, 0.0, 0.7, 1.0, -2.0, 0.4])
        wrench = control.wrench_from_nu(nu, q, np.zeros(6), PARAMS)
        assert wrench[0] == 0.0 and wrench[1] == 0.0
        _, qacc, _ = shell_model.simple_forward(q, np.zeros(6),
                                                np.zeros(12), PARAMS)
        assert np.allclose(qacc, 0.0, atol=1e-15)  # static balance
        qacc = np.linalg.solve(PARAMS.inertia,
                               wrench + PARAMS.static_wrench(q))
        assert abs(qacc[5] - nu[2]) < 2e-5
        assert abs(qacc[2] - nu[3]) < 2e-5


class TestClosedLoopOnSimplePlant:
    def test_depth_and_yaw_steps_match_second_order(self):
        # small steps, gains with poles at -0.5: the exact plant under
        # the flat controller must follow the linear prediction
        gains = control.ControlGains(kp=0.25)
        lam = 0.5
        for target, column in ((("z", 0.005), 5), (("psi", 0.03), 2)):
            name, amp = target
            ref = control.hold_reference(**{name: amp})
            ctl = control.SimpleController(ref, PARAMS, gains)
            res = shell_model.simple_simulate(
                np.zeros(6), np.zeros(6), 30.0, ctl, PARAMS, dt=2e-3)
            assert abs(res["omega"]).max() < PARAMS.speed_cap
            t = res["t"]
            lin = amp * (1.0 - (1.0 + lam * t) * np.exp(-lam * t))
            dev = np.abs(res["q"][:, column] - lin).max() / amp
            assert dev < 0.02, (name, dev)

    def test_semicircle_tracks_with_adequate_authority(self):
        # closed loop on the reduced plant itself: planar error decays
        # and roll/pitch stay small
        strong = shell_model.SimpleModelParams.from_drone(
            thrust_coef=8e-3, reaction_coef=8e-4)
        ref = control.semicircle_reference(2.0, 60.0)
        ctl = control.SimpleController(ref, strong,
                                       control.ControlGains(kp=0.25))
        res = shell_model.simple_simulate(np.zeros(6), np.zeros(6), 60.0,
                                          ctl, strong, dt=2e-3, log_dt=0.1)
        refs = np.array([ref.value(t) for t in res["t"]])
        planar = np.hypot(res["q"][:, 3] - refs[:, 0],
                          res["q"][:, 4] - refs[:, 1])
        rms = math.sqrt(float((planar**2).mean()))
        assert rms < 0.1
        final_psi = control.wrap_angle(refs[-1, 3] - res["q"][-1, 2])
        assert abs(final_psi) < math.radians(5.0)
        assert np.degrees(np.abs(res["q"][:, 0:2])).max() < 10.0


class TestTwinController:
    def test_speeds_follow_prescribed_order(self):
        asm = links.build_drone_assembly(links.DroneParams())
        state = links.neutral_state(asm)
        ref = control.hold_reference(z=0.2)
        ctl = control.TwinController(asm, ref, PARAMS)
        speeds, info = ctl(0.0, state)
        names = dynamics.prescribed_names(asm)
        assert speeds.shape == (len(names),)
        assert set(info) == {"nu", "wrench", "pair_input", "omega"}
        # same pipeline by hand
        nu = control.flat_pd_controller(0.0, state.q[:6], state.qdot[:6],
                                        ref, ctl.gains)
        wrench = control.wrench_from_nu(nu, state.q[:6], state.qdot[:6],
                                        PARAMS)
        expect = shell_model.allocate(wrench, PARAMS)
        for slot, name in enumerate(names):
            assert speeds[slot] == expect[int(name[1:3]) - 1]

    def test_removed_module_drops_its_speed(self):
        drone = links.DroneParams(removed_modules=(5,),
                                  removal_mode="module")
        asm = links.build_drone_assembly(drone)
        state = links.neutral_state(asm)
        ctl = control.TwinController(asm, control.hold_reference(z=0.2),
                                     PARAMS)
        speeds, info = ctl(0.0, state)
        names = dynamics.prescribed_names(asm)
        assert len(names) == 11
        assert all(not n.startswith("m05") for n in names)
        assert speeds.shape == (11,)
        assert np.allclose(np.sort(np.abs(speeds)),
                           np.sort(np.abs(np.delete(info["omega"], 4))))

    def test_zero_error_zero_speeds(self):
        asm = links.build_drone_assembly(links.DroneParams())
        state = links.neutral_state(asm)
        ctl = control.TwinController(asm, control.hold_reference(), PARAMS)
        speeds, _ = ctl(0.0, state)
        assert np.allclose(speeds, 0.0)
