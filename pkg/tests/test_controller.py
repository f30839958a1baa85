"""Switching law, acceleration estimation, commands, storage function."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cooplift import controller as ctl
from cooplift import dynamics as dyn
from cooplift.errors import ContractError


def params(k=10.0, u_p=20.0, u_n=0.0, phi_p=1.0, phi_0=0.1, clamp=None):
    return ctl.ASSCParams(k=k, u_p=u_p, u_n=u_n, phi_p=phi_p,
                          phi_0=phi_0, phi_clamp=clamp)


def plain_config(f=None, g=None, d0_hat=None, feedback=True):
    c0 = dyn.default_c0()
    d0 = dyn.default_d0()
    return ctl.ControllerConfig(
        f=np.zeros((4, 12)) if f is None else f,
        g=np.eye(4) if g is None else g,
        c0=c0, d0=d0,
        d0_hat=np.zeros((4, 4)) if d0_hat is None else d0_hat,
        dt_c=0.005, feedback_enabled=feedback)


# ---------------------------------------------------------------------------
# switching function


def test_switching_below_zero_gives_lower_limit():
    assert ctl.switching(-1.0, params(u_n=0.0)) == 0.0


def test_switching_at_ramp_top_gives_upper_limit():
    assert ctl.switching(1.0, params(u_p=20.0, phi_p=1.0)) == 20.0


def test_switching_ramp_midpoint():
    assert ctl.switching(0.5, params(u_p=20.0, phi_p=1.0)) == pytest.approx(10.0)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_switching_monotone_and_bounded(a, b):
    p = params()
    lo, hi = sorted((a, b))
    assert ctl.switching(lo, p) <= ctl.switching(hi, p) + 1e-12
    assert p.u_n <= ctl.switching(a, p) <= p.u_p


def test_bad_params_rejected():
    with pytest.raises(ContractError):
        params(k=-1.0)
    with pytest.raises(ContractError):
        params(u_p=0.0, u_n=0.0)
    with pytest.raises(ContractError):
        params(phi_p=0.0)


# ---------------------------------------------------------------------------
# integrator update


def test_assc_update_zero_eta_keeps_phi():
    assert ctl.assc_update(0.37, 0.0, 10.0, 0.005) == 0.37


def test_assc_update_arithmetic():
    # K = 10, eta = 0.2, dt = 5 ms -> delta phi = -0.01
    out = ctl.assc_update(1.0, 0.2, 10.0, 0.005)
    assert out == pytest.approx(0.99)


def test_assc_update_sign_reduces_thrust():
    p = params(phi_0=0.5)
    phi = 0.5
    phi2 = ctl.assc_update(phi, 0.3, 10.0, 0.005)
    assert ctl.switching(phi2, p) < ctl.switching(phi, p)


def test_assc_update_clamp():
    out = ctl.assc_update(0.0, 1.0, 10.0, 1.0, clamp=(-0.5, 0.5))
    assert out == -0.5


def test_assc_update_rejects_bad_dt():
    with pytest.raises(ContractError):
        ctl.assc_update(0.0, 0.0, 10.0, 0.0)


# ---------------------------------------------------------------------------
# acceleration estimation


def test_estimate_accels_first_call_zero():
    st_ = ctl.RobotControllerState(phi=0.0, quadrant=0)
    out = ctl.estimate_accels(np.array([1.0, 2.0, 3.0, 4.0]), st_, 0.005)
    assert np.allclose(out, 0.0)


def test_estimate_accels_constant_rates_decay_to_zero():
    st_ = ctl.RobotControllerState(phi=0.0, quadrant=0)
    rates = np.array([0.4, -0.2, 0.1, 0.0])
    out = None
    for _ in range(500):
        out = ctl.estimate_accels(rates, st_, 0.005)
    assert np.allclose(out, 0.0, atol=1e-12)


def test_estimate_accels_tracks_ramp_within_two_percent():
    # rate = a * t: after 5 filter time constants the lagged derivative is
    # within (1 - e^-5) of a, i.e. better than 2 %
    dt = 0.001
    cutoff = 20.0
    tau = 1.0 / (2 * np.pi * cutoff)
    a = 3.0
    st_ = ctl.RobotControllerState(phi=0.0, quadrant=0)
    steps = int(np.ceil(5 * tau / dt)) + 1
    out = None
    for k in range(steps):
        rates = np.full(4, a * k * dt)
        out = ctl.estimate_accels(rates, st_, dt, cutoff)
    assert np.all(np.abs(out - a) / a < 0.02)


def test_estimate_accels_rejects_zero_dt():
    st_ = ctl.RobotControllerState(phi=0.0, quadrant=0)
    with pytest.raises(ContractError):
        ctl.estimate_accels(np.zeros(4), st_, 0.0)


# ---------------------------------------------------------------------------
# output computation


def test_compute_eta_zero_inputs():
    cfg = plain_config()
    assert np.allclose(ctl.compute_eta(np.zeros(12), np.zeros(4), cfg), 0.0)


def test_compute_eta_reduces_to_c0xi():
    cfg = plain_config()
    xi = np.arange(12.0)
    assert np.allclose(ctl.compute_eta(xi, np.zeros(4), cfg), cfg.c0 @ xi)


def test_compute_eta_feedback_correction():
    cfg = plain_config(d0_hat=0.3 * np.eye(4))
    xi = np.ones(12)
    acc = np.array([1.0, -1.0, 0.5, 0.0])
    u_f = np.array([0.2, 0.0, -0.1, 0.4])
    out = ctl.compute_eta(xi, acc, cfg, u_f=u_f)
    expected = cfg.g @ (cfg.c0 @ xi + cfg.d0_hat @ acc - cfg.d0 @ u_f)
    assert np.allclose(out, expected)


# ---------------------------------------------------------------------------
# robot command


def test_command_feedback_off_negative_phi_gives_zero():
    cfg = plain_config(feedback=False)
    state = ctl.RobotControllerState(phi=-0.2, quadrant=1)
    cmd = ctl.robot_command(2, np.zeros(12), state, cfg, params(u_n=0.0), 20.0)
    assert cmd.thrust == 0.0


def test_command_zero_error_passes_switching_value():
    cfg = plain_config(feedback=True)
    p = params(phi_0=0.4)
    state = ctl.RobotControllerState(phi=0.4, quadrant=0)
    cmd = ctl.robot_command(0, np.zeros(12), state, cfg, p, 20.0)
    assert cmd.thrust == pytest.approx(ctl.switching(0.4, p))


def test_command_clamps_at_rotor_ceiling():
    f = np.zeros((4, 12))
    f[0, 0] = -30.0                      # u_f = 30 N for x error of 1 m
    cfg = plain_config(f=f, feedback=True)
    state = ctl.RobotControllerState(phi=0.5, quadrant=0)
    xi = np.zeros(12)
    xi[0] = 1.0
    cmd = ctl.robot_command(0, xi, state, cfg, params(), 14.2)
    assert cmd.thrust == 14.2


def test_command_reads_only_own_state():
    cfg = plain_config(feedback=True)
    xi = np.linspace(-1, 1, 12)
    states = [ctl.RobotControllerState(phi=0.1 * i, quadrant=i // 2)
              for i in range(8)]
    first = [ctl.robot_command(i, xi, s, cfg, params(), 20.0).thrust
             for i, s in enumerate(states)]
    # recompute in reversed order from fresh states: identical commands
    states2 = [ctl.RobotControllerState(phi=0.1 * i, quadrant=i // 2)
               for i in range(8)]
    second = [ctl.robot_command(i, xi, states2[i], cfg, params(), 20.0).thrust
              for i in reversed(range(8))][::-1]
    assert first == second


# ---------------------------------------------------------------------------
# storage function


def test_storage_zero_phi_is_zero():
    assert ctl.storage_value(np.zeros(8), np.full(8, 5.0), params()) == 0.0


def test_storage_ramp_closed_form():
    # single robot on the ramp with u_r = 0: V = U_p phi^2 / (4 K phi_p)
    p = params(k=10.0, u_p=20.0, phi_p=1.0)
    phi = 0.6
    expected = 20.0 * phi**2 / (4 * 10.0 * 1.0)
    assert ctl.storage_value([phi], [0.0], p) == pytest.approx(expected)


def test_storage_rejects_out_of_range_reference():
    with pytest.raises(ContractError):
        ctl.storage_value(np.zeros(4), np.full(4, 25.0), params(u_p=20.0))


def test_storage_nonnegative_at_stationary_input():
    # u_r = delta(phi*) for a common phi* makes phi* the minimizer of V
    p = params(k=10.0, u_p=20.0, u_n=0.0, phi_p=1.0)
    for phi_star in (-0.5, 0.2, 0.8, 1.5):
        u_r = ctl.switching(phi_star, p)
        if not p.u_n <= u_r <= p.u_p:
            continue
        grid = np.linspace(-2.0, 3.0, 201)
        values = [ctl.storage_value([phi], [u_r], p)
                  - ctl.storage_value([phi_star], [u_r], p) for phi in grid]
        assert min(values) >= -1e-12


def test_eta_converges_in_linear_closed_loop(rect_design):
    """Switching + feedback on the exact linear model drives eta to zero."""
    res = rect_design.result
    a, c0, d0 = rect_design.nominal.a, rect_design.c0, rect_design.d0
    b = rect_design.vertices[0].b
    model, layout = rect_design.model, rect_design.layout
    u_r = dyn.stationary_input(model, layout, dyn.FailureVector.nominal(layout))
    p = ctl.ASSCParams.from_initial_thrust(10.0, 20.0, 0.0, 20.0,
                                           2.0 * 9.81 / 8.0)
    dt = 0.005
    xi = np.zeros(12)
    xi[0], xi[4], xi[8], xi[10] = -3.0, -2.0, 0.0, -0.3
    phi = np.full(4, p.initial_phi(0))
    eta_norm = []
    for k in range(6000):
        u_s = ctl.switching(phi, p)
        u_f = -res.f @ xi
        eta = res.g @ (c0 @ xi + d0 @ (u_s - u_r))
        eta_norm.append(np.linalg.norm(eta))
        phi = phi - p.gain(0) * eta * dt
        xi = xi + dt * (a @ xi + b @ (u_f + u_s - u_r))
    assert max(eta_norm[-1000:]) < 1e-3
