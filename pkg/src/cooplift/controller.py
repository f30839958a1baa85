"""Per-robot decentralized controller: robust feedback share plus the
autonomous smooth switching law.

Each robot sees the broadcast error state xi, keeps one integrator phi_i,
and produces a thrust u_i = clamp(delta(phi_i) + u_f, 0, u_max) where u_f
is its quadrant's row of -F xi. The switching output eta is computed from
xi and acceleration estimates obtained by filtered backward differences of
the broadcast rates.

The certificate from the synthesis makes the map from the switching input
to eta strictly positive real; that map has only the switching share in its
direct term, so when the feedback share is active its (known) direct-term
contribution D0 * u_f is subtracted from the prediction error before
mixing. Without the subtraction the feedback feeds through the
accelerometer estimate and destabilizes the loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ACCEL_ROWS
from .errors import ContractError


@dataclass(frozen=True)
class ASSCParams:
    """Switching-law parameters shared by all robots (gains may vary per robot)."""

    k: np.ndarray
    u_p: float
    u_n: float
    phi_p: float
    phi_0: np.ndarray
    phi_clamp: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "k", np.atleast_1d(np.asarray(self.k, dtype=float)))
        object.__setattr__(self, "phi_0",
                           np.atleast_1d(np.asarray(self.phi_0, dtype=float)))
        if np.any(self.k <= 0):
            raise ContractError("switching gains must be positive")
        if self.u_p <= self.u_n:
            raise ContractError("upper thrust limit must exceed the lower one")
        if self.phi_p <= 0:
            raise ContractError("ramp width phi_p must be positive")

    def gain(self, robot: int) -> float:
        return float(self.k[robot % len(self.k)])

    def initial_phi(self, robot: int) -> float:
        return float(self.phi_0[robot % len(self.phi_0)])

    @classmethod
    def from_initial_thrust(cls, k, u_p, u_n, phi_p, thrust, phi_clamp=None):
        """phi_0 chosen so the switching function starts at `thrust`."""
        if not u_n <= thrust <= u_p:
            raise ContractError("initial thrust outside the switching range")
        phi0 = phi_p * (thrust - 0.0) / u_p if thrust >= 0 else 0.0
        return cls(k=np.asarray(k, dtype=float), u_p=u_p, u_n=u_n, phi_p=phi_p,
                   phi_0=np.atleast_1d(phi0), phi_clamp=phi_clamp)


@dataclass(frozen=True)
class ControllerConfig:
    """Matrices and timing shared by every robot controller."""

    f: np.ndarray
    g: np.ndarray
    c0: np.ndarray
    d0: np.ndarray
    d0_hat: np.ndarray
    dt_c: float
    feedback_enabled: bool = True
    accel_cutoff_hz: float = 20.0

    def __post_init__(self):
        for name in ("f", "g", "c0", "d0", "d0_hat"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.dt_c <= 0:
            raise ContractError("controller period must be positive")
        n_out, n_state = self.c0.shape
        if self.f.shape != (n_out, n_state) or self.g.shape != (n_out, n_out):
            raise ContractError("controller matrices have inconsistent shapes")
        if self.d0.shape != (n_out, n_out) or self.d0_hat.shape != (n_out, n_out):
            raise ContractError("direct-term matrices have inconsistent shapes")


def default_d0_hat(d0, nominal_system) -> np.ndarray:
    """Direct-term weight for the acceleration estimate.

    In the linear model the four measured accelerations equal
    B_acc (U - U_r), so D0 (U - U_r) is recovered by D0 B_acc^-1 applied to
    the acceleration vector, with B_acc taken from the nominal design point.
    """
    b_acc = np.asarray(nominal_system.b, dtype=float)[list(ACCEL_ROWS), :]
    return np.asarray(d0, dtype=float) @ np.linalg.inv(b_acc)


@dataclass
class RobotControllerState:
    """Mutable per-robot memory: the ASSC integrator and the rate filter."""

    phi: float
    quadrant: int
    filt_rate: np.ndarray = field(default_factory=lambda: np.zeros(4))
    prev_filt_rate: np.ndarray = field(default_factory=lambda: np.zeros(4))
    initialized: bool = False


def switching(phi, params: ASSCParams):
    """Saturating ramp delta(phi): U_n below zero, linear up to U_p at phi_p."""
    phi = np.asarray(phi, dtype=float)
    ramp = params.u_p / params.phi_p * phi
    out = np.where(phi >= params.phi_p, params.u_p,
                   np.where(phi >= 0.0, ramp, params.u_n))
    return float(out) if out.ndim == 0 else out


def assc_update(phi, eta_q, k, dt, clamp=None):
    """Explicit-Euler integrator step phi' = phi - k * eta_q * dt."""
    if dt <= 0:
        raise ContractError("dt must be positive")
    phi_new = phi - k * eta_q * dt
    if clamp is not None:
        phi_new = min(max(phi_new, clamp[0]), clamp[1])
    return phi_new


def estimate_accels(rates, state: RobotControllerState, dt,
                    cutoff_hz=20.0) -> np.ndarray:
    """Backward difference of one-pole low-passed rates; first call gives zeros."""
    if dt <= 0:
        raise ContractError("dt must be positive")
    rates = np.asarray(rates, dtype=float)
    if not state.initialized:
        state.filt_rate = rates.copy()
        state.prev_filt_rate = rates.copy()
        state.initialized = True
        return np.zeros(4)
    tau = 1.0 / (2.0 * np.pi * cutoff_hz)
    alpha = dt / (tau + dt)
    state.prev_filt_rate = state.filt_rate
    state.filt_rate = state.filt_rate + alpha * (rates - state.filt_rate)
    return (state.filt_rate - state.prev_filt_rate) / dt


def compute_eta(xi, accel_hat, cfg: ControllerConfig, u_f=None) -> np.ndarray:
    """Mixed switching output eta = G * (C0 xi + D0_hat accel - D0 u_f).

    The u_f correction removes the feedback share's contribution from the
    estimated direct term so eta matches the certified SPR output; passing
    u_f=None gives the plain accelerometer form.
    """
    xi = np.asarray(xi, dtype=float)
    accel_hat = np.asarray(accel_hat, dtype=float)
    zeta = cfg.c0 @ xi + cfg.d0_hat @ accel_hat
    if u_f is not None:
        zeta = zeta - cfg.d0 @ np.asarray(u_f, dtype=float)
    return cfg.g @ zeta


@dataclass(frozen=True)
class RobotCommand:
    """Thrust command plus the intermediate signals, for logging."""

    thrust: float
    u_s: float
    u_f: float
    eta_q: float
    eta: np.ndarray


def robot_command(robot: int, xi, state: RobotControllerState,
                  cfg: ControllerConfig, params: ASSCParams,
                  u_max: float) -> RobotCommand:
    """One controller tick for robot `robot`.

    Reads only the broadcast error state and this robot's own memory;
    updates the rate filter and the ASSC integrator in place.
    """
    xi = np.asarray(xi, dtype=float)
    rates = xi[list(ACCEL_ROWS)]
    accel_hat = estimate_accels(rates, state, cfg.dt_c, cfg.accel_cutoff_hz)
    if cfg.feedback_enabled:
        u_f4 = -cfg.f @ xi
        eta = compute_eta(xi, accel_hat, cfg, u_f=u_f4)
        u_f = float(u_f4[state.quadrant])
    else:
        eta = compute_eta(xi, accel_hat, cfg)
        u_f = 0.0
    u_s = switching(state.phi, params)
    thrust = float(np.clip(u_s + u_f, 0.0, u_max))
    eta_q = float(eta[state.quadrant])
    state.phi = assc_update(state.phi, eta_q, params.gain(robot), cfg.dt_c,
                            clamp=params.phi_clamp)
    return RobotCommand(thrust=thrust, u_s=float(u_s), u_f=u_f,
                        eta_q=eta_q, eta=eta)


def _ramp_integral(phi, params: ASSCParams) -> float:
    """Closed-form integral of delta from 0 to phi."""
    up, un, pp = params.u_p, params.u_n, params.phi_p
    if phi < 0:
        return un * phi
    if phi < pp:
        return up * phi * phi / (2.0 * pp)
    return up * pp / 2.0 + up * (phi - pp)


def storage_value(phi, u_r, params: ASSCParams) -> float:
    """Passivity storage V = sum_i int_0^phi_i (delta(s) - u_r_i) / (2 k_i) ds."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    u_r = np.atleast_1d(np.asarray(u_r, dtype=float))
    if phi.shape != u_r.shape:
        raise ContractError("phi and u_r must have matching lengths")
    if np.any(u_r < params.u_n - 1e-12) or np.any(u_r > params.u_p + 1e-12):
        raise ContractError("stationary inputs must lie within [U_n, U_p]")
    total = 0.0
    for i, (p, ur) in enumerate(zip(phi, u_r)):
        total += (_ramp_integral(p, params) - ur * p) / (2.0 * params.gain(i))
    return float(total)


__all__ = [
    "ASSCParams", "ControllerConfig", "RobotControllerState", "RobotCommand",
    "default_d0_hat", "switching", "assc_update", "estimate_accels",
    "compute_eta", "robot_command", "storage_value",
]
