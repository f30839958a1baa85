"""Deterministic fixed-step closed-loop simulation.

Physics integrate with classical RK4 at `dt` under zero-order-hold thrusts;
the robot controllers tick every `dt_c` (an integer multiple of dt) from a
shared snapshot of the body-frame error state. Failure injection zeroes a
robot's applied thrust while its controller keeps running. Logs are
decimated to a fixed period and can be written as CSV.

Alongside the trajectory the run records two oracle channels: the exact
prediction error (from the true applied inputs and the stationary input of
the current failure pattern) and the storage-function value, together with
the per-tick passivity residual |dV/dt + eta'(U_s - U_r)|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import controller as ctl
from . import dynamics as dyn
from .errors import ContractError, SimulationAbort


@dataclass(frozen=True)
class ReferenceProfile:
    """World-frame reference generator.

    kind="step" holds the targets from t=0; kind="ramp" moves X, Y, Z (and
    psi) from the initial state to the targets at constant velocity over
    ramp_time seconds, then holds.
    """

    targets: np.ndarray
    kind: str = "step"
    ramp_time: float = 10.0
    start: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        if self.kind not in ("step", "ramp"):
            raise ContractError(f"unknown reference profile {self.kind!r}")
        if self.kind == "ramp" and self.ramp_time <= 0:
            raise ContractError("ramp_time must be positive")

    def refs(self, t):
        """(X_r, Y_r, Z_r, psi_r) and their world-frame rates at time t."""
        if self.kind == "step":
            return self.targets.copy(), np.zeros(4)
        frac = min(t / self.ramp_time, 1.0)
        pos = self.start + frac * (self.targets - self.start)
        vel = ((self.targets - self.start) / self.ramp_time
               if t < self.ramp_time else np.zeros(4))
        return pos, vel


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel Gaussian noise on the broadcast error state."""

    std: np.ndarray
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))
        if self.std.shape != (12,):
            raise ContractError("noise spec needs 12 per-channel deviations")
        if np.any(self.std < 0):
            raise ContractError("noise deviations must be non-negative")


@dataclass
class Scenario:
    """Everything one closed-loop run needs."""

    model: dyn.PayloadModel
    layout: dyn.AttachmentLayout
    controller_cfg: ctl.ControllerConfig
    assc: ctl.ASSCParams
    refs: ReferenceProfile
    initial_state: dyn.FullState
    duration: float
    dt: float = 1e-3
    failure: tuple | None = None      # (robot index, time)
    noise: NoiseSpec | None = None
    log_period: float = 0.2
    divergence_limit: float = 100.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ContractError("dt must be positive")
        if self.duration < self.dt and self.duration != 0.0:
            raise ContractError("duration must be zero or at least dt")
        if self.failure is not None:
            robot, t_f = self.failure
            if not 0 <= t_f <= self.duration:
                raise ContractError("failure time outside the run")
            if not 0 <= int(robot) < self.layout.n_robots:
                raise ContractError(f"unknown robot id {robot}")
        ratio = self.controller_cfg.dt_c / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ContractError("controller period must be a multiple of dt")


@dataclass
class TrajectoryLog:
    """Decimated closed-loop record plus run-level passivity diagnostics."""

    t: np.ndarray
    position: np.ndarray          # (n, 3) world X, Y, Z
    attitude: np.ndarray          # (n, 3) roll, pitch, yaw
    xi: np.ndarray                # (n, 12)
    thrusts: np.ndarray           # (n, N) applied
    phi: np.ndarray               # (n, N)
    eta: np.ndarray               # (n, 4)
    storage: np.ndarray           # (n,)
    zeta_exact: np.ndarray        # (n, 4)
    active_mask: np.ndarray       # (n,) bitfield
    passivity_residual_mean: float = math.nan
    passivity_ticks: int = 0

    @property
    def n_robots(self):
        return self.thrusts.shape[1]

    def failure_time(self):
        """First log time at which a robot is inactive, or None."""
        full = (1 << self.n_robots) - 1
        idx = np.nonzero(self.active_mask != full)[0]
        return float(self.t[idx[0]]) if idx.size else None

    def write_csv(self, stream):
        n = self.n_robots
        cols = (["t", "X", "Y", "Z", "roll", "pitch", "yaw"]
                + list(dyn.XI_LABELS)
                + [f"u_{i+1}" for i in range(n)]
                + [f"phi_{i+1}" for i in range(n)]
                + [f"eta_{i+1}" for i in range(4)]
                + ["V_c"]
                + [f"zeta_exact_{i+1}" for i in range(4)]
                + ["active_mask"])
        stream.write(",".join(cols) + "\n")
        for k in range(len(self.t)):
            row = np.concatenate([
                [self.t[k]], self.position[k], self.attitude[k], self.xi[k],
                self.thrusts[k], self.phi[k], self.eta[k], [self.storage[k]],
                self.zeta_exact[k],
            ])
            stream.write(",".join(f"{v:.10g}" for v in row))
            stream.write(f",{int(self.active_mask[k])}\n")

    def save_csv(self, path):
        with open(path, "w") as fh:
            self.write_csv(fh)


def step(state_vec, thrusts, dt, model, layout, active=None) -> np.ndarray:
    """One classical RK4 step of the nonlinear model under held thrusts."""
    k1 = dyn.nonlinear_derivative(state_vec, thrusts, model, layout, active)
    k2 = dyn.nonlinear_derivative(state_vec + 0.5 * dt * k1, thrusts, model, layout, active)
    k3 = dyn.nonlinear_derivative(state_vec + 0.5 * dt * k2, thrusts, model, layout, active)
    k4 = dyn.nonlinear_derivative(state_vec + dt * k3, thrusts, model, layout, active)
    return state_vec + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def error_state(state_vec, refs_world, ref_vel_world) -> np.ndarray:
    """Body-frame error state from a world-frame state and references."""
    x = np.asarray(state_vec, dtype=float)
    psi = x[5]
    c, s = np.cos(psi), np.sin(psi)
    rot = np.array([[c, s], [-s, c]])           # world -> body (yaw only)
    pos_err = rot @ (x[0:2] - refs_world[0:2])
    vel_err = rot @ (x[6:8] - ref_vel_world[0:2])
    return np.array([
        pos_err[0], vel_err[0], x[4], x[10],
        pos_err[1], vel_err[1], x[3], x[9],
        x[2] - refs_world[2], x[8] - ref_vel_world[2],
        x[5] - refs_world[3], x[11],
    ])


class Simulation:
    """Mutable closed-loop simulation state driven tick by tick."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.model = scenario.model
        self.layout = scenario.layout
        self.cfg = scenario.controller_cfg
        self.assc = scenario.assc
        self.t = 0.0
        self.state = scenario.initial_state.as_vector()
        n = self.layout.n_robots
        self.active = np.ones(n, dtype=bool)
        self.robot_states = [
            ctl.RobotControllerState(phi=scenario.assc.initial_phi(i),
                                     quadrant=self.layout.quadrant_of(i))
            for i in range(n)
        ]
        self.applied = np.zeros(n)
        self.rng = (np.random.default_rng(scenario.noise.seed)
                    if scenario.noise is not None else None)
        self.substeps = int(round(self.cfg.dt_c / scenario.dt))
        self._sigma = dyn.FailureVector.nominal(self.layout)
        self._u_r_robot = self._stationary_per_robot()

    # -- failure ------------------------------------------------------------
    def inject_failure(self, robot: int, t=None):
        """Zero robot's applied thrust from now on; its controller keeps running."""
        if not 0 <= robot < self.layout.n_robots:
            raise ContractError(f"unknown robot id {robot}")
        if not self.active[robot]:
            raise ContractError(f"robot {robot} already failed")
        self.active[robot] = False
        self._sigma = dyn.FailureVector.from_active(self.active, self.layout)
        self._u_r_robot = self._stationary_per_robot()

    def _stationary_per_robot(self):
        u_r_quad = dyn.stationary_input(self.model, self.layout, self._sigma)
        return dyn.quadrant_expand(u_r_quad, self.layout)

    # -- one controller tick + physics ---------------------------------------
    def controller_tick(self):
        """Compute commands from the broadcast error state; returns diagnostics.

        The returned phi values are the integrator states at the current
        time, before this tick's update.
        """
        refs, ref_vel = self.scenario.refs.refs(self.t)
        xi = error_state(self.state, refs, ref_vel)
        if self.rng is not None:
            xi = xi + self.scenario.noise.std * self.rng.standard_normal(12)
        phi_now = np.array([rs.phi for rs in self.robot_states])
        commands = np.empty(self.layout.n_robots)
        u_s = np.empty(self.layout.n_robots)
        eta = np.zeros(4)
        for i, rs in enumerate(self.robot_states):
            cmd = ctl.robot_command(i, xi, rs, self.cfg, self.assc,
                                    self.layout.u_max)
            commands[i] = cmd.thrust
            u_s[i] = cmd.u_s
            eta = cmd.eta        # identical across robots (same broadcast)
        self.applied = np.where(self.active, commands, 0.0)
        return xi, eta, u_s, phi_now

    def advance_physics(self):
        dt = self.scenario.dt
        for _ in range(self.substeps):
            self.state = step(self.state, self.applied, dt, self.model,
                              self.layout, self.active)
        self.t += self.cfg.dt_c

    def check_abort(self):
        refs, _ = self.scenario.refs.refs(self.t)
        if not np.all(np.isfinite(self.state)):
            raise SimulationAbort("nan", self.t, "non-finite state")
        err = np.linalg.norm(self.state[0:3] - refs[0:3])
        if err > self.scenario.divergence_limit:
            raise SimulationAbort("divergence", self.t,
                                  f"position error {err:.1f} m")

    # -- oracle channels ------------------------------------------------------
    def exact_zeta(self, xi):
        """Prediction error from the true applied inputs (simulator-side oracle)."""
        u_quad = dyn.quadrant_average(self.applied, self.layout, self.active)
        u_r_quad = dyn.quadrant_average(self._u_r_robot, self.layout, self.active)
        return self.cfg.c0 @ xi + self.cfg.d0 @ (u_quad - u_r_quad)

    def storage(self, phi=None):
        if phi is None:
            phi = np.array([rs.phi for rs in self.robot_states])
        return ctl.storage_value(phi, self._u_r_robot, self.assc)

    def switching_power(self, eta, u_s):
        """eta' (U_s - U_r) with the per-quadrant robot count folded in, so it
        equals the exact storage derivative."""
        per = self.layout.robots_per_quadrant
        u_s_quad = u_s.reshape(4, per).mean(axis=1)
        u_r_quad = self._u_r_robot.reshape(4, per).mean(axis=1)
        return float(eta @ (u_s_quad - u_r_quad)) * (per / 2.0)

    def mask_int(self):
        return int(np.sum(self.active.astype(int) << np.arange(self.layout.n_robots)))


def run_scenario(scenario: Scenario) -> TrajectoryLog:
    """Full closed-loop run, decimated to the scenario's log period."""
    sim = Simulation(scenario)
    dt_c = scenario.controller_cfg.dt_c
    n_ticks = int(round(scenario.duration / dt_c))
    log_stride = max(1, int(round(scenario.log_period / dt_c)))

    fail_tick = None
    if scenario.failure is not None:
        robot, t_f = scenario.failure
        fail_tick = int(math.ceil(t_f / dt_c - 1e-9))

    rows = {key: [] for key in ("t", "pos", "att", "xi", "u", "phi",
                                "eta", "v", "zeta", "mask")}
    residual_sum = 0.0
    residual_ticks = 0
    prev = None  # (storage V(t_k), power at t_k)

    for tick in range(n_ticks + 1):
        sigma_changed = fail_tick is not None and tick == fail_tick
        if sigma_changed:
            sim.inject_failure(int(scenario.failure[0]))
        xi, eta, u_s, phi_now = sim.controller_tick()
        v_now = sim.storage(phi_now)

        # exact storage-derivative identity over the previous control step:
        # V(t_k) - V(t_k-1) = -dt_c * eta(t_k-1)' (U_s(t_k-1) - U_r) + O(dt^2);
        # skipped across a failure tick because U_r (and V itself) jump there
        if prev is not None and not sigma_changed:
            v_prev, power_prev = prev
            residual_sum += abs((v_now - v_prev) / dt_c + power_prev)
            residual_ticks += 1

        if tick % log_stride == 0:
            rows["t"].append(sim.t)
            rows["pos"].append(sim.state[0:3].copy())
            rows["att"].append(sim.state[3:6].copy())
            rows["xi"].append(xi)
            rows["u"].append(sim.applied.copy())
            rows["phi"].append(phi_now)
            rows["eta"].append(eta.copy())
            rows["v"].append(v_now)
            rows["zeta"].append(sim.exact_zeta(xi))
            rows["mask"].append(sim.mask_int())

        if tick == n_ticks:
            break
        prev = (v_now, sim.switching_power(eta, u_s))
        sim.advance_physics()
        sim.check_abort()

    return TrajectoryLog(
        t=np.array(rows["t"]),
        position=np.array(rows["pos"]),
        attitude=np.array(rows["att"]),
        xi=np.array(rows["xi"]),
        thrusts=np.array(rows["u"]),
        phi=np.array(rows["phi"]),
        eta=np.array(rows["eta"]),
        storage=np.array(rows["v"]),
        zeta_exact=np.array(rows["zeta"]),
        active_mask=np.array(rows["mask"], dtype=np.int64),
        passivity_residual_mean=(residual_sum / residual_ticks
                                 if residual_ticks else math.nan),
        passivity_ticks=residual_ticks,
    )


_BAND_FLOORS = {"X": 0.05, "Y": 0.05, "Z": 0.05, "psi": 0.015}
_CHANNELS = ("X", "Y", "Z", "psi")


def metrics(log: TrajectoryLog, refs) -> dict:
    """Settling times, steady-state RMS and post-failure peaks per channel.

    Bands are 5 % of the commanded step with per-channel floors (0.05 m for
    positions, 0.015 rad for yaw). Settling is the earliest log time after
    which the channel stays inside its band; inf when it never holds.
    """
    if len(log.t) == 0:
        raise ContractError("empty log")
    refs = np.asarray(refs, dtype=float)
    series = {
        "X": log.position[:, 0], "Y": log.position[:, 1],
        "Z": log.position[:, 2], "psi": log.attitude[:, 2],
    }
    t_fail = log.failure_time()
    t0 = t_fail if t_fail is not None else 0.0
    out = {}
    tail = log.t >= log.t[-1] - 0.2 * (log.t[-1] - log.t[0]) if len(log.t) > 1 else slice(None)
    post = log.t >= t0
    for k, name in enumerate(_CHANNELS):
        v = series[name]
        band = max(0.05 * abs(refs[k] - v[0]), _BAND_FLOORS[name])
        err = np.abs(v - refs[k])
        outside = np.nonzero(err > band)[0]
        if outside.size == 0:
            settle = 0.0
        elif outside[-1] == len(v) - 1:
            settle = math.inf
        else:
            settle = float(log.t[outside[-1] + 1])
        out[f"settle_{name}"] = settle
        out[f"rms_{name}"] = float(np.sqrt(np.mean(err[tail] ** 2)))
        out[f"peak_dev_{name}"] = float(err[post].max())
    pos_err = log.position[post] - refs[0:3]
    out["peak_dev_pos_norm"] = float(np.linalg.norm(pos_err, axis=1).max())
    out["failure_time"] = t_fail if t_fail is not None else math.nan
    out["passivity_residual_mean"] = log.passivity_residual_mean
    return out


__all__ = [
    "ReferenceProfile", "NoiseSpec", "Scenario", "TrajectoryLog",
    "Simulation", "step", "error_state", "run_scenario", "metrics",
]
