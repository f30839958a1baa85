"""Payload/robot physical model and near-hover dynamics.

Coordinate conventions:
  * body axes: x forward, y left, z up; roll (phi) about x, pitch (theta)
    about y, yaw (psi) about z;
  * near hover the translational accelerations in the body frame are
    (g*theta, -g*phi, total_thrust/m - g), rotated into the world frame by
    yaw only;
  * rotor thrust acts along +z at the attachment point, so a thrust u at
    r = (r1, r2) produces roll torque r2*u, pitch torque -r1*u, and yaw
    drag torque d*c_q*u for spin direction d.

The 12-dimensional error state is ordered
  [x_e, xdot_e, theta_e, thetadot_e, y_e, ydot_e, phi_e, phidot_e,
   z_e, zdot_e, psi_e, psidot_e].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, ModelError, PropagationError

GRAVITY = 9.81

#: error-state index of each full-state component; full state is ordered
#: [x, y, z, phi, theta, psi, vx, vy, vz, wx, wy, wz]
XI_OF_FULLSTATE = np.array([0, 6, 4, 10, 1, 7, 3, 9, 2, 8, 5, 11])

XI_LABELS = (
    "x_e", "xdot_e", "theta_e", "thetadot_e",
    "y_e", "ydot_e", "phi_e", "phidot_e",
    "z_e", "zdot_e", "psi_e", "psidot_e",
)

#: rows of the error-state matrix that carry accelerations
#: (thetadd, phidd, zdd, psidd)
ACCEL_ROWS = (3, 7, 9, 11)


# ---------------------------------------------------------------------------
# payload geometry


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangular plate centred on the body origin."""

    length_x: float
    length_y: float

    def __post_init__(self):
        if self.length_x <= 0 or self.length_y <= 0:
            raise ModelError("rectangle side lengths must be positive")

    @property
    def area(self) -> float:
        return self.length_x * self.length_y

    @property
    def centroid(self) -> np.ndarray:
        return np.zeros(2)

    def contains(self, point) -> bool:
        x, y = np.asarray(point, dtype=float)
        return abs(x) <= self.length_x / 2 + 1e-12 and abs(y) <= self.length_y / 2 + 1e-12


@dataclass(frozen=True)
class RectPatch:
    """One rectangle of a composite shape, centred at (offset_x, offset_y)."""

    length_x: float
    length_y: float
    offset_x: float
    offset_y: float

    def __post_init__(self):
        if self.length_x <= 0 or self.length_y <= 0:
            raise ModelError("patch side lengths must be positive")

    @property
    def area(self) -> float:
        return self.length_x * self.length_y

    def bounds(self):
        return (
            self.offset_x - self.length_x / 2,
            self.offset_x + self.length_x / 2,
            self.offset_y - self.length_y / 2,
            self.offset_y + self.length_y / 2,
        )

    def contains(self, x, y, tol=1e-12) -> bool:
        x0, x1, y0, y1 = self.bounds()
        return x0 - tol <= x <= x1 + tol and y0 - tol <= y <= y1 + tol


@dataclass(frozen=True)
class LShape:
    """Two axis-aligned rectangles forming one connected body.

    Overlap area is counted once per patch when mass is split by area, so
    the patches are expected to touch (e.g. share an edge) rather than
    overlap substantially.
    """

    first: RectPatch
    second: RectPatch

    def __post_init__(self):
        a0, a1, b0, b1 = self.first.bounds()
        c0, c1, d0, d1 = self.second.bounds()
        # closed rectangles must intersect (touching counts as connected)
        if a1 < c0 - 1e-12 or c1 < a0 - 1e-12 or b1 < d0 - 1e-12 or d1 < b0 - 1e-12:
            raise ModelError("l_shape rectangles must overlap or touch")

    @property
    def patches(self):
        return (self.first, self.second)

    @property
    def area(self) -> float:
        return self.first.area + self.second.area

    @property
    def centroid(self) -> np.ndarray:
        w = np.array([p.area for p in self.patches])
        c = np.array([[p.offset_x, p.offset_y] for p in self.patches])
        return w @ c / w.sum()

    def contains(self, point) -> bool:
        x, y = np.asarray(point, dtype=float)
        return any(p.contains(x, y) for p in self.patches)


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True)
class PayloadModel:
    """Rigid payload: mass, inertia about the COM, COM offset from the centroid."""

    mass: float
    inertia: np.ndarray
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gravity: float = GRAVITY
    shape: Rectangle | LShape | None = None

    def __post_init__(self):
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        object.__setattr__(self, "com_offset", np.asarray(self.com_offset, dtype=float))
        if self.mass <= 0:
            raise ModelError("payload mass must be positive")
        j = self.inertia
        if j.shape != (3, 3) or not np.allclose(j, j.T, atol=1e-9):
            raise ModelError("inertia must be a symmetric 3x3 tensor")
        if np.linalg.eigvalsh(j)[0] <= 0:
            raise ModelError("inertia tensor must be positive definite")
        if self.shape is not None:
            centroid = self.shape.centroid
            if not self.shape.contains(centroid + self.com_offset):
                raise ModelError("com_offset lies outside the payload footprint")

    @property
    def weight(self) -> float:
        return self.mass * self.gravity


@dataclass(frozen=True)
class AttachmentLayout:
    """Per-robot attachment positions (relative to the payload COM) and rotor data.

    Robots are grouped into 4 quadrants of n_robots/4; within a quadrant all
    robots share one position and spin direction (the control design relies
    on it, so it is enforced here).
    """

    positions: np.ndarray
    spins: np.ndarray
    c_q: float
    u_max: float

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "spins", np.asarray(self.spins, dtype=float))
        n = self.positions.shape[0]
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ModelError("positions must be an (N, 2) array")
        if n % 4 != 0 or n == 0:
            raise ModelError("robot count must be a positive multiple of 4")
        if self.spins.shape != (n,) or not np.all(np.isin(self.spins, (-1.0, 1.0))):
            raise ModelError("spins must be an (N,) array of +/-1")
        if self.u_max <= 0:
            raise ModelError("u_max must be positive")
        per = n // 4
        pos_q = self.positions.reshape(4, per, 2)
        spin_q = self.spins.reshape(4, per)
        if not (np.all(pos_q == pos_q[:, :1, :]) and np.all(spin_q == spin_q[:, :1])):
            raise ModelError("robots within a quadrant must share position and spin")

    @property
    def n_robots(self) -> int:
        return self.positions.shape[0]

    @property
    def robots_per_quadrant(self) -> int:
        return self.n_robots // 4

    @property
    def quadrant_positions(self) -> np.ndarray:
        return self.positions[:: self.robots_per_quadrant]

    @property
    def quadrant_spins(self) -> np.ndarray:
        return self.spins[:: self.robots_per_quadrant]

    def quadrant_of(self, robot: int) -> int:
        if not 0 <= robot < self.n_robots:
            raise ContractError(f"robot index {robot} out of range")
        return robot // self.robots_per_quadrant


def layout_from_mounts(mounts, com_offset, spins, c_q, u_max, robots_per_quadrant=2):
    """Build an AttachmentLayout from quadrant mount points given relative to
    the payload geometric centre; positions are re-expressed relative to the COM."""
    mounts = np.asarray(mounts, dtype=float)
    if mounts.shape != (4, 2):
        raise ModelError("expected 4 quadrant mount points")
    rel = mounts - np.asarray(com_offset, dtype=float)
    positions = np.repeat(rel, robots_per_quadrant, axis=0)
    spins = np.repeat(np.asarray(spins, dtype=float), robots_per_quadrant)
    return AttachmentLayout(positions=positions, spins=spins, c_q=c_q, u_max=u_max)


@dataclass(frozen=True)
class FailureVector:
    """Active-robot count per quadrant."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if len(counts) != 4 or any(c < 0 for c in counts):
            raise ModelError("failure vector needs 4 non-negative quadrant counts")

    @classmethod
    def nominal(cls, layout: AttachmentLayout) -> "FailureVector":
        return cls((layout.robots_per_quadrant,) * 4)

    @classmethod
    def single_failures(cls, layout: AttachmentLayout):
        per = layout.robots_per_quadrant
        out = []
        for q in range(4):
            counts = [per] * 4
            counts[q] = per - 1
            out.append(cls(tuple(counts)))
        return out

    @classmethod
    def from_active(cls, active, layout: AttachmentLayout) -> "FailureVector":
        active = np.asarray(active, dtype=bool)
        per = layout.robots_per_quadrant
        return cls(tuple(int(active[q * per:(q + 1) * per].sum()) for q in range(4)))

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)


@dataclass
class FullState:
    """World-frame position/velocity plus attitude and body rates."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.attitude, self.velocity,
                               self.angular_velocity]).astype(float)

    @classmethod
    def from_vector(cls, vec) -> "FullState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (12,):
            raise ContractError("full state vector must have 12 entries")
        if not np.all(np.isfinite(vec)):
            raise PropagationError("full state contains non-finite values")
        return cls(vec[0:3].copy(), vec[3:6].copy(), vec[6:9].copy(), vec[9:12].copy())


@dataclass(frozen=True)
class ErrorStateSystem:
    """Matrices of the linear 12-state error dynamics and its output map."""

    a: np.ndarray
    b: np.ndarray
    c0: np.ndarray
    d0: np.ndarray


# ---------------------------------------------------------------------------
# inertia


def _plate_inertia(length_x, length_y, mass) -> np.ndarray:
    jx = mass * length_y**2 / 12.0
    jy = mass * length_x**2 / 12.0
    jz = mass * (length_x**2 + length_y**2) / 12.0
    return np.diag([jx, jy, jz])


def _parallel_axis(j_com, mass, offset) -> np.ndarray:
    d = np.array([offset[0], offset[1], 0.0])
    return j_com + mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))


def build_inertia(shape, mass) -> np.ndarray:
    """Uniform-density thin-plate inertia tensor about the shape centroid.

    Composite shapes split the mass by area and transfer each patch with the
    parallel-axis theorem.
    """
    if mass <= 0:
        raise ModelError("mass must be positive")
    if isinstance(shape, Rectangle):
        return _plate_inertia(shape.length_x, shape.length_y, mass)
    if isinstance(shape, LShape):
        centroid = shape.centroid
        j = np.zeros((3, 3))
        for patch in shape.patches:
            m_i = mass * patch.area / shape.area
            j_i = _plate_inertia(patch.length_x, patch.length_y, m_i)
            offs = np.array([patch.offset_x, patch.offset_y]) - centroid
            j += _parallel_axis(j_i, m_i, offs)
        return j
    raise ModelError(f"unsupported shape {type(shape).__name__}")


def point_mass_inertia(mass_each, points) -> np.ndarray:
    """Inertia contribution of equal point masses at planar positions."""
    j = np.zeros((3, 3))
    for p in np.asarray(points, dtype=float):
        j += mass_each * (np.dot(p, p) * np.eye(3)
                          - np.outer(np.r_[p, 0.0], np.r_[p, 0.0]))
    return j


def build_payload_model(shape, mass, com_offset=(0.0, 0.0), gravity=GRAVITY) -> PayloadModel:
    """Payload model with the central inertia of the uniform plate.

    The COM offset is treated as a redistribution of mass (battery, extra
    weight) that moves the COM without materially changing the inertia about
    it, which keeps the input matrix multilinear in (1/m, com) so that the
    vertex enumeration in the synthesis covers the whole fluctuation box.
    """
    return PayloadModel(mass=mass, inertia=build_inertia(shape, mass),
                        com_offset=np.asarray(com_offset, dtype=float),
                        gravity=gravity, shape=shape)


# ---------------------------------------------------------------------------
# quadrant maps


def quadrant_average(thrusts, layout: AttachmentLayout, active=None) -> np.ndarray:
    """Mean thrust per quadrant over the active robots.

    With all robots active this is the plain per-quadrant mean; a failed
    robot is excluded so that sigma_q times the average reproduces the total
    quadrant thrust (the convention under which the input matrix carries
    sigma_q entries). A fully failed quadrant averages to zero.
    """
    thrusts = np.asarray(thrusts, dtype=float)
    if thrusts.shape != (layout.n_robots,):
        raise ContractError("thrust vector length does not match the layout")
    per = layout.robots_per_quadrant
    if active is None:
        return thrusts.reshape(4, per).mean(axis=1)
    active = np.asarray(active, dtype=bool)
    if active.shape != (layout.n_robots,):
        raise ContractError("active mask length does not match the layout")
    w = active.reshape(4, per).astype(float)
    counts = w.sum(axis=1)
    totals = (thrusts.reshape(4, per) * w).sum(axis=1)
    return np.divide(totals, counts, out=np.zeros(4), where=counts > 0)


def quadrant_expand(u_quadrants, layout: AttachmentLayout) -> np.ndarray:
    """Assign each robot its quadrant value; inverse of the average on
    quadrant-uniform inputs."""
    u_quadrants = np.asarray(u_quadrants, dtype=float)
    if u_quadrants.shape != (4,):
        raise ContractError("expected a 4-vector of quadrant thrusts")
    return np.repeat(u_quadrants, layout.robots_per_quadrant)


def quadrant_average_matrix(layout: AttachmentLayout, active=None) -> np.ndarray:
    """The 4 x N linear operator realizing quadrant_average."""
    n = layout.n_robots
    m = np.zeros((4, n))
    mask = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    per = layout.robots_per_quadrant
    for q in range(4):
        rows = slice(q * per, (q + 1) * per)
        cnt = mask[rows].sum()
        if cnt > 0:
            m[q, rows] = mask[rows] / cnt
    return m


# ---------------------------------------------------------------------------
# force/torque maps and the error system


def quadrant_wrench_matrix(model: PayloadModel, layout: AttachmentLayout,
                           sigma: FailureVector) -> np.ndarray:
    """4x4 map from quadrant-average thrusts to (total force_z, roll, pitch,
    yaw torques)."""
    s = sigma.as_array()
    r = layout.quadrant_positions
    d = layout.quadrant_spins
    w = np.zeros((4, 4))
    w[0] = s
    w[1] = s * r[:, 1]
    w[2] = -s * r[:, 0]
    w[3] = s * d * layout.c_q
    return w


def stationary_input(model: PayloadModel, layout: AttachmentLayout,
                     sigma: FailureVector) -> np.ndarray:
    """Quadrant thrusts balancing gravity with zero net torque."""
    w = quadrant_wrench_matrix(model, layout, sigma)
    try:
        return np.linalg.solve(w, np.array([model.weight, 0.0, 0.0, 0.0]))
    except np.linalg.LinAlgError as exc:
        raise ModelError("attachment geometry cannot balance the payload") from exc


def build_error_system(model: PayloadModel, layout: AttachmentLayout,
                       sigma: FailureVector, c0=None, d0=None) -> ErrorStateSystem:
    """Linear error dynamics for a given (mass, COM via layout, failure) point.

    A is independent of the fluctuating parameters; B carries sigma_q/m in
    the vertical-acceleration row and J^-1 times the signed moment map in
    the angular-acceleration rows.
    """
    g = model.gravity
    a = np.zeros((12, 12))
    a[0, 1] = 1.0
    a[1, 2] = g
    a[2, 3] = 1.0
    a[4, 5] = 1.0
    a[5, 6] = -g
    a[6, 7] = 1.0
    a[8, 9] = 1.0
    a[10, 11] = 1.0

    w = quadrant_wrench_matrix(model, layout, sigma)
    try:
        ang = np.linalg.solve(model.inertia, w[1:4])
    except np.linalg.LinAlgError as exc:
        raise ModelError("singular inertia tensor") from exc

    b = np.zeros((12, 4))
    b[3] = ang[1]            # pitch acceleration row
    b[7] = ang[0]            # roll acceleration row
    b[9] = w[0] / model.mass  # vertical acceleration row
    b[11] = ang[2]           # yaw acceleration row

    c0 = default_c0() if c0 is None else np.asarray(c0, dtype=float)
    d0 = default_d0() if d0 is None else np.asarray(d0, dtype=float)
    return ErrorStateSystem(a=a, b=b, c0=c0, d0=d0)


def default_c0() -> np.ndarray:
    """Output weights pairing each channel with its error/rate/angle states."""
    c0 = np.zeros((4, 12))
    c0[0, 0:4] = [1.0, 1.5, 2.0, 0.5]      # pitch/x channel
    c0[1, 4:8] = [-1.0, -1.5, 2.0, 0.5]    # roll/y channel (ydd = -g*phi)
    c0[2, 8:10] = [1.0, 1.5]               # z channel
    c0[3, 10:12] = [1.0, 0.5]              # yaw channel
    return c0


def default_d0(scale=2.0) -> np.ndarray:
    """Direct-term weight; large enough that the SPR-izing feedback gains
    stay compatible with the 5 ms controller period."""
    return scale * np.eye(4)


# ---------------------------------------------------------------------------
# nonlinear model


def nonlinear_derivative(state, thrusts, model: PayloadModel,
                         layout: AttachmentLayout, active=None) -> np.ndarray:
    """Time derivative of the near-hover nonlinear model.

    `state` is a FullState or its 12-vector; failed robots (inactive mask
    entries) apply zero thrust regardless of the commanded value.
    """
    if isinstance(state, FullState):
        x = state.as_vector()
    else:
        x = np.asarray(state, dtype=float)
    thrusts = np.asarray(thrusts, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(thrusts))):
        raise PropagationError("non-finite state or thrust input")
    if thrusts.shape != (layout.n_robots,):
        raise ContractError("thrust vector length does not match the layout")
    if active is not None:
        thrusts = np.where(np.asarray(active, dtype=bool), thrusts, 0.0)

    g = model.gravity
    phi, theta, psi = x[3], x[4], x[5]
    ax_body = g * theta
    ay_body = -g * phi
    az = thrusts.sum() / model.mass - g
    c, s = np.cos(psi), np.sin(psi)

    r = layout.positions
    torque = np.array([
        np.sum(r[:, 1] * thrusts),
        -np.sum(r[:, 0] * thrusts),
        np.sum(layout.spins * layout.c_q * thrusts),
    ])

    deriv = np.empty(12)
    deriv[0:3] = x[6:9]
    deriv[3:6] = x[9:12]
    deriv[6] = c * ax_body - s * ay_body
    deriv[7] = s * ax_body + c * ay_body
    deriv[8] = az
    deriv[9:12] = np.linalg.solve(model.inertia, torque)
    return deriv


def hover_thrusts(model: PayloadModel, layout: AttachmentLayout) -> np.ndarray:
    """Equal thrust shares balancing gravity with all robots active."""
    return np.full(layout.n_robots, model.weight / layout.n_robots)


def world_to_body_refs(refs_world, yaw) -> np.ndarray:
    """Rotate the planar references by -yaw; z and yaw references pass through."""
    refs = np.asarray(refs_world, dtype=float)
    if refs.shape != (4,):
        raise ContractError("expected references (X_r, Y_r, Z_r, psi_r)")
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([c * refs[0] + s * refs[1],
                     -s * refs[0] + c * refs[1],
                     refs[2], refs[3]])


def shifted_model_and_layout(model: PayloadModel, layout: AttachmentLayout,
                             mass, com_offset):
    """The same physical body re-evaluated at another (mass, COM) point."""
    if model.shape is None:
        raise ContractError("model needs a shape to re-derive the inertia")
    new_model = build_payload_model(model.shape, mass, com_offset, model.gravity)
    mounts_centroid = layout.quadrant_positions + model.com_offset
    new_layout = layout_from_mounts(mounts_centroid, com_offset,
                                    layout.quadrant_spins, layout.c_q,
                                    layout.u_max, layout.robots_per_quadrant)
    return new_model, new_layout


__all__ = [
    "GRAVITY", "XI_OF_FULLSTATE", "XI_LABELS", "ACCEL_ROWS",
    "Rectangle", "RectPatch", "LShape",
    "PayloadModel", "AttachmentLayout", "FailureVector", "FullState",
    "ErrorStateSystem",
    "build_inertia", "point_mass_inertia", "build_payload_model",
    "layout_from_mounts", "quadrant_average", "quadrant_expand",
    "quadrant_average_matrix", "quadrant_wrench_matrix", "stationary_input",
    "build_error_system", "default_c0", "default_d0",
    "nonlinear_derivative", "hover_thrusts", "world_to_body_refs",
    "shifted_model_and_layout",
]
