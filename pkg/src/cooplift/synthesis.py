"""Robust SPR feedback synthesis over a fluctuation set.

The design problem: find F (state feedback), G (output mixer) and a
Lyapunov certificate P such that the error dynamics with output
eta = G*(C0 xi + D0 v) is strictly positive real from the switching input
v to eta, simultaneously for every vertex of the (mass, COM, failure)
fluctuation box. In the variables Q = P^-1, R = F Q, S = G^-1 the
condition is one affine 16x16 block inequality per vertex, solved with the
alternating-projection engine in `lmi`.

Because the input matrix is multilinear in (1/m, com_x, com_y) for a fixed
failure vector, every interior point of the box is a convex combination of
the enumerated vertices, so vertex feasibility covers the whole region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from . import lmi
from .errors import CertificateError, ContractError, ModelError, SynthesisInfeasible

_N = 12  # states
_M = 4   # quadrant inputs


@dataclass(frozen=True)
class FluctuationSpec:
    """Mass interval, COM rectangle and failure set the design must cover."""

    mass_range: tuple
    com_x: tuple
    com_y: tuple
    failures: tuple

    def __post_init__(self):
        lo, hi = self.mass_range
        if lo <= 0 or hi < lo:
            raise ModelError("mass range must satisfy 0 < m_min <= m_max")
        for name, (a, b) in (("com_x", self.com_x), ("com_y", self.com_y)):
            if b < a:
                raise ModelError(f"{name} interval is reversed")
        if not self.failures:
            raise ModelError("failure set must not be empty")
        per = max(f.counts[0] for f in self.failures)
        if dyn.FailureVector((per,) * 4) not in self.failures:
            raise ModelError("failure set must contain the nominal vector")

    @classmethod
    def with_single_failures(cls, layout, mass_range, com_x, com_y):
        failures = (dyn.FailureVector.nominal(layout),
                    *dyn.FailureVector.single_failures(layout))
        return cls(tuple(mass_range), tuple(com_x), tuple(com_y), failures)

    def com_corners(self):
        xs = sorted(set(self.com_x))
        ys = sorted(set(self.com_y))
        return [(x, y) for x in xs for y in ys]


@dataclass(frozen=True)
class Vertex:
    """One design point of the fluctuation box."""

    label: str
    mass: float
    com: tuple
    sigma: dyn.FailureVector
    b: np.ndarray


@dataclass
class SynthesisResult:
    """Feedback gain, output mixer and Lyapunov certificate with margins."""

    f: np.ndarray
    g: np.ndarray
    p: np.ndarray
    margin: float
    vertex_count: int
    eps: float
    q: np.ndarray = None
    r: np.ndarray = None
    s: np.ndarray = None
    iterations: int = 0


def enumerate_vertices(model, layout, spec: FluctuationSpec, c0=None, d0=None):
    """Input matrices at the corners of the fluctuation box, deduplicated."""
    if model.shape is None:
        raise ContractError("base model must carry its shape")
    verts = []
    seen = {}
    for mass in sorted(set(spec.mass_range)):
        for com in spec.com_corners():
            m_v, l_v = dyn.shifted_model_and_layout(model, layout, mass, com)
            for sigma in spec.failures:
                b = dyn.build_error_system(m_v, l_v, sigma, c0, d0).b
                key = b.tobytes()
                if key in seen:
                    continue
                label = (f"m={mass:g},com=({com[0]:g},{com[1]:g}),"
                         f"sigma={sigma.counts}")
                seen[key] = True
                verts.append(Vertex(label=label, mass=mass, com=tuple(com),
                                    sigma=sigma, b=b))
    if not verts:
        raise ContractError("fluctuation spec produced no vertices")
    return verts


def build_spr_lmi(a, b, c0, d0, label="vertex"):
    """Eq-form 16x16 block constraint, affine in (Q, R, S), sense <= -eps*I.

    Block layout:
        [[A Q + Q A' - B R - R' B',  Q C0' - B S'],
         [C0 Q - S B',              -D0 S' - S D0']]
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    n, m = b.shape
    dim = n + m
    e1 = np.zeros((dim, n))
    e1[:n] = np.eye(n)
    e2 = np.zeros((dim, m))
    e2[n:] = np.eye(m)

    terms = (
        lmi.MatrixTerm("Q", e1 @ a, e1.T),
        lmi.MatrixTerm("Q", e1, a.T @ e1.T),
        lmi.MatrixTerm("R", -e1 @ b, e1.T),
        lmi.MatrixTerm("R", -e1, b.T @ e1.T, transpose=True),
        lmi.MatrixTerm("Q", e1, c0.T @ e2.T),
        lmi.MatrixTerm("Q", e2 @ c0, e1.T),
        lmi.MatrixTerm("S", -e1 @ b, e2.T, transpose=True),
        lmi.MatrixTerm("S", -e2, b.T @ e1.T),
        lmi.MatrixTerm("S", -e2 @ d0, e2.T, transpose=True),
        lmi.MatrixTerm("S", -e2, d0.T @ e2.T),
    )
    return lmi.AffineMatrixConstraint(label=label, dim=dim,
                                      constant=np.zeros((dim, dim)),
                                      terms=terms, sense=lmi.SENSE_NEG)


def _side_constraints(d0):
    """Q >= eps*I and S D0' + D0 S' >= eps*I."""
    m = d0.shape[0]
    q_pos = lmi.AffineMatrixConstraint(
        label="Q_floor", dim=_N, constant=np.zeros((_N, _N)),
        terms=(lmi.MatrixTerm("Q", np.eye(_N), np.eye(_N)),),
        sense=lmi.SENSE_POS)
    s_pos = lmi.AffineMatrixConstraint(
        label="S_floor", dim=m, constant=np.zeros((m, m)),
        terms=(lmi.MatrixTerm("S", np.eye(m), d0.T),
               lmi.MatrixTerm("S", d0, np.eye(m), transpose=True)),
        sense=lmi.SENSE_POS)
    return [q_pos, s_pos]


def _w_identity_terms(coeff, dim):
    """coeff * w * I_dim written with the scalar yardstick block."""
    eye = np.eye(dim)
    return tuple(lmi.MatrixTerm("W", coeff * eye[:, [i]], eye[[i], :])
                 for i in range(dim))


def _cap_constraints(gain_cap, cond_cap):
    """Homogeneous solution-shaping constraints using a scalar yardstick w.

    Q >= w*I together with beta*w*I >= Q bounds the conditioning of Q, and
    [[c*w*I, R], [R', Q]] >= 0 bounds F Q F' by c*w*I, so the feedback gain
    in the solve coordinates satisfies ||F|| <= sqrt(c). The caps pin the
    solver onto moderate-gain certificates; without them the feasible cone
    contains rays with arbitrarily aggressive feedback.
    """
    out = []
    if cond_cap is not None:
        out.append(lmi.AffineMatrixConstraint(
            label="Q_vs_W", dim=_N, constant=np.zeros((_N, _N)),
            terms=(lmi.MatrixTerm("Q", np.eye(_N), np.eye(_N)),
                   *_w_identity_terms(-1.0, _N)),
            sense=lmi.SENSE_POS))
        out.append(lmi.AffineMatrixConstraint(
            label="Q_cond_cap", dim=_N, constant=np.zeros((_N, _N)),
            terms=(lmi.MatrixTerm("Q", -np.eye(_N), np.eye(_N)),
                   *_w_identity_terms(float(cond_cap), _N)),
            sense=lmi.SENSE_POS))
    if gain_cap is not None:
        dim = _N + _M
        e_in = np.zeros((dim, _M))
        e_in[:_M] = np.eye(_M)
        e_st = np.zeros((dim, _N))
        e_st[_M:] = np.eye(_N)
        eye = np.eye(dim)
        w_terms = tuple(lmi.MatrixTerm("W", float(gain_cap) * eye[:, [i]], eye[[i], :])
                        for i in range(_M))
        out.append(lmi.AffineMatrixConstraint(
            label="F_gain_cap", dim=dim, constant=np.zeros((dim, dim)),
            terms=(*w_terms,
                   lmi.MatrixTerm("R", e_in, e_st.T),
                   lmi.MatrixTerm("R", e_st, e_in.T, transpose=True),
                   lmi.MatrixTerm("Q", e_st, e_st.T)),
            sense=lmi.SENSE_POS))
    return out


def _chain_scaling(vertices, g):
    """Diagonal state scaling equalizing the gain links of each channel chain.

    The pitch/x and roll/y chains are position -> rate -> angle -> angular
    rate with link gains (1, g, 1, b); z and yaw are two-state chains. The
    geometric-mean input gain over the vertices sets b per chain.
    """
    def geo(row):
        return float(np.exp(np.mean([np.log(np.abs(v.b[row]).max()) for v in vertices])))

    def four(b):
        gamma = (b * g) ** 0.25
        t4 = gamma / b
        t3 = t4 * gamma
        t2 = t3 * gamma / g
        return [t2 * gamma, t2, t3, t4]

    def two(b):
        gamma = b ** 0.5
        return [gamma * gamma / b, gamma / b]

    t = np.zeros(_N)
    t[[0, 1, 2, 3]] = four(geo(3))
    t[[4, 5, 6, 7]] = four(geo(7))
    t[[8, 9]] = two(geo(9))
    t[[10, 11]] = two(geo(11))
    return t


def _blocks(with_yardstick):
    base = [
        lmi.BlockSpec("Q", (_N, _N), symmetric=True),
        lmi.BlockSpec("R", (_M, _N)),
        lmi.BlockSpec("S", (_M, _M)),
    ]
    if with_yardstick:
        base.append(lmi.BlockSpec("W", (1, 1), symmetric=True))
    return tuple(base)


def synthesize(a, vertices, c0, d0, eps=1e-3, gravity=dyn.GRAVITY,
               gain_cap=1.0e4, cond_cap=2.0e3,
               solver_options=None) -> SynthesisResult:
    """Solve the robust SPR design over the vertex set and extract (F, G, P).

    The problem is posed in chain-equilibrated state coordinates for solver
    conditioning, mapped back, and then rescaled (the constraints are
    positively homogeneous) so every original-coordinate vertex block clears
    -eps*I as verified by an independent eigensolve. gain_cap and cond_cap
    shape the returned certificate toward moderate feedback gains; pass None
    to disable either.
    """
    if not vertices:
        raise ContractError("vertex list must not be empty")
    a = np.asarray(a, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    opts = dict(solver_options or {})
    gain_cap = opts.pop("gain_cap", gain_cap)
    cond_cap = opts.pop("cond_cap", cond_cap)

    t = _chain_scaling(vertices, gravity)
    tm = np.diag(t)
    ti = np.diag(1.0 / t)
    a_s = tm @ a @ ti
    c0_s = c0 @ ti

    scaled = [build_spr_lmi(a_s, tm @ v.b, c0_s, d0, label=v.label)
              for v in vertices]
    side = _side_constraints(d0) + _cap_constraints(gain_cap, cond_cap)
    weights = [1.0] * len(scaled) + [40.0] * len(side)
    blocks = _blocks(gain_cap is not None or cond_cap is not None)

    try:
        res = lmi.solve_feasibility(scaled + side, blocks, eps,
                                    weights=weights, **opts)
    except lmi.InfeasibleProblem as exc:
        raise SynthesisInfeasible(exc.worst_label, exc.residual) from exc

    q = ti @ res.assignment["Q"] @ ti.T
    r = res.assignment["R"] @ ti.T
    s = res.assignment["S"]

    # homogeneous rescale against the original-coordinate margins
    native = [build_spr_lmi(a, v.b, c0, d0, label=v.label) for v in vertices]
    native += _side_constraints(d0)
    assignment = {"Q": q, "R": r, "S": s}
    margins = lmi.verify_assignment(native, assignment, eps)
    worst = min(margins.values())
    scale = max(1.0, eps / (worst + eps)) * 1.05 if worst > -eps else None
    if scale is None:
        raise SynthesisInfeasible(min(margins, key=margins.get), -worst)
    assignment = {k: v * scale for k, v in assignment.items()}
    margins = lmi.verify_assignment(native, assignment, eps)
    if min(margins.values()) < 0:
        raise SynthesisInfeasible(min(margins, key=margins.get),
                                  -min(margins.values()))
    q, r, s = assignment["Q"], assignment["R"], assignment["S"]

    p = np.linalg.inv(q)
    p = 0.5 * (p + p.T)
    f = r @ p
    g = np.linalg.inv(s)
    if np.abs(f @ q - r).max() > 1e-8 * max(1.0, np.abs(r).max()):
        raise CertificateError("certificate extraction lost precision (F Q != R)")
    if np.abs(g @ s - np.eye(_M)).max() > 1e-8:
        raise CertificateError("certificate extraction lost precision (G S != I)")

    worst_vertex = max(
        float(np.linalg.eigvalsh(c.materialize(assignment))[-1])
        for c in native if c.label not in ("Q_floor", "S_floor"))

    for v in vertices:
        if verify_spr(a, v.b, f, g, c0, d0, p) >= 0:
            raise CertificateError(f"SPR verification failed at {v.label}")
        if np.linalg.eigvals(a - v.b @ f).real.max() >= 0:
            raise CertificateError(f"closed loop not Hurwitz at {v.label}")

    return SynthesisResult(f=f, g=g, p=p, margin=worst_vertex,
                           vertex_count=len(vertices), eps=eps,
                           q=q, r=r, s=s, iterations=res.iterations)


def verify_spr(a, b, f, g, c0, d0, p) -> float:
    """Largest eigenvalue of the SPR matrix condition; negative certifies SPR.

    Evaluates P(A-BF) + (A-BF)'P + (PB - (GC0)')(GD0 + (GD0)')^-1 (PB - (GC0)')'.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.allclose(p, p.T, atol=1e-9):
        raise ContractError("P must be symmetric")
    if np.linalg.eigvalsh(p)[0] <= 0:
        raise ContractError("P must be positive definite")
    gd = np.asarray(g, dtype=float) @ np.asarray(d0, dtype=float)
    sym = gd + gd.T
    try:
        sym_inv = np.linalg.inv(sym)
    except np.linalg.LinAlgError as exc:
        raise CertificateError("G D0 + (G D0)' is singular") from exc
    a_cl = a - b @ f
    cross = p @ b - (np.asarray(g) @ np.asarray(c0)).T
    m = p @ a_cl + a_cl.T @ p + cross @ sym_inv @ cross.T
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])


def sample_interior(model, layout, spec: FluctuationSpec, samples, seed,
                    c0=None, d0=None):
    """Uniformly sampled interior (mass, COM) points crossed with every
    failure vector; yields (label, B)."""
    if samples <= 0:
        raise ContractError("sample count must be positive")
    rng = np.random.default_rng(seed)
    for k in range(samples):
        mass = rng.uniform(*spec.mass_range)
        com = (rng.uniform(*spec.com_x), rng.uniform(*spec.com_y))
        m_v, l_v = dyn.shifted_model_and_layout(model, layout, mass, com)
        for sigma in spec.failures:
            b = dyn.build_error_system(m_v, l_v, sigma, c0, d0).b
            yield (f"sample{k}:m={mass:.4f},com=({com[0]:.4f},{com[1]:.4f}),"
                   f"sigma={sigma.counts}", b)


__all__ = [
    "FluctuationSpec", "Vertex", "SynthesisResult",
    "enumerate_vertices", "build_spr_lmi", "synthesize", "verify_spr",
    "sample_interior",
]
