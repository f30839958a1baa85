"""Small-scale semidefinite feasibility engine.

Finds variable blocks satisfying a set of affine symmetric-matrix
constraints, each of the form

    constant + sum_k  L_k @ V_bk @ R_k   (V transposed where flagged)

required to be <= -eps*I or >= +eps*I. The solver alternates projections
between the affine image space of the variables and the product of shifted
definite cones, lifted to the product space of constraint matrices. The
default iteration is the Douglas-Rachford reflection variant; plain
over-relaxed POCS is available via method="pocs" but converges noticeably
slower on badly angled problems.

When every constraint has a zero constant part the problem is positively
homogeneous, so any strictly sign-feasible point can be scaled to clear the
eps margins exactly; the solver exploits this to stop early.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, InfeasibleProblem

SENSE_NEG = "neg"   # constraint <= -eps*I
SENSE_POS = "pos"   # constraint >= +eps*I


def project_psd(matrix, floor=0.0, tol=1e-10):
    """Frobenius-nearest symmetric matrix with all eigenvalues >= floor."""
    m = np.asarray(matrix, dtype=float)
    if floor < 0:
        raise ContractError("floor must be non-negative")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("expected a square matrix")
    if not np.allclose(m, m.T, atol=tol):
        raise ContractError("matrix is not symmetric within tolerance")
    sym = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = np.maximum(vals, floor)
    return (vecs * clipped) @ vecs.T


@dataclass(frozen=True)
class MatrixTerm:
    """One linear contribution  left @ V @ right  (V transposed if flagged)."""

    block: str
    left: np.ndarray
    right: np.ndarray
    transpose: bool = False

    def apply(self, value: np.ndarray) -> np.ndarray:
        v = value.T if self.transpose else value
        return self.left @ v @ self.right


@dataclass(frozen=True)
class AffineMatrixConstraint:
    """Symmetric matrix constraint, affine in the variable blocks."""

    label: str
    dim: int
    constant: np.ndarray
    terms: tuple
    sense: str = SENSE_NEG

    def __post_init__(self):
        object.__setattr__(self, "constant", np.asarray(self.constant, dtype=float))
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.sense not in (SENSE_NEG, SENSE_POS):
            raise ContractError(f"unknown sense {self.sense!r}")
        if self.constant.shape != (self.dim, self.dim):
            raise ContractError("constant part has the wrong shape")

    def materialize(self, assignment) -> np.ndarray:
        """Assemble the constraint matrix at a variable assignment.

        This straightforward per-term evaluation is the verification path;
        the solver uses a separately built vectorized operator.
        """
        m = self.constant.copy()
        for term in self.terms:
            m = m + term.apply(np.asarray(assignment[term.block], dtype=float))
        if not np.allclose(m, m.T, atol=1e-8 * max(1.0, np.abs(m).max())):
            raise ContractError(f"constraint {self.label!r} assembled asymmetric")
        return 0.5 * (m + m.T)

    def margin(self, assignment) -> float:
        """Signed clearance: how far the assembled matrix is inside its cone.

        Positive means satisfied (before the eps shift): for "neg" it is
        -lambda_max, for "pos" it is lambda_min.
        """
        vals = np.linalg.eigvalsh(self.materialize(assignment))
        return -vals[-1] if self.sense == SENSE_NEG else vals[0]


@dataclass(frozen=True)
class BlockSpec:
    """Shape and symmetry of one named variable block."""

    name: str
    shape: tuple
    symmetric: bool = False

    @property
    def dof(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c


@dataclass
class VariableBlocks:
    """The (Q, R, S) triple of the SPR synthesis change of variables."""

    q: np.ndarray
    r: np.ndarray
    s: np.ndarray

    def as_dict(self):
        return {"Q": self.q, "R": self.r, "S": self.s}

    @classmethod
    def from_dict(cls, d):
        return cls(q=d["Q"], r=d["R"], s=d["S"])


@dataclass
class FeasibilityResult:
    """Solution of a feasibility problem plus verification data."""

    assignment: dict
    margins: dict
    iterations: int
    residual: float
    rescale: float = 1.0
    method: str = "dr"


def verify_assignment(constraints, assignment, eps):
    """Margins of every constraint at an assignment, via independent assembly.

    Returns {label: margin - eps}; non-negative entries mean the constraint
    clears its required eps shift.
    """
    return {c.label: c.margin(assignment) - eps for c in constraints}


class _Workspace:
    """Vectorized affine map from packed variables to stacked constraint matrices."""

    def __init__(self, constraints, blocks, weights):
        self.constraints = list(constraints)
        self.blocks = list(blocks)
        self.offsets = {}
        pos = 0
        for spec in self.blocks:
            self.offsets[spec.name] = (pos, spec)
            pos += spec.dof
        self.n_x = pos

        dims = [c.dim for c in self.constraints]
        self.sizes = [d * d for d in dims]
        self.y_offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.n_y = int(self.y_offsets[-1])

        self.base = self._stack(self._materialize(np.zeros(self.n_x), with_constant=True))
        cols = []
        for k in range(self.n_x):
            e = np.zeros(self.n_x)
            e[k] = 1.0
            cols.append(self._stack(self._materialize(e, with_constant=False)))
        self.lin = np.column_stack(cols) if cols else np.zeros((self.n_y, 0))

        if weights is None:
            weights = np.ones(len(self.constraints))
        w = np.concatenate([np.full(sz, wk) for sz, wk in zip(self.sizes, weights)])
        self.sqrt_w = np.sqrt(w)
        lw = self.lin * self.sqrt_w[:, None]
        gram = lw.T @ lw
        try:
            self.chol = sla.cho_factor(gram)
        except np.linalg.LinAlgError as exc:
            raise ContractError("constraint set does not determine all variables") from exc
        self.lw_t = lw.T.copy()
        self.homogeneous = bool(np.all(self.base == 0.0))

    # -- packing ----------------------------------------------------------
    def unpack(self, x):
        out = {}
        for spec in self.blocks:
            pos, _ = self.offsets[spec.name]
            r, c = spec.shape
            if spec.symmetric:
                m = np.zeros((r, r))
                iu = np.triu_indices(r)
                m[iu] = x[pos:pos + spec.dof]
                m = m + m.T - np.diag(np.diag(m))
            else:
                m = x[pos:pos + spec.dof].reshape(r, c)
            out[spec.name] = m
        return out

    def pack(self, assignment):
        x = np.zeros(self.n_x)
        for spec in self.blocks:
            pos, _ = self.offsets[spec.name]
            m = np.asarray(assignment[spec.name], dtype=float)
            if spec.symmetric:
                x[pos:pos + spec.dof] = m[np.triu_indices(spec.shape[0])]
            else:
                x[pos:pos + spec.dof] = m.ravel()
        return x

    def _materialize(self, x, with_constant):
        assignment = self.unpack(x)
        mats = []
        for cons in self.constraints:
            m = cons.constant.copy() if with_constant else np.zeros((cons.dim, cons.dim))
            for term in cons.terms:
                m = m + term.apply(assignment[term.block])
            mats.append(m)
        return mats

    def _stack(self, mats):
        return np.concatenate([m.ravel() for m in mats])

    # -- projections --------------------------------------------------------
    def to_affine(self, y):
        """Least-squares projection onto the image of the affine map; returns x."""
        return sla.cho_solve(self.chol, self.lw_t @ (self.sqrt_w * (y - self.base)))

    def image(self, x):
        return self.base + self.lin @ x

    def split(self, y):
        for k, cons in enumerate(self.constraints):
            lo, hi = self.y_offsets[k], self.y_offsets[k + 1]
            yield cons, y[lo:hi].reshape(cons.dim, cons.dim)

    def project_cones(self, y, depth):
        """Project each block onto its shifted cone; also return raw margins."""
        out = np.empty_like(y)
        margins = np.empty(len(self.constraints))
        for k, (cons, mat) in enumerate(self.split(y)):
            sym = 0.5 * (mat + mat.T)
            vals, vecs = np.linalg.eigh(sym)
            if cons.sense == SENSE_NEG:
                margins[k] = -vals[-1]
                vals = np.minimum(vals, -depth)
            else:
                margins[k] = vals[0]
                vals = np.maximum(vals, depth)
            lo, hi = self.y_offsets[k], self.y_offsets[k + 1]
            out[lo:hi] = ((vecs * vals) @ vecs.T).ravel()
        return out, margins


def solve_feasibility(constraints, blocks, eps, max_iter=50000, tol=1e-8,
                      method="dr", over_relax=1.7, overshoot=0.5, deepen=0.5,
                      margin_slack=0.05, weights=None, init=None,
                      check_every=25, stall_window=2000):
    """Find variable blocks satisfying every constraint with margin >= eps.

    Raises InfeasibleProblem when max_iter is exhausted (or progress stalls)
    with the worst residual above tol. Deterministic: identical inputs give
    identical outputs.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    if method not in ("dr", "pocs"):
        raise ContractError(f"unknown method {method!r}")
    constraints = list(constraints)
    if not constraints:
        raise ContractError("no constraints given")
    ws = _Workspace(constraints, blocks, weights)

    if init is not None:
        x = ws.pack(init)
    else:
        x = np.zeros(ws.n_x)
        seed = {}
        for spec in ws.blocks:
            r, c = spec.shape
            seed[spec.name] = np.eye(r) if (spec.symmetric and r == c) else np.zeros((r, c))
        x = ws.pack(seed)

    depth = eps * (1.0 + overshoot)
    # homogeneous problems only need strict sign feasibility (then rescale),
    # but a deeper stop gives better-conditioned certificates
    need = deepen * depth if ws.homogeneous else eps

    y_dr = ws.image(x)
    best_violation = np.inf
    best_iter = 0
    worst_idx = 0
    margins = None

    for it in range(max_iter + 1):
        if method == "pocs":
            y = ws.image(x)
            z, margins = ws.project_cones(y, depth)
            x_candidate = x
            x = ws.to_affine(y + over_relax * (z - y))
        else:
            z, _ = ws.project_cones(y_dr, depth)
            x_candidate = ws.to_affine(2.0 * z - y_dr)
            y_aff = ws.image(x_candidate)
            y_dr = y_dr + y_aff - z
            x = x_candidate

        if it % check_every == 0:
            _, margins = ws.project_cones(ws.image(x_candidate), depth)
            worst = float(np.min(margins))
            violation = max(0.0, need - worst)
            if violation < best_violation - 1e-12 * max(1.0, violation):
                best_violation = violation
                best_iter = it
            worst_idx = int(np.argmin(margins))
            if worst >= need:
                x = x_candidate
                break
            if it - best_iter > stall_window and best_violation > tol:
                raise InfeasibleProblem(constraints[worst_idx].label,
                                        best_violation, it)
    else:
        raise InfeasibleProblem(constraints[worst_idx].label,
                                max(0.0, need - float(np.min(margins))), max_iter)

    assignment = ws.unpack(x)
    rescale = 1.0
    if ws.homogeneous:
        _, margins = ws.project_cones(ws.image(x), depth)
        rescale = max(1.0, float(np.max(eps / margins))) * (1.0 + margin_slack)
        assignment = {k: v * rescale for k, v in assignment.items()}

    verified = verify_assignment(constraints, assignment, eps)
    worst_label = min(verified, key=verified.get)
    if verified[worst_label] < -tol * eps:
        raise InfeasibleProblem(worst_label, -verified[worst_label], it)

    return FeasibilityResult(assignment=assignment,
                             margins=verified,
                             iterations=it,
                             residual=max(0.0, -min(verified.values())),
                             rescale=rescale,
                             method=method)


__all__ = [
    "SENSE_NEG", "SENSE_POS", "project_psd",
    "MatrixTerm", "AffineMatrixConstraint", "BlockSpec",
    "VariableBlocks", "FeasibilityResult",
    "solve_feasibility", "verify_assignment",
]
