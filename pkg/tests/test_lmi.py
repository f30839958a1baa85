"""Feasibility engine: projections, small problems, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cooplift import lmi
from cooplift.errors import ContractError, InfeasibleProblem


# ---------------------------------------------------------------------------
# project_psd


def test_project_psd_identity_fixed_point():
    assert np.allclose(lmi.project_psd(np.eye(3)), np.eye(3))


def test_project_psd_clamps_negative_eigenvalue():
    out = lmi.project_psd(np.diag([1.0, -2.0]), floor=0.0)
    assert np.allclose(out, np.diag([1.0, 0.0]), atol=1e-14)


def test_project_psd_matches_eigensolve_oracle():
    rng = np.random.default_rng(5)
    m = rng.standard_normal((12, 12))
    m = 0.5 * (m + m.T)
    out = lmi.project_psd(m, floor=0.0)
    vals, vecs = np.linalg.eigh(m)          # independent reassembly
    oracle = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    assert np.abs(out - oracle).max() < 1e-10


def test_project_psd_idempotent():
    rng = np.random.default_rng(6)
    for _ in range(5):
        m = rng.standard_normal((6, 6))
        m = 0.5 * (m + m.T)
        once = lmi.project_psd(m, floor=0.3)
        twice = lmi.project_psd(once, floor=0.3)
        assert np.abs(once - twice).max() < 1e-12


def test_project_psd_rejects_asymmetric():
    with pytest.raises(ContractError):
        lmi.project_psd(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ContractError):
        lmi.project_psd(np.eye(2), floor=-1.0)


@settings(max_examples=30)
@given(st.integers(2, 5), st.integers(0, 10**6))
def test_project_psd_floor_property(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    m = 0.5 * (m + m.T)
    out = lmi.project_psd(m, floor=0.1)
    assert np.linalg.eigvalsh(out)[0] >= 0.1 - 1e-12


# ---------------------------------------------------------------------------
# solve_feasibility


def scalar_blocks():
    return [lmi.BlockSpec("q", (1, 1), symmetric=True)]


def scalar_constraint(coeff, sense, label="c"):
    return lmi.AffineMatrixConstraint(
        label=label, dim=1, constant=np.zeros((1, 1)),
        terms=(lmi.MatrixTerm("q", np.array([[coeff]]), np.eye(1)),),
        sense=sense)


def test_scalar_feasibility():
    # 2*q*a <= -eps with a = -1: any q >= eps/2 works
    eps = 1e-3
    cons = [scalar_constraint(-2.0, lmi.SENSE_NEG)]
    res = lmi.solve_feasibility(cons, scalar_blocks(), eps)
    q = float(res.assignment["q"][0, 0])
    assert q >= eps / 2 * (1 - 1e-8)
    assert res.margins["c"] >= 0.0


def test_contradictory_pair_infeasible():
    eps = 1e-3
    cons = [scalar_constraint(1.0, lmi.SENSE_POS, "pos"),
            scalar_constraint(1.0, lmi.SENSE_NEG, "neg")]
    with pytest.raises(InfeasibleProblem):
        lmi.solve_feasibility(cons, scalar_blocks(), eps, max_iter=5000)


def small_matrix_problem():
    """X symmetric 3x3 with A0 + X <= -eps I and X + 5 I >= eps I."""
    a0 = np.diag([1.0, -1.0, 0.5])
    blocks = [lmi.BlockSpec("X", (3, 3), symmetric=True)]
    cons = [
        lmi.AffineMatrixConstraint(
            label="upper", dim=3, constant=a0,
            terms=(lmi.MatrixTerm("X", np.eye(3), np.eye(3)),),
            sense=lmi.SENSE_NEG),
        lmi.AffineMatrixConstraint(
            label="lower", dim=3, constant=5.0 * np.eye(3),
            terms=(lmi.MatrixTerm("X", np.eye(3), np.eye(3)),),
            sense=lmi.SENSE_POS),
    ]
    return cons, blocks


@pytest.mark.parametrize("method", ["dr", "pocs"])
def test_small_problem_both_methods(method):
    cons, blocks = small_matrix_problem()
    res = lmi.solve_feasibility(cons, blocks, 1e-3, method=method)
    verified = lmi.verify_assignment(cons, res.assignment, 1e-3)
    assert min(verified.values()) >= -1e-11


def test_returned_assignment_reverifies_independently():
    cons, blocks = small_matrix_problem()
    res = lmi.solve_feasibility(cons, blocks, 1e-3)
    # independent assembly + eigensolve, no solver code involved
    x = res.assignment["X"]
    upper = np.diag([1.0, -1.0, 0.5]) + x
    lower = 5.0 * np.eye(3) + x
    assert np.linalg.eigvalsh(upper)[-1] <= -1e-3 * (1 - 1e-8)
    assert np.linalg.eigvalsh(lower)[0] >= 1e-3 * (1 - 1e-8)


def test_solver_deterministic_bit_for_bit():
    cons, blocks = small_matrix_problem()
    r1 = lmi.solve_feasibility(cons, blocks, 1e-3)
    r2 = lmi.solve_feasibility(cons, blocks, 1e-3)
    assert r1.assignment["X"].tobytes() == r2.assignment["X"].tobytes()
    assert r1.iterations == r2.iterations


def test_nonzero_eps_required():
    cons, blocks = small_matrix_problem()
    with pytest.raises(ContractError):
        lmi.solve_feasibility(cons, blocks, 0.0)


def test_materialize_is_symmetric_and_affine():
    cons, _ = small_matrix_problem()
    rng = np.random.default_rng(9)
    x = rng.standard_normal((3, 3))
    x = 0.5 * (x + x.T)
    m = cons[0].materialize({"X": x})
    assert np.allclose(m, m.T)
    assert np.allclose(m, np.diag([1.0, -1.0, 0.5]) + x)
