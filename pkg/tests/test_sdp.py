import io
import re

import numpy as np
import pytest

from qrecovery.channels import bit_flip_channel, choi_from_kraus
from qrecovery.linalg import hermitian_eig
from qrecovery.sdp import (
    EqualityInfeasibleError,
    SdpBlock,
    SdpProblem,
    SolverOptions,
    eliminate_equalities,
    realify,
    realify_hermitian_constraint,
    solve_sdp,
    write_sdpa_sparse,
)

SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])


def lambda_max_problem(h):
    """min t s.t. t I - h >= 0 in realified form."""
    k = h.shape[0]
    f0, fs = realify_hermitian_constraint(-h, [np.eye(k, dtype=complex)])
    block = SdpBlock(size=2 * k, f0=f0, coeffs=fs)
    return SdpProblem(objective=np.array([1.0]), blocks=[block])


# ---------------------------------------------------------------------------
# realification
# ---------------------------------------------------------------------------

def test_realify_identity():
    assert np.array_equal(realify(np.eye(2, dtype=complex)), np.eye(4))


def test_realify_pauli_y_spectrum():
    r = realify(SY)
    assert r.shape == (4, 4)
    assert np.abs(r - r.T).max() == 0.0
    w = np.linalg.eigvalsh(r)
    assert np.allclose(w, [-1.0, -1.0, 1.0, 1.0], atol=1e-14)


def test_realify_bit_flip_choi():
    choi = choi_from_kraus(bit_flip_channel(0.9, 1)).mat
    r = realify(choi)
    w = np.linalg.eigvalsh(r)
    assert w[0] >= -1e-10
    assert np.allclose(np.sort(w), [0, 0, 0, 0, 0.2, 0.2, 1.8, 1.8], atol=1e-12)


def test_realify_doubles_multiplicities():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    h = (h + h.conj().T) / 2.0
    w_c = np.linalg.eigvalsh(h)
    w_r = np.linalg.eigvalsh(realify(h))
    assert np.allclose(np.repeat(w_c, 2), w_r, atol=1e-12)


def test_realify_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        realify_hermitian_constraint(np.array([[0.0, 1.0], [0.0, 0.0]]), [])


# ---------------------------------------------------------------------------
# equality elimination
# ---------------------------------------------------------------------------

def test_eliminate_no_equalities_is_identity():
    prob = lambda_max_problem(np.diag([1.0, 2.0]).astype(complex))
    red, lift = eliminate_equalities(prob)
    assert red is prob
    assert np.array_equal(lift.basis, np.eye(1))
    assert np.array_equal(lift.offset, np.zeros(1))


def test_eliminate_single_equality():
    coeffs = np.zeros((2, 2, 2))
    coeffs[0, 0, 0] = 1.0
    coeffs[1, 1, 1] = 1.0
    prob = SdpProblem(
        objective=np.array([0.0, 1.0]),
        blocks=[SdpBlock(size=2, f0=np.zeros((2, 2)), coeffs=coeffs)],
        eq_matrix=np.array([[1.0, 1.0]]),
        eq_rhs=np.array([1.0]),
    )
    red, lift = eliminate_equalities(prob)
    assert red.num_vars == 1
    direction = lift.basis[:, 0]
    expected = np.array([1.0, -1.0]) / np.sqrt(2.0)
    assert min(np.abs(direction - expected).max(), np.abs(direction + expected).max()) < 1e-12
    z = np.array([0.3])
    x = lift(z)
    assert abs(x.sum() - 1.0) <= 1e-12


def test_eliminate_inconsistent_equalities():
    prob = SdpProblem(
        objective=np.array([1.0]),
        blocks=[SdpBlock(size=1, f0=np.ones((1, 1)), coeffs=np.ones((1, 1, 1)))],
        eq_matrix=np.array([[1.0], [1.0]]),
        eq_rhs=np.array([0.0, 1.0]),
    )
    with pytest.raises(EqualityInfeasibleError):
        eliminate_equalities(prob)


def test_eliminate_recovery_problem_counts():
    from qrecovery.codes import repetition_code, s_matrix
    from qrecovery.channels import transfer_from_kraus
    from qrecovery.synthesis import assemble_standard

    code = repetition_code(2)
    prob = assemble_standard(transfer_from_kraus(bit_flip_channel(0.9, 2)), code, s_matrix(code))
    assert prob.num_vars == 258
    assert [b.size for b in prob.blocks] == [32, 32, 1]
    assert prob.eq_matrix.shape == (16, 258)
    red, _ = eliminate_equalities(prob)
    # 256 Choi coordinates lose n^2 = 16 to trace preservation; eps, tau stay
    assert red.num_vars == 242


# ---------------------------------------------------------------------------
# the interior-point solver
# ---------------------------------------------------------------------------

def test_solve_diagonal_lambda_max():
    sol = solve_sdp(lambda_max_problem(np.diag([1.0, 3.0, 2.0]).astype(complex)))
    assert sol.status == "optimal"
    assert abs(sol.objective_value - 3.0) <= 1e-6


def test_solve_pauli_x_lambda_max():
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sol = solve_sdp(lambda_max_problem(sx))
    assert sol.status == "optimal"
    assert abs(sol.objective_value - 1.0) <= 1e-6


def test_lambda_max_oracle_suite():
    rng = np.random.default_rng(42)
    for _ in range(50):
        k = int(rng.integers(2, 11))
        h = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
        h = (h + h.conj().T) / 2.0
        sol = solve_sdp(lambda_max_problem(h))
        top = hermitian_eig(h)[0][0]
        assert sol.status == "optimal"
        assert abs(sol.objective_value - top) <= 1e-6
        # independently recomputed block feasibility at the solution
        for block in lambda_max_problem(h).blocks:
            w = np.linalg.eigvalsh(block.evaluate(sol.x))
            assert w[0] >= -1e-7


def test_gap_is_nonnegative_every_iteration():
    stream = io.StringIO()
    h = np.diag([1.0, 3.0, 2.0]).astype(complex)
    solve_sdp(lambda_max_problem(h), SolverOptions(verbose=True, log_stream=stream))
    gaps = [float(m) for m in re.findall(r"gap (\S+)", stream.getvalue())]
    assert gaps, "no iteration log captured"
    assert all(g >= -1e-12 for g in gaps)


def test_objective_scaling_leaves_argmin():
    h = np.diag([1.0, 3.0, 2.0]).astype(complex)
    base = lambda_max_problem(h)
    scaled = SdpProblem(objective=10.0 * base.objective, blocks=base.blocks)
    x1 = solve_sdp(base).x
    x2 = solve_sdp(scaled).x
    assert np.abs(x1 - x2).max() <= 1e-5


def test_warm_start_converges():
    h = np.diag([1.0, 3.0, 2.0]).astype(complex)
    sol = solve_sdp(lambda_max_problem(h), x0=np.array([10.0]))
    assert sol.status == "optimal"
    assert abs(sol.objective_value - 3.0) <= 1e-6


def test_max_iter_status():
    h = np.diag([1.0, 3.0, 2.0]).astype(complex)
    sol = solve_sdp(lambda_max_problem(h), SolverOptions(max_iter=2))
    assert sol.status == "max_iter"
    assert sol.iterations == 2


def test_infeasible_problem_is_not_optimal():
    # F(x) = -I + 0 * x can never be PSD
    prob = SdpProblem(
        objective=np.array([1.0]),
        blocks=[SdpBlock(size=2, f0=-np.eye(2), coeffs=np.zeros((1, 2, 2)))],
    )
    sol = solve_sdp(prob, SolverOptions(max_iter=50))
    assert sol.status != "optimal"


def test_solve_rejects_problems_with_equalities():
    prob = SdpProblem(
        objective=np.array([1.0]),
        blocks=[SdpBlock(size=1, f0=np.zeros((1, 1)), coeffs=np.ones((1, 1, 1)))],
        eq_matrix=np.ones((1, 1)),
        eq_rhs=np.ones(1),
    )
    with pytest.raises(ValueError, match="eliminate"):
        solve_sdp(prob)


# ---------------------------------------------------------------------------
# SDPA export
# ---------------------------------------------------------------------------

def test_sdpa_export_round_trip(tmp_path):
    h = np.diag([1.0, 3.0, 2.0]).astype(complex)
    prob = lambda_max_problem(h)
    path = tmp_path / "problem.dat-s"
    write_sdpa_sparse(prob, path, comment="lambda max test")
    lines = path.read_text().splitlines()
    assert lines[0] == '"lambda max test"'
    assert int(lines[1]) == 1          # one variable
    assert int(lines[2]) == 1          # one block
    assert [int(v) for v in lines[3].split()] == [6]
    assert [float(v) for v in lines[4].split()] == [1.0]
    entries = [ln.split() for ln in lines[5:]]
    # F0 in SDPA convention is the negated constant term: +diag(1,3,2) doubled
    f0 = {(int(r), int(c)): float(v) for m, b, r, c, v in entries if m == "0"}
    assert f0[(1, 1)] == 1.0 and f0[(2, 2)] == 1.0
    assert f0[(3, 3)] == 3.0 and f0[(5, 5)] == 2.0
    f1 = {(int(r), int(c)): float(v) for m, b, r, c, v in entries if m == "1"}
    assert all(f1[(i, i)] == 1.0 for i in range(1, 7))
    # only upper-triangle entries may appear
    assert all(int(r) <= int(c) for _, _, r, c, _ in entries)


def test_sdpa_export_requires_no_equalities(tmp_path):
    prob = SdpProblem(
        objective=np.array([1.0]),
        blocks=[SdpBlock(size=1, f0=np.zeros((1, 1)), coeffs=np.ones((1, 1, 1)))],
        eq_matrix=np.ones((1, 1)),
        eq_rhs=np.ones(1),
    )
    with pytest.raises(ValueError):
        write_sdpa_sparse(prob, tmp_path / "x.dat-s")
