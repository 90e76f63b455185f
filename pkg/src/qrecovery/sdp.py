"""Dense semidefinite programming in real symmetric block form.

Problems are stated as

    minimize    c . x
    subject to  F0_b + sum_i x_i F_i_b  >= 0   (one LMI per block b)
                E x = d                        (optional linear equalities)

Equalities are eliminated up front by restricting x to an affine slice of the
null space of E; the resulting inequality-only problem is solved by a
primal-dual interior-point method with Nesterov-Todd scaling and a
Mehrotra-style predictor-corrector.  The Schur complement is formed densely
(the intended problem sizes are a few thousand variables with blocks of side
at most a few hundred) and factored with a Cholesky decomposition plus one
step of iterative refinement.

The iterate (x, X, S) keeps S_b and X_b strictly positive definite at all
times; infeasible starts are supported by carrying the slack residual
F0 + sum x_i F_i - S explicitly and driving it to zero along the way.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import SpdFactorization, SpdSolveError, hermiticity_defect, nullspace_basis

__all__ = [
    "SdpBlock",
    "SdpProblem",
    "SdpSolution",
    "SolverOptions",
    "AffineMap",
    "EqualityInfeasibleError",
    "realify_hermitian_constraint",
    "realify",
    "eliminate_equalities",
    "solve_sdp",
    "write_sdpa_sparse",
]

SYM_ATOL = 1e-12


@dataclass
class SdpBlock:
    """One LMI block: F0 + sum_i x_i coeffs[i] must be PSD."""

    size: int
    f0: np.ndarray            # (size, size)
    coeffs: np.ndarray        # (num_vars, size, size)

    def validate(self):
        if self.f0.shape != (self.size, self.size):
            raise ValueError(f"f0 shape {self.f0.shape} != block size {self.size}")
        if self.coeffs.ndim != 3 or self.coeffs.shape[1:] != (self.size, self.size):
            raise ValueError(f"coefficient stack shape {self.coeffs.shape} is inconsistent")
        defect = float(np.abs(self.f0 - self.f0.T).max())
        if defect > SYM_ATOL * max(1.0, float(np.abs(self.f0).max())):
            raise ValueError(f"f0 is not symmetric: defect {defect:.3e}")

    def evaluate(self, x):
        """F0 + sum_i x_i F_i as a dense matrix."""
        flat = x @ self.coeffs.reshape(len(x), -1)
        return self.f0 + flat.reshape(self.size, self.size)


@dataclass
class SdpProblem:
    objective: np.ndarray
    blocks: list
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None

    @property
    def num_vars(self):
        return len(self.objective)

    def validate(self):
        for b in self.blocks:
            b.validate()
            if b.coeffs.shape[0] != self.num_vars:
                raise ValueError(
                    f"block has {b.coeffs.shape[0]} coefficient matrices, expected {self.num_vars}"
                )
        if (self.eq_matrix is None) != (self.eq_rhs is None):
            raise ValueError("equality matrix and right-hand side must come together")
        if self.eq_matrix is not None and self.eq_matrix.shape[1] != self.num_vars:
            raise ValueError("equality matrix column count disagrees with num_vars")


@dataclass
class SdpSolution:
    x: np.ndarray
    objective_value: float
    duality_gap: float
    status: str               # "optimal" | "infeasible" | "max_iter"
    iterations: int
    primal_residual: float = 0.0
    dual_residual: float = 0.0


@dataclass
class SolverOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.98
    verbose: bool = False
    log_stream: object = None   # defaults to stderr when verbose


@dataclass
class AffineMap:
    """x = offset + basis @ z, mapping reduced variables back to the full space."""

    offset: np.ndarray
    basis: np.ndarray
    objective_shift: float = 0.0

    def __call__(self, z):
        return self.offset + self.basis @ z

    def pullback(self, x_full):
        """Reduced coordinates of a full-space point (its null-space component)."""
        return self.basis.T @ (np.asarray(x_full, dtype=float) - self.offset)


class EqualityInfeasibleError(ValueError):
    """The equality system E x = d has no solution within tolerance."""

    def __init__(self, residual):
        super().__init__(f"inconsistent equality constraints: residual {residual:.3e}")
        self.residual = residual


def realify(h):
    """Embed a complex Hermitian matrix as [[Re, -Im], [Im, Re]].

    The embedding is symmetric, PSD iff the input is PSD, and doubles each
    eigenvalue's multiplicity.
    """
    h = np.asarray(h, dtype=complex)
    re, im = h.real, h.imag
    top = np.hstack([re, -im])
    bot = np.hstack([im, re])
    return np.vstack([top, bot])


def realify_hermitian_constraint(h0, hs, rtol=1e-9):
    """Realify a complex Hermitian LMI h0 + sum_i x_i hs[i] >= 0.

    Returns the pair (f0, fs) of real symmetric matrices; raises ValueError on
    non-Hermitian input.
    """
    h0 = np.asarray(h0, dtype=complex)
    defect = hermiticity_defect(h0)
    if defect > rtol * max(1.0, float(np.abs(h0).max())):
        raise ValueError(f"constant term is not Hermitian: defect {defect:.3e}")
    fs = []
    for i, h in enumerate(hs):
        h = np.asarray(h, dtype=complex)
        defect = hermiticity_defect(h)
        if defect > rtol * max(1.0, float(np.abs(h).max())):
            raise ValueError(f"coefficient {i} is not Hermitian: defect {defect:.3e}")
        fs.append(realify(h))
    fs = np.stack(fs) if fs else np.zeros((0, 2 * h0.shape[0], 2 * h0.shape[0]))
    return realify(h0), fs


def eliminate_equalities(problem: SdpProblem, rtol=1e-8):
    """Substitute x = x0 + N z with N an orthonormal null-space basis of E.

    x0 is the minimum-norm solution of E x = d.  Returns the reduced problem
    (no equalities) together with the affine lift; raises
    :class:`EqualityInfeasibleError` when the system is inconsistent.
    """
    problem.validate()
    m = problem.num_vars
    if problem.eq_matrix is None:
        lift = AffineMap(offset=np.zeros(m), basis=np.eye(m), objective_shift=0.0)
        return problem, lift

    e = np.asarray(problem.eq_matrix, dtype=float)
    d = np.asarray(problem.eq_rhs, dtype=float)
    x0, *_ = np.linalg.lstsq(e, d, rcond=None)
    residual = float(np.linalg.norm(e @ x0 - d))
    if residual > rtol * (1.0 + float(np.linalg.norm(d))):
        raise EqualityInfeasibleError(residual)
    basis = nullspace_basis(e)
    reduced_blocks = []
    for b in problem.blocks:
        flat = b.coeffs.reshape(m, -1)
        f0 = b.f0 + (x0 @ flat).reshape(b.size, b.size)
        coeffs = (basis.T @ flat).reshape(basis.shape[1], b.size, b.size)
        reduced_blocks.append(SdpBlock(size=b.size, f0=f0, coeffs=coeffs))
    reduced = SdpProblem(
        objective=basis.T @ problem.objective,
        blocks=reduced_blocks,
        eq_matrix=None,
        eq_rhs=None,
    )
    lift = AffineMap(offset=x0, basis=basis,
                     objective_shift=float(problem.objective @ x0))
    return reduced, lift


# ---------------------------------------------------------------------------
# interior-point solver
# ---------------------------------------------------------------------------

class _BlockState:
    """Per-block work data for one solver instance."""

    def __init__(self, block: SdpBlock):
        self.k = block.size
        self.f0 = np.ascontiguousarray((block.f0 + block.f0.T) / 2.0)
        m = block.coeffs.shape[0]
        self.fmat = np.ascontiguousarray(block.coeffs.reshape(m, -1))

    def constraint(self, x):
        k = self.k
        return self.f0 + (x @ self.fmat).reshape(k, k)

    def apply_adjoint(self, mat):
        """<F_i, mat> for all i."""
        return self.fmat @ mat.reshape(-1)


def _min_eig(mat):
    return float(np.linalg.eigvalsh((mat + mat.T) / 2.0)[0])


def _chol(mat):
    return np.linalg.cholesky((mat + mat.T) / 2.0)


def _step_to_boundary(chol_lower, direction):
    """Largest alpha with M + alpha * D >= 0, given M = L L^T."""
    t = scipy.linalg.solve_triangular(chol_lower, direction, lower=True, check_finite=False)
    t = scipy.linalg.solve_triangular(chol_lower, t.T, lower=True, check_finite=False)
    lam = float(np.linalg.eigvalsh((t + t.T) / 2.0)[0])
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def solve_sdp(problem: SdpProblem, options: SolverOptions = None, x0=None) -> SdpSolution:
    """Solve a block SDP without equality constraints.

    Args:
        problem: the problem; run :func:`eliminate_equalities` first if it has
            equality rows.
        options: tolerances and iteration limits.
        x0: optional warm start for x; blocks need not be feasible there, the
            initial slack is shifted onto the cone and the residual is worked
            off during the iteration.

    Returns:
        An :class:`SdpSolution`; ``status`` is "optimal" once the duality gap
        falls below ``gap_tol * (1 + |objective|)`` with feasibility residuals
        below ``feas_tol``, "max_iter" when the iteration budget runs out, and
        "infeasible" when the iterates diverge.
    """
    options = options or SolverOptions()
    problem.validate()
    if problem.eq_matrix is not None:
        raise ValueError("equalities present: call eliminate_equalities first")
    log = options.log_stream or sys.stderr

    c = np.asarray(problem.objective, dtype=float)
    m = len(c)
    states = [_BlockState(b) for b in problem.blocks]
    k_total = sum(st.k for st in states)

    x = np.zeros(m) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (m,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({m},)")

    # initial slacks: shift onto the cone where needed; X starts at identity
    s_mats, x_mats = [], []
    for st in states:
        mat = st.constraint(x)
        lam = _min_eig(mat)
        if lam < 0.1:
            mat = mat + (1.0 - lam) * np.eye(st.k)
        s_mats.append(mat)
        x_mats.append(np.eye(st.k))

    status = "max_iter"
    iterations = 0
    mu0 = sum(np.trace(xm @ sm).real for xm, sm in zip(x_mats, s_mats)) / k_total
    gap = mu0 * k_total
    rp_norm = rd_norm = np.inf

    for iteration in range(1, options.max_iter + 1):
        iterations = iteration
        # residuals
        r_dual = []
        for st, sm in zip(states, s_mats):
            r_dual.append(st.constraint(x) - sm)
        r_p = c.copy()
        for st, xm in zip(states, x_mats):
            r_p -= st.apply_adjoint(xm)
        gap = sum(float(np.sum(xm * sm)) for xm, sm in zip(x_mats, s_mats))
        mu = gap / k_total
        obj = float(c @ x)
        rp_norm = float(np.abs(r_p).max()) if m else 0.0
        rd_norm = max(float(np.abs(r).max()) for r in r_dual)
        scale_c = 1.0 + float(np.abs(c).max()) if m else 1.0
        scale_f = 1.0 + max(float(np.abs(st.f0).max()) for st in states)

        if options.verbose:
            print(
                f"  it {iteration:3d}  obj {obj:+.9e}  gap {gap:.3e}  "
                f"rp {rp_norm:.2e}  rd {rd_norm:.2e}",
                file=log,
            )

        if (
            gap <= options.gap_tol * (1.0 + abs(obj))
            and rp_norm <= options.feas_tol * scale_c
            and rd_norm <= options.feas_tol * scale_f
        ):
            status = "optimal"
            break
        if not np.isfinite(obj) or np.abs(x).max() > 1e12 or mu > 1e10 * (mu0 + 1.0):
            status = "infeasible"
            break

        # Nesterov-Todd scaling per block via Cholesky + SVD
        g_list, ginv_list, sval_list, lx_list, ls_list = [], [], [], [], []
        for st, xm, sm in zip(states, x_mats, s_mats):
            lx = _chol(xm)
            ls = _chol(sm)
            u, sv, vt = np.linalg.svd(ls.T @ lx)
            sv = np.maximum(sv, 1e-300)
            g = lx @ vt.T / np.sqrt(sv)
            ginv = (vt * np.sqrt(sv)[:, None]) @ scipy.linalg.solve_triangular(
                lx, np.eye(st.k), lower=True, check_finite=False
            )
            g_list.append(g)
            ginv_list.append(ginv)
            sval_list.append(sv)
            lx_list.append(lx)
            ls_list.append(ls)

        # Schur complement B_ij = sum_b <G^T F_i G, G^T F_j G>
        schur = np.zeros((m, m))
        h_mats = []
        for st, g in zip(states, g_list):
            k = st.k
            y = (st.fmat.reshape(m * k, k) @ g).reshape(m, k, k)
            h = (np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(m * k, k) @ g).reshape(m, k * k)
            h_mats.append(h)
            schur += h @ h.T
        schur = (schur + schur.T) / 2.0

        factor = None
        jitter = 0.0
        base = max(float(np.trace(schur)) / max(m, 1), 1e-30)
        for exponent in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
            try:
                jitter = exponent * base
                factor = SpdFactorization(schur + jitter * np.eye(m) if jitter else schur)
                break
            except SpdSolveError:
                continue
        if factor is None:
            break  # hopeless conditioning; report the current iterate

        def newton_step(rc_mats):
            """Solve for (dx, dX, dS) given the complementarity right-hand sides."""
            rhs = -r_p.copy()
            for st, g, rc, rd in zip(states, g_list, rc_mats, r_dual):
                wrdw = g @ (g.T @ rd @ g) @ g.T
                rhs += st.apply_adjoint(rc - wrdw)
            dx = factor.solve(rhs)
            dss, dxs = [], []
            for st, g, rc, rd in zip(states, g_list, rc_mats, r_dual):
                k = st.k
                ds = rd + (dx @ st.fmat).reshape(k, k)
                ds = (ds + ds.T) / 2.0
                wdsw = g @ (g.T @ ds @ g) @ g.T
                dxm = rc - wdsw
                dxs.append((dxm + dxm.T) / 2.0)
                dss.append(ds)
            return dx, dxs, dss

        # predictor (affine scaling direction)
        rc_aff = [-xm for xm in x_mats]
        dx_aff, dxs_aff, dss_aff = newton_step(rc_aff)

        alpha_p_aff = min(
            (_step_to_boundary(lx, d) for lx, d in zip(lx_list, dxs_aff)), default=np.inf
        )
        alpha_d_aff = min(
            (_step_to_boundary(ls, d) for ls, d in zip(ls_list, dss_aff)), default=np.inf
        )
        alpha_p_aff = min(1.0, alpha_p_aff)
        alpha_d_aff = min(1.0, alpha_d_aff)
        gap_aff = sum(
            float(np.sum((xm + alpha_p_aff * dxm) * (sm + alpha_d_aff * dsm)))
            for xm, sm, dxm, dsm in zip(x_mats, s_mats, dxs_aff, dss_aff)
        )
        mu_aff = max(gap_aff, 0.0) / k_total
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector: recentre and absorb the second-order cross term
        rc_corr = []
        for g, ginv, sv, dxm, dsm in zip(g_list, ginv_list, sval_list, dxs_aff, dss_aff):
            dxh = ginv @ dxm @ ginv.T
            dsh = g.T @ dsm @ g
            cross = dxh @ dsh
            cross = (cross + cross.T) / 2.0
            rhat = -cross
            rhat[np.diag_indices_from(rhat)] += sigma * mu - sv**2
            rhat = rhat * (2.0 / np.add.outer(sv, sv))
            rc_corr.append(g @ rhat @ g.T)
        dx, dxs, dss = newton_step(rc_corr)

        alpha_p = min((_step_to_boundary(lx, d) for lx, d in zip(lx_list, dxs)), default=np.inf)
        alpha_d = min((_step_to_boundary(ls, d) for ls, d in zip(ls_list, dss)), default=np.inf)
        alpha_p = min(1.0, options.step_fraction * alpha_p)
        alpha_d = min(1.0, options.step_fraction * alpha_d)
        if alpha_p < 1e-10 and alpha_d < 1e-10:
            break  # stalled

        x = x + alpha_d * dx
        x_mats = [xm + alpha_p * dxm for xm, dxm in zip(x_mats, dxs)]
        s_mats = [sm + alpha_d * dsm for sm, dsm in zip(s_mats, dss)]

    return SdpSolution(
        x=x,
        objective_value=float(c @ x),
        duality_gap=float(gap),
        status=status,
        iterations=iterations,
        primal_residual=float(rp_norm),
        dual_residual=float(rd_norm),
    )


# ---------------------------------------------------------------------------
# SDPA sparse export
# ---------------------------------------------------------------------------

def write_sdpa_sparse(problem: SdpProblem, path, comment=None):
    """Write the problem in SDPA sparse format (.dat-s).

    The format has no equality section, so eliminate equalities first.  Our
    convention F0 + sum_i x_i F_i >= 0 maps onto SDPA's
    X = sum_i x_i F_i - F0 >= 0 by negating the constant term.
    """
    problem.validate()
    if problem.eq_matrix is not None:
        raise ValueError("SDPA sparse format carries no equalities; eliminate them first")
    lines = []
    if comment:
        lines.append(f'"{comment}"')
    m = problem.num_vars
    lines.append(f"{m}")
    lines.append(f"{len(problem.blocks)}")
    lines.append(" ".join(str(b.size) for b in problem.blocks))
    lines.append(" ".join(repr(float(v)) for v in problem.objective))

    def emit(matno, blkno, mat):
        for i, j in zip(*np.nonzero(np.triu(mat))):
            lines.append(f"{matno} {blkno} {i + 1} {j + 1} {float(mat[i, j])!r}")

    for bno, block in enumerate(problem.blocks, start=1):
        emit(0, bno, -block.f0)
    for vno in range(m):
        for bno, block in enumerate(problem.blocks, start=1):
            emit(vno + 1, bno, block.coeffs[vno])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
