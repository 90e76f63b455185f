"""Assembly and solution of the recovery-synthesis SDP.

The decision variable is the recovery channel's Choi matrix C (Hermitian,
n^2 x n^2, parametrized by n^4 reals: diagonal entries plus re/im of the upper
triangle) together with the scalar error bound eps and the multiplier tau.
The recovery transfer matrix R enters the constraints through the linear
rearrangement R = Phi(C), so everything stays a linear matrix inequality:

* standard form:     Herm(R E) + (eps - 1) I - tau S  >= 0
* alternative form:  sum_k (I (x) E_k^T) C (I (x) E_k^*) + (eps - 1) I - tau S >= 0

plus C >= 0, tau >= tau_min, and the trace-preservation equalities
(partial trace of C over the first factor equals the identity).  Minimizing
eps yields a recovery channel with certified worst-case fidelity 1 - eps over
the doubled code space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import codes as codes_mod
from .channels import (
    ChoiMatrix,
    KrausChannel,
    TransferMatrix,
    _mat_of,
    check_cp,
    check_tp,
    choi_from_kraus,
    decode_matrix,
    encode_matrix,
    kraus_from_choi,
    rearrange,
    transfer_from_kraus,
)
from .codes import CodeSpace, code_pair_basis, s_matrix
from .linalg import hermiticity_defect
from .sdp import (
    SdpBlock,
    SdpProblem,
    SdpSolution,
    SolverOptions,
    eliminate_equalities,
    realify,
    solve_sdp,
)

__all__ = [
    "HermitianParametrization",
    "assemble_standard",
    "assemble_alternative",
    "SynthesisOptions",
    "SynthesisResult",
    "SynthesisError",
    "synthesize",
    "certify",
    "CertificateReport",
    "result_to_json",
    "result_from_json",
    "save_result",
    "load_result",
]

TAU_MIN = 1e-9


class HermitianParametrization:
    """Real coordinates for Hermitian N x N matrices.

    Parameter order walks the upper triangle row by row: the diagonal entry
    (r, r) contributes one coordinate, every off-diagonal entry (r, c), r < c,
    contributes the real part followed by the imaginary part.  Total N^2.
    """

    def __init__(self, side):
        self.side = side
        self.num_params = side * side
        diag_index = np.full(side, -1, dtype=int)
        re_index = np.full((side, side), -1, dtype=int)
        im_index = np.full((side, side), -1, dtype=int)
        pos = 0
        for r in range(side):
            diag_index[r] = pos
            pos += 1
            for c in range(r + 1, side):
                re_index[r, c] = pos
                im_index[r, c] = pos + 1
                pos += 2
        assert pos == self.num_params
        self.diag_index = diag_index
        self.re_index = re_index
        self.im_index = im_index

    def matrix(self, params):
        """Hermitian matrix from its coordinates."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got {params.shape}")
        n = self.side
        m = np.zeros((n, n), dtype=complex)
        m[np.diag_indices(n)] = params[self.diag_index]
        ru, cu = np.triu_indices(n, k=1)
        vals = params[self.re_index[ru, cu]] + 1j * params[self.im_index[ru, cu]]
        m[ru, cu] = vals
        m[cu, ru] = vals.conj()
        return m

    def params(self, mat):
        """Coordinates of a Hermitian matrix (Hermitian part is taken)."""
        mat = np.asarray(mat, dtype=complex)
        h = (mat + mat.conj().T) / 2.0
        out = np.zeros(self.num_params)
        n = self.side
        out[self.diag_index] = h.diagonal().real
        ru, cu = np.triu_indices(n, k=1)
        out[self.re_index[ru, cu]] = h[ru, cu].real
        out[self.im_index[ru, cu]] = h[ru, cu].imag
        return out

    def basis_stack(self):
        """All N^2 basis matrices as a complex (N^2, N, N) stack."""
        n = self.side
        stack = np.zeros((self.num_params, n, n), dtype=complex)
        stack[self.diag_index, np.arange(n), np.arange(n)] = 1.0
        ru, cu = np.triu_indices(n, k=1)
        stack[self.re_index[ru, cu], ru, cu] = 1.0
        stack[self.re_index[ru, cu], cu, ru] = 1.0
        stack[self.im_index[ru, cu], ru, cu] = 1.0j
        stack[self.im_index[ru, cu], cu, ru] = -1.0j
        return stack


def _batch_hermitian_part(stack):
    return (stack + stack.conj().transpose(0, 2, 1)) / 2.0


def _batch_realify(stack, out=None):
    p, n, _ = stack.shape
    if out is None:
        out = np.zeros((p, 2 * n, 2 * n))
    out[:, :n, :n] = stack.real
    out[:, :n, n:] = -stack.imag
    out[:, n:, :n] = stack.imag
    out[:, n:, n:] = stack.real
    return out


def _batch_rearrange(stack, n):
    p = stack.shape[0]
    return (
        stack.reshape(p, n, n, n, n)
        .transpose(0, 1, 3, 2, 4)
        .reshape(p, n * n, n * n)
    )


def _check_s(s, code: CodeSpace, atol=1e-10):
    n2 = code.ambient_dim**2
    s = np.asarray(s, dtype=complex)
    if s.shape != (n2, n2):
        raise ValueError(f"S matrix shape {s.shape} != ({n2}, {n2})")
    if hermiticity_defect(s) > atol * max(1.0, float(np.abs(s).max())):
        raise ValueError("S matrix must be Hermitian")
    w = np.linalg.eigvalsh((s + s.conj().T) / 2.0)
    if w[-1] > atol:
        raise ValueError(f"S matrix is not negative semidefinite: max eig {w[-1]:.3e}")
    pair = code_pair_basis(code)
    leak = float(np.abs(s @ pair).max())
    if leak > atol:
        raise ValueError(f"S matrix does not vanish on the doubled code space: leak {leak:.3e}")
    return s


def _tp_equalities(param: HermitianParametrization, n):
    """Rows enforcing sum_i C[(i,a),(i,b)] = delta_ab on the parametrization.

    n^2 real rows: one per diagonal pair (a, a), a real and an imaginary row
    per off-diagonal pair a < b.  The two extra scalar variables (eps, tau)
    get zero columns; callers append them.
    """
    rows = []
    rhs = []
    num = param.num_params
    for a in range(n):
        row = np.zeros(num)
        for i in range(n):
            row[param.diag_index[i * n + a]] = 1.0
        rows.append(row)
        rhs.append(1.0)
        for b in range(a + 1, n):
            row_re = np.zeros(num)
            row_im = np.zeros(num)
            for i in range(n):
                # (i*n+a) < (i*n+b) because a < b, so these live in the upper triangle
                row_re[param.re_index[i * n + a, i * n + b]] = 1.0
                row_im[param.im_index[i * n + a, i * n + b]] = 1.0
            rows.append(row_re)
            rhs.append(0.0)
            rows.append(row_im)
            rhs.append(0.0)
    return np.stack(rows), np.array(rhs)


def _assemble(lmi_stack, lmi_const, code, s, n):
    """Common tail: wire the realified blocks and the TP equalities."""
    param = HermitianParametrization(n * n)
    num_c = param.num_params
    num_vars = num_c + 2
    eps_col, tau_col = num_c, num_c + 1
    two_n2 = 2 * n * n

    # block (a): the fidelity LMI
    coeffs_a = np.zeros((num_vars, two_n2, two_n2))
    _batch_realify(_batch_hermitian_part(lmi_stack), out=coeffs_a[:num_c])
    coeffs_a[eps_col] = np.eye(two_n2)
    coeffs_a[tau_col] = realify(-np.asarray(s, dtype=complex))
    f0_a = lmi_const

    # block (b): C itself must be PSD
    coeffs_b = np.zeros((num_vars, two_n2, two_n2))
    _batch_realify(param.basis_stack(), out=coeffs_b[:num_c])
    block_b = SdpBlock(size=two_n2, f0=np.zeros((two_n2, two_n2)), coeffs=coeffs_b)

    # block (c): tau >= TAU_MIN
    coeffs_c = np.zeros((num_vars, 1, 1))
    coeffs_c[tau_col, 0, 0] = 1.0
    block_c = SdpBlock(size=1, f0=np.array([[-TAU_MIN]]), coeffs=coeffs_c)

    eq_c, rhs = _tp_equalities(param, n)
    eq = np.zeros((eq_c.shape[0], num_vars))
    eq[:, :num_c] = eq_c

    objective = np.zeros(num_vars)
    objective[eps_col] = 1.0

    problem = SdpProblem(
        objective=objective,
        blocks=[SdpBlock(size=two_n2, f0=f0_a, coeffs=coeffs_a), block_b, block_c],
        eq_matrix=eq,
        eq_rhs=rhs,
    )
    return problem, param


def assemble_standard(e: TransferMatrix, c: CodeSpace, s) -> SdpProblem:
    """Standard-form recovery SDP with the LMI Herm(R E) + (eps-1) I - tau S >= 0.

    ``e`` is the error channel in transfer form.  ``s`` must be negative
    semidefinite and vanish on the doubled code space.
    """
    em = _mat_of(e)
    n = c.ambient_dim
    if em.shape[0] != n * n:
        raise ValueError(f"channel side {em.shape[0]} != code ambient dim squared {n * n}")
    s = _check_s(s, c)
    param = HermitianParametrization(n * n)
    stack = param.basis_stack()
    phi = _batch_rearrange(stack, n)  # R contribution of each Choi coordinate
    lmi = (phi.reshape(-1, n * n) @ em).reshape(phi.shape)
    f0 = -np.eye(2 * n * n)
    problem, _ = _assemble(lmi, f0, c, s, n)
    return problem


def assemble_alternative(e: KrausChannel, c: CodeSpace, s) -> SdpProblem:
    """Conjugated-form recovery SDP built directly on the Choi variable.

    The fidelity LMI becomes
    sum_k (I (x) E_k^T) C (I (x) E_k^*) + (eps - 1) I - tau S >= 0, which needs
    the Kraus decomposition of the error channel.
    """
    if not isinstance(e, KrausChannel):
        raise TypeError("the conjugated formulation needs the error channel in Kraus form")
    n = c.ambient_dim
    if e.dim != n:
        raise ValueError(f"channel dim {e.dim} != code ambient dim {n}")
    s = _check_s(s, c)
    param = HermitianParametrization(n * n)
    stack = param.basis_stack()
    n2 = n * n
    eye = np.eye(n, dtype=complex)
    acc = np.zeros_like(stack)
    for op in e.ops:
        conj_op = np.kron(eye, op.T)
        acc += conj_op @ stack @ conj_op.conj().T
    f0 = -np.eye(2 * n2)
    problem, _ = _assemble(acc, f0, c, s, n)
    return problem


@dataclass
class SynthesisOptions:
    formulation: str = "standard"
    gap_tol: float = 1e-7
    feas_tol: float = 1e-8
    max_iter: int = 200
    verbose: bool = False
    s_override: np.ndarray = None
    init_epsilon: float = 1.5
    init_tau: float = 0.5


@dataclass
class SynthesisResult:
    recovery: TransferMatrix
    choi: ChoiMatrix
    epsilon: float
    tau: float
    guaranteed_fidelity: float
    residuals: dict
    formulation: str
    solver_status: str = "optimal"
    solver_iterations: int = 0
    solver_gap: float = 0.0
    s: np.ndarray = field(default=None, repr=False)


class SynthesisError(RuntimeError):
    """Solver did not reach optimality; the best iterate rides along."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def default_s(code: CodeSpace, formulation: str):
    """Multiplier matrix used when the caller does not supply one.

    The standard form uses -(I - P); the conjugated form uses the degenerate
    choice S = 0 (the zero matrix is negative semidefinite and supported on
    the complement), under which the multiplier term is inert and the LMI is
    enforced on the whole doubled space.
    """
    if formulation == "standard":
        return s_matrix(code)
    return np.zeros((code.ambient_dim**2, code.ambient_dim**2))


def _as_transfer(error) -> TransferMatrix:
    if isinstance(error, TransferMatrix):
        return error
    if isinstance(error, KrausChannel):
        return transfer_from_kraus(error)
    if isinstance(error, ChoiMatrix):
        return TransferMatrix(rearrange(error))
    raise TypeError(f"not an error-channel object: {type(error)!r}")


def _as_kraus(error) -> KrausChannel:
    if isinstance(error, KrausChannel):
        return error
    if isinstance(error, ChoiMatrix):
        return kraus_from_choi(error)
    if isinstance(error, TransferMatrix):
        return kraus_from_choi(ChoiMatrix(rearrange(error)))
    raise TypeError(f"not an error-channel object: {type(error)!r}")


def lmi_matrix(result_or_parts, error, s, formulation):
    """The complex fidelity-LMI matrix at a solved point (diagnostic)."""
    if isinstance(result_or_parts, SynthesisResult):
        cm = np.asarray(result_or_parts.choi.mat)
        eps, tau = result_or_parts.epsilon, result_or_parts.tau
    else:
        cm, eps, tau = result_or_parts
    n2 = cm.shape[0]
    n = int(round(np.sqrt(n2)))
    s = np.asarray(s, dtype=complex)
    if formulation == "standard":
        re = rearrange(cm) @ _mat_of(_as_transfer(error))
        herm = (re + re.conj().T) / 2.0
    else:
        kr = _as_kraus(error)
        eye = np.eye(n, dtype=complex)
        herm = np.zeros((n2, n2), dtype=complex)
        for op in kr.ops:
            conj_op = np.kron(eye, op.T)
            herm += conj_op @ cm @ conj_op.conj().T
        herm = (herm + herm.conj().T) / 2.0
    return herm + (eps - 1.0) * np.eye(n2) - tau * s


def synthesize(error, code: CodeSpace, formulation="standard", options: SynthesisOptions = None) -> SynthesisResult:
    """Solve the recovery SDP and package the certified channel.

    ``error`` may be a Kraus set, a transfer matrix, or a Choi matrix; the
    formulation is "standard" or "alternative".  Raises
    :class:`SynthesisError` carrying the best iterate when the solver stops
    short of optimality.
    """
    options = options or SynthesisOptions()
    if formulation not in ("standard", "alternative"):
        raise ValueError(f"unknown formulation {formulation!r}")
    n = code.ambient_dim
    s = options.s_override if options.s_override is not None else default_s(code, formulation)

    if formulation == "standard":
        problem = assemble_standard(_as_transfer(error), code, s)
    else:
        problem = assemble_alternative(_as_kraus(error), code, s)

    reduced, lift = eliminate_equalities(problem)
    param = HermitianParametrization(n * n)
    x_init = np.zeros(problem.num_vars)
    x_init[: param.num_params] = param.params(np.eye(n * n, dtype=complex) / n)
    x_init[param.num_params] = options.init_epsilon
    x_init[param.num_params + 1] = options.init_tau
    z0 = lift.pullback(x_init)
    del problem  # the reduced copy is all the solver needs

    sol = solve_sdp(
        reduced,
        SolverOptions(
            gap_tol=options.gap_tol,
            feas_tol=options.feas_tol,
            max_iter=options.max_iter,
            verbose=options.verbose,
        ),
        x0=z0,
    )
    x = lift(sol.x)
    result = _package(x, sol, error, s, formulation, n)
    if sol.status != "optimal":
        raise SynthesisError(
            f"solver stopped with status {sol.status!r} after {sol.iterations} iterations",
            result=result,
        )
    return result


def _package(x, sol: SdpSolution, error, s, formulation, n) -> SynthesisResult:
    param = HermitianParametrization(n * n)
    choi_mat = param.matrix(x[: param.num_params])
    eps = float(x[param.num_params])
    tau = float(x[param.num_params + 1])
    recovery_mat = rearrange(choi_mat)

    tp = check_tp(recovery_mat)
    cp = float(np.linalg.eigvalsh(choi_mat)[0])
    lmi = lmi_matrix((choi_mat, eps, tau), error, s, formulation)
    lmi_min = float(np.linalg.eigvalsh((lmi + lmi.conj().T) / 2.0)[0])

    ok = sol.status == "optimal"
    recovery = TransferMatrix(recovery_mat, tp_atol=1e-6, cp_atol=1e-6, validate=ok)
    choi = ChoiMatrix(choi_mat, psd_atol=1e-6, tp_atol=1e-6, validate=ok)
    return SynthesisResult(
        recovery=recovery,
        choi=choi,
        epsilon=eps,
        tau=tau,
        guaranteed_fidelity=1.0 - eps,
        residuals={"tp": tp, "cp": cp, "lmi": lmi_min},
        formulation=formulation,
        solver_status=sol.status,
        solver_iterations=sol.iterations,
        solver_gap=sol.duality_gap,
        s=np.asarray(s),
    )


@dataclass
class CertificateReport:
    lmi_min_eig: float
    compression_min_eig: float
    compression_bound: float
    tp_residual: float
    cp_min_eig: float
    valid: bool

    def margins(self):
        return {
            "lmi": self.lmi_min_eig + 1e-6,
            "compression": self.compression_min_eig - self.compression_bound,
            "tp": 1e-6 - self.tp_residual,
            "cp": self.cp_min_eig + 1e-6,
        }


def certify(result: SynthesisResult, error, code: CodeSpace, atol=1e-6) -> CertificateReport:
    """Recompute the optimality certificates of a synthesized recovery.

    Checks (i) the fidelity LMI at (R, eps, tau), (ii) the compressed
    guarantee: the smallest eigenvalue of the formulation's guarantee matrix
    compressed onto the doubled code space must reach 1 - eps - atol, and
    (iii) channel admissibility of R.  Any failed margin marks the
    certificate invalid.
    """
    s = result.s if result.s is not None else default_s(code, result.formulation)
    lmi = lmi_matrix(result, error, s, result.formulation)
    lmi_min = float(np.linalg.eigvalsh((lmi + lmi.conj().T) / 2.0)[0])

    if result.formulation == "standard":
        re = np.asarray(result.recovery.mat) @ _mat_of(_as_transfer(error))
        guarantee = (re + re.conj().T) / 2.0
    else:
        guarantee = lmi - (result.epsilon - 1.0) * np.eye(lmi.shape[0]) + result.tau * s
    pair = code_pair_basis(code)
    compressed = pair.conj().T @ guarantee @ pair
    comp_min = float(np.linalg.eigvalsh((compressed + compressed.conj().T) / 2.0)[0])
    bound = 1.0 - result.epsilon - atol

    tp = check_tp(result.recovery.mat)
    cp = check_cp(result.recovery.mat)
    valid = bool(
        lmi_min >= -atol and comp_min >= bound and tp <= atol and cp >= -atol
    )
    return CertificateReport(
        lmi_min_eig=lmi_min,
        compression_min_eig=comp_min,
        compression_bound=bound,
        tp_residual=tp,
        cp_min_eig=cp,
        valid=valid,
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def result_to_json(result: SynthesisResult):
    return {
        "epsilon": result.epsilon,
        "tau": result.tau,
        "guaranteed_fidelity": result.guaranteed_fidelity,
        "formulation": result.formulation,
        "transfer": encode_matrix(result.recovery.mat),
        "choi": encode_matrix(result.choi.mat),
        "residuals": {k: float(v) for k, v in result.residuals.items()},
        "solver": {
            "iterations": result.solver_iterations,
            "gap": result.solver_gap,
            "status": result.solver_status,
        },
    }


def result_from_json(data) -> SynthesisResult:
    needed = {"epsilon", "tau", "guaranteed_fidelity", "formulation", "transfer", "choi"}
    missing = needed - set(data)
    if missing:
        raise ValueError(f"result JSON is missing fields {sorted(missing)}")
    solver = data.get("solver", {})
    return SynthesisResult(
        recovery=TransferMatrix(decode_matrix(data["transfer"]), tp_atol=1e-6, cp_atol=1e-6),
        choi=ChoiMatrix(decode_matrix(data["choi"]), psd_atol=1e-6, tp_atol=1e-6),
        epsilon=float(data["epsilon"]),
        tau=float(data["tau"]),
        guaranteed_fidelity=float(data["guaranteed_fidelity"]),
        residuals={k: float(v) for k, v in data.get("residuals", {}).items()},
        formulation=str(data["formulation"]),
        solver_status=str(solver.get("status", "optimal")),
        solver_iterations=int(solver.get("iterations", 0)),
        solver_gap=float(solver.get("gap", 0.0)),
    )


def save_result(result, path):
    with open(path, "w") as fh:
        json.dump(result_to_json(result), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_result(path) -> SynthesisResult:
    with open(path) as fh:
        return result_from_json(json.load(fh))
