"""Dense linear-algebra primitives shared by the channel, code and solver layers.

Everything operates on plain numpy arrays (complex128 for operators, float64
for the real solver data). Rank decisions use a relative singular-value
threshold so that they stay consistent with the positive-semidefinite
tolerances used downstream.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Relative singular-value threshold for rank decisions.
RANK_RTOL = 1e-10


class SpdSolveError(np.linalg.LinAlgError):
    """Raised when a matrix handed to :func:`solve_spd` is not positive definite.

    ``pivot`` carries the 1-based index of the offending leading minor reported
    by the Cholesky factorization, ``pivot_value`` the corresponding diagonal
    entry of the input.
    """

    def __init__(self, message, pivot=None, pivot_value=None):
        super().__init__(message)
        self.pivot = pivot
        self.pivot_value = pivot_value


def kron(a, b):
    """Kronecker product with the index convention (i, j) -> i * rows(b) + j."""
    return np.kron(np.asarray(a), np.asarray(b))


def hermiticity_defect(m):
    """Return max |M - M^dagger| over all entries."""
    m = np.asarray(m)
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def hermitian_eig(h, rtol=1e-10):
    """Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.

    Args:
        h: square matrix, Hermitian within ``rtol * max(1, max|h|)``.
        rtol: relative asymmetry tolerance.

    Returns:
        Tuple ``(w, v)`` with eigenvalues ``w`` in descending order (ties keep
        their original ascending-index order) and orthonormal eigenvectors as
        the columns of ``v``, so that ``h = v @ diag(w) @ v.conj().T``.

    Raises:
        ValueError: if the input is not Hermitian within tolerance; the message
            carries the maximum asymmetry found.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.abs(h).max()) if h.size else 0.0)
    defect = hermiticity_defect(h)
    if defect > rtol * scale:
        raise ValueError(
            f"matrix is not Hermitian: max asymmetry {defect:.3e} exceeds "
            f"{rtol:.1e} * {scale:.3e}"
        )
    w, v = np.linalg.eigh((h + h.conj().T) / 2.0)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def nullspace_basis(a, rtol=RANK_RTOL):
    """Orthonormal basis of the null space of ``a``.

    Columns span {x : a @ x = 0}; the rank is decided at the threshold
    ``rtol * sigma_max``. A full-rank input yields a matrix with zero columns.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.eye(a.shape[1])
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rtol * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


class SpdFactorization:
    """Cholesky factorization of a symmetric positive-definite matrix.

    Factor once, solve repeatedly; each solve applies one step of iterative
    refinement against the original matrix.
    """

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max()) if a.size else 0.0)
        asym = float(np.abs(a - a.T).max()) if a.size else 0.0
        if asym > 1e-8 * scale:
            raise SpdSolveError(
                f"matrix is not symmetric: max asymmetry {asym:.3e}"
            )
        self.a = a
        try:
            self._factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            pivot = _leading_minor_index(exc)
            value = float(a[pivot - 1, pivot - 1]) if pivot is not None else None
            raise SpdSolveError(
                f"matrix is not positive definite ({exc}); "
                f"offending pivot index={pivot} value={value}",
                pivot=pivot,
                pivot_value=value,
            ) from exc

    def solve(self, b, refine=1):
        b = np.asarray(b, dtype=float)
        x = scipy.linalg.cho_solve(self._factor, b, check_finite=False)
        for _ in range(refine):
            r = b - self.a @ x
            x = x + scipy.linalg.cho_solve(self._factor, r, check_finite=False)
        return x


def _leading_minor_index(exc):
    # scipy reports "k-th leading minor ... is not positive definite"
    msg = str(exc)
    head = msg.split("-th", 1)[0]
    try:
        return int(head)
    except ValueError:
        return None


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    One step of iterative refinement is applied; raises
    :class:`SpdSolveError` for indefinite or singular input.
    """
    return SpdFactorization(a).solve(b)
