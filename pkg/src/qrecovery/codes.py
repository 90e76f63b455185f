"""Code subspaces and perfect-correctability tests.

A code space is an orthonormal family of L logical vectors in the n-dimensional
ambient space.  Besides the classic operator-algebra test (matrix elements of
E_j^dagger E_k between code words proportional to delta_il), this module builds
the Gram matrix of the doubled code words under the transfer-matrix form, whose
off-diagonal entries certify that no perfect recovery exists, and the
multiplier matrix used by the synthesis relaxation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channels import KrausChannel, TransferMatrix, _mat_of, decode_matrix, encode_matrix

__all__ = [
    "CodeSpace",
    "repetition_code",
    "kl_check",
    "KlCheck",
    "perfect_recovery_gram",
    "GramCheck",
    "code_pair_basis",
    "code_projector",
    "s_matrix",
    "code_to_json",
    "code_from_json",
    "save_code",
    "load_code",
]


class CodeSpace:
    """An orthonormal basis of an L-dimensional subspace, rows of ``basis``."""

    def __init__(self, basis, ambient_dim=None, atol=1e-10):
        basis = np.atleast_2d(np.asarray(basis, dtype=complex))
        if ambient_dim is not None and basis.shape[1] != ambient_dim:
            raise ValueError(
                f"ambient_dim={ambient_dim} disagrees with vector length {basis.shape[1]}"
            )
        gram = basis.conj() @ basis.T
        defect = float(np.abs(gram - np.eye(basis.shape[0])).max())
        if defect > atol:
            raise ValueError(f"code words are not orthonormal: defect {defect:.3e}")
        self.basis = basis.copy()
        self.basis.flags.writeable = False
        self.ambient_dim = basis.shape[1]
        self.logical_dim = basis.shape[0]

    def __repr__(self):
        return f"CodeSpace(ambient_dim={self.ambient_dim}, logical_dim={self.logical_dim})"


def repetition_code(qubits) -> CodeSpace:
    """The |0...0>, |1...1> code on the given number of qubits."""
    if qubits < 1:
        raise ValueError("need at least one qubit")
    n = 2**qubits
    basis = np.zeros((2, n), dtype=complex)
    basis[0, 0] = 1.0
    basis[1, n - 1] = 1.0
    return CodeSpace(basis)


def full_space_code(n) -> CodeSpace:
    """The trivial code equal to the whole n-dimensional space."""
    return CodeSpace(np.eye(n, dtype=complex))


@dataclass
class KlCheck:
    satisfied: bool
    alpha: np.ndarray
    max_violation: float


def kl_check(e: KrausChannel, c: CodeSpace, atol=1e-8) -> KlCheck:
    """Test whether the error set is perfectly correctable on the code.

    Evaluates M[j, k, i, l] = <i_c| E_j^dagger E_k |l_c> for all index
    combinations.  alpha[j, k] is taken as the mean of the diagonal (i = l)
    entries; the violation is the largest off-diagonal magnitude or deviation
    of a diagonal entry from alpha.  The set is correctable iff the violation
    is at most ``atol``.
    """
    if e.dim != c.ambient_dim:
        raise ValueError(f"channel dim {e.dim} != code ambient dim {c.ambient_dim}")
    products = np.einsum("jba,kbc->jkac", e.ops.conj(), e.ops)  # E_j^dagger E_k
    m = np.einsum("ia,jkac,lc->jkil", c.basis.conj(), products, c.basis)
    diag = np.einsum("jkii->jki", m)
    alpha = diag.mean(axis=2)
    diag_dev = np.abs(diag - alpha[:, :, None]).max() if diag.size else 0.0
    off = m.copy()
    idx = np.arange(c.logical_dim)
    off[:, :, idx, idx] = 0.0
    off_dev = np.abs(off).max() if off.size else 0.0
    violation = float(max(diag_dev, off_dev))
    return KlCheck(satisfied=violation <= atol, alpha=alpha, max_violation=violation)


@dataclass
class GramCheck:
    gram: np.ndarray
    passes: bool


def perfect_recovery_gram(e, c: CodeSpace, atol=1e-8) -> GramCheck:
    """Gram test on the doubled code words.

    gram[i, j] = <i_c (x) i_c^*| E^dagger E |j_c (x) j_c^*>, which equals
    sum_{k,l} |<i_c| E_k^dagger E_l |j_c>|^2 for any Kraus decomposition.
    Perfect recovery requires the pattern alpha * delta_ij: off-diagonal
    entries at most ``atol`` and mutually equal diagonal entries.
    """
    em = _mat_of(e)
    if em.shape[0] != c.ambient_dim**2:
        raise ValueError(
            f"transfer matrix side {em.shape[0]} != (ambient dim {c.ambient_dim})^2"
        )
    doubled = np.stack([np.kron(v, v.conj()) for v in c.basis])  # (L, n^2)
    gg = em.conj().T @ em
    gram = np.einsum("ia,ab,jb->ij", doubled.conj(), gg, doubled)
    if np.abs(gram.imag).max() > 1e-9:
        raise ValueError("Gram matrix has a non-negligible imaginary part")
    gram = gram.real
    l = c.logical_dim
    off = gram - np.diag(np.diag(gram))
    diag_spread = float(gram.diagonal().max() - gram.diagonal().min()) if l else 0.0
    passes = bool(np.abs(off).max() <= atol and diag_spread <= atol)
    return GramCheck(gram=gram, passes=passes)


def code_pair_basis(c: CodeSpace):
    """Columns |i_c> (x) |j_c>* spanning the doubled code space, shape (n^2, L^2)."""
    cols = [np.kron(a, b.conj()) for a in c.basis for b in c.basis]
    return np.stack(cols, axis=1)


def code_projector(c: CodeSpace):
    """Orthogonal projector onto the doubled code space."""
    b = code_pair_basis(c)
    return b @ b.conj().T


def s_matrix(c: CodeSpace, complement_weights=None):
    """Negative-semidefinite multiplier matrix supported on the complement.

    The default is -(I - P) with P the doubled-code projector, which matches
    both worked repetition-code instances.  ``complement_weights`` optionally
    rescales the complement directions: S = -(I-P) diag(w) (I-P), Hermitized.
    """
    n2 = c.ambient_dim**2
    comp = np.eye(n2) - code_projector(c)
    if complement_weights is None:
        s = -comp
    else:
        w = np.asarray(complement_weights, dtype=float)
        if w.shape != (n2,):
            raise ValueError(f"expected {n2} weights, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("complement weights must be nonnegative")
        s = -comp @ np.diag(w) @ comp
        s = (s + s.conj().T) / 2.0
    return s


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def code_to_json(c: CodeSpace):
    return {
        "ambient_dim": c.ambient_dim,
        "basis": [[[float(z.real), float(z.imag)] for z in row] for row in c.basis],
    }


def code_from_json(data) -> CodeSpace:
    if not isinstance(data, dict) or "ambient_dim" not in data or "basis" not in data:
        raise ValueError("code JSON must be an object with 'ambient_dim' and 'basis'")
    basis = decode_matrix(data["basis"])
    return CodeSpace(basis, ambient_dim=int(data["ambient_dim"]))


def save_code(c, path):
    with open(path, "w") as fh:
        json.dump(code_to_json(c), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_code(path) -> CodeSpace:
    with open(path) as fh:
        return code_from_json(json.load(fh))
