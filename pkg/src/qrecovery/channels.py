"""Quantum-channel representations and conversions.

A channel on an n-dimensional space is carried in one of three equivalent
forms:

* a Kraus set {E_k} with sum_k E_k^dagger E_k = I,
* the transfer matrix sum_k E_k (x) conj(E_k) acting on vectorized states,
* the Choi matrix, the positive-semidefinite Gram matrix of the row-major
  vectorizations of the Kraus operators.

Transfer and Choi forms are related by an index rearrangement that is an exact
involution.  The vectorization convention is row-major throughout: the pair
(i, j) maps to the flat index i * n + j, which makes the reference vector
sum_k |k>|k> the flattened identity and vec(rho) the flattened matrix.
"""

from __future__ import annotations

import json

import numpy as np

from .linalg import hermitian_eig, hermiticity_defect, kron

__all__ = [
    "KrausChannel",
    "TransferMatrix",
    "ChoiMatrix",
    "DensityOperator",
    "max_entangled_vec",
    "vectorize_state",
    "unvectorize",
    "transfer_from_kraus",
    "choi_from_kraus",
    "rearrange",
    "kraus_from_choi",
    "apply",
    "compose",
    "check_tp",
    "check_cp",
    "bit_flip_channel",
    "channel_to_json",
    "channel_from_json",
    "save_channel",
    "load_channel",
]

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

# Default admission tolerances for trace preservation / complete positivity.
TP_ATOL = 1e-8
CP_ATOL = 1e-8


def _frozen(a, dtype=complex):
    out = np.array(a, dtype=dtype, order="C")
    out.flags.writeable = False
    return out


class KrausChannel:
    """A channel given by Kraus operators, stacked as an (m, n, n) array."""

    def __init__(self, ops, tp_atol=1e-9, validate=True):
        ops = np.asarray(ops, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise ValueError(f"expected a stack of square matrices, got {ops.shape}")
        self.ops = _frozen(ops)
        self.dim = ops.shape[1]
        if validate:
            acc = np.einsum("kji,kjl->il", ops.conj(), ops)
            defect = float(np.abs(acc - np.eye(self.dim)).max())
            if defect > tp_atol:
                raise ValueError(
                    f"Kraus set is not trace preserving: |sum E^+E - I| = {defect:.3e}"
                )

    def __len__(self):
        return self.ops.shape[0]

    def __iter__(self):
        return iter(self.ops)

    def __repr__(self):
        return f"KrausChannel(dim={self.dim}, num_ops={len(self)})"


class TransferMatrix:
    """The n^2 x n^2 matrix mapping vec(rho) to vec(rho')."""

    def __init__(self, mat, tp_atol=TP_ATOL, cp_atol=CP_ATOL, validate=True):
        mat = np.asarray(mat, dtype=complex)
        n = _square_side(mat)
        self.mat = _frozen(mat)
        self.dim = n
        if validate:
            tp = check_tp(mat)
            if tp > tp_atol:
                raise ValueError(f"transfer matrix is not trace preserving: residual {tp:.3e}")
            cp = check_cp(mat)
            if cp < -cp_atol:
                raise ValueError(f"transfer matrix is not completely positive: min eig {cp:.3e}")

    def __repr__(self):
        return f"TransferMatrix(dim={self.dim})"


class ChoiMatrix:
    """The positive-semidefinite n^2 x n^2 channel matrix with unit partial trace."""

    def __init__(self, mat, psd_atol=CP_ATOL, tp_atol=TP_ATOL, validate=True):
        mat = np.asarray(mat, dtype=complex)
        n = _square_side(mat)
        self.mat = _frozen(mat)
        self.dim = n
        if validate:
            herm = hermiticity_defect(mat)
            if herm > 1e-8 * max(1.0, float(np.abs(mat).max())):
                raise ValueError(f"Choi matrix is not Hermitian: defect {herm:.3e}")
            w = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
            if w[0] < -psd_atol:
                raise ValueError(f"Choi matrix is not PSD: min eig {w[0]:.3e}")
            pt = partial_trace_first(mat)
            defect = float(np.abs(pt - np.eye(n)).max())
            if defect > tp_atol:
                raise ValueError(f"Choi partial trace differs from identity by {defect:.3e}")

    def __repr__(self):
        return f"ChoiMatrix(dim={self.dim})"


class DensityOperator:
    """A Hermitian, unit-trace, PSD n x n matrix."""

    def __init__(self, mat, atol=1e-10, validate=True):
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got {mat.shape}")
        self.mat = _frozen(mat)
        self.dim = mat.shape[0]
        if validate:
            herm = hermiticity_defect(mat)
            if herm > atol:
                raise ValueError(f"state is not Hermitian: defect {herm:.3e}")
            tr = complex(np.trace(mat))
            if abs(tr - 1.0) > atol:
                raise ValueError(f"state trace {tr} is not 1")
            w = np.linalg.eigvalsh((mat + mat.conj().T) / 2.0)
            if w[0] < -atol:
                raise ValueError(f"state has negative eigenvalue {w[0]:.3e}")

    @classmethod
    def pure(cls, vec):
        vec = np.asarray(vec, dtype=complex)
        vec = vec / np.linalg.norm(vec)
        return cls(np.outer(vec, vec.conj()))

    def __repr__(self):
        return f"DensityOperator(dim={self.dim})"


def _square_side(mat):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    n = int(round(np.sqrt(mat.shape[0])))
    if n * n != mat.shape[0]:
        raise ValueError(f"matrix side {mat.shape[0]} is not a perfect square")
    return n


def _mat_of(x):
    return x.mat if isinstance(x, (TransferMatrix, ChoiMatrix, DensityOperator)) else np.asarray(x, dtype=complex)


def max_entangled_vec(n):
    """The reference vector sum_k |k> (x) |k>* of squared norm n.

    In the computational basis the conjugation is trivial, so the result has
    ones at the positions k * n + k.  The vector is basis independent: for any
    orthonormal basis {|a_k>}, sum_k |a_k> (x) |a_k>* gives the same vector.
    """
    if n < 1:
        raise ValueError("dimension must be at least 1")
    e = np.zeros(n * n, dtype=complex)
    e[:: n + 1] = 1.0
    return e


def vectorize_state(rho):
    """Map an n x n matrix to (rho (x) I) |e>, the row-major flattening.

    For a pure state rho = |phi><phi| the result is |phi> (x) |phi>*.
    """
    m = _mat_of(rho)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m.reshape(-1).copy()


def unvectorize(vec):
    """Inverse of :func:`vectorize_state`."""
    vec = np.asarray(vec, dtype=complex)
    n = int(round(np.sqrt(vec.size)))
    if n * n != vec.size:
        raise ValueError(f"vector length {vec.size} is not a perfect square")
    return vec.reshape(n, n).copy()


def partial_trace_first(mat):
    """Trace out the first tensor factor of an n^2 x n^2 matrix."""
    mat = _mat_of(mat)
    n = _square_side(mat)
    return np.einsum("iaib->ab", mat.reshape(n, n, n, n))


def transfer_from_kraus(k: KrausChannel) -> TransferMatrix:
    """Build the transfer matrix sum_k E_k (x) conj(E_k)."""
    acc = np.einsum("kab,kcd->acbd", k.ops, k.ops.conj())
    n = k.dim
    return TransferMatrix(acc.reshape(n * n, n * n))


def choi_from_kraus(k: KrausChannel) -> ChoiMatrix:
    """Build the Choi matrix sum_k vec(E_k) vec(E_k)^dagger."""
    vecs = k.ops.reshape(len(k), -1)
    return ChoiMatrix(vecs.T @ vecs.conj())


def rearrange(x):
    """The involutive index shuffle between transfer and Choi forms.

    out[(i, k), (j, l)] = in[(i, j), (k, l)] in the row-major pair convention;
    applying it twice returns the input exactly.
    """
    x = _mat_of(x)
    n = _square_side(x)
    return x.reshape(n, n, n, n).transpose(0, 2, 1, 3).reshape(n * n, n * n).copy()


def kraus_from_choi(c, eig_cutoff=1e-9, neg_atol=1e-8, tp_atol=1e-7):
    """Extract a Kraus set from a Choi matrix.

    Eigenpairs (mu, v) with mu > eig_cutoff * mu_max contribute the operator
    sqrt(mu) * unvec(v).  Eigenvalues below -neg_atol mean the input is not a
    channel.  The extracted set reproduces the transfer matrix of the input up
    to the noise floor of the Choi matrix itself.
    """
    mat = _mat_of(c)
    n = _square_side(mat)
    w, v = hermitian_eig((mat + mat.conj().T) / 2.0, rtol=1e-6)
    if w[-1] < -neg_atol:
        raise ValueError(f"not a channel: Choi matrix has eigenvalue {w[-1]:.3e}")
    mu_max = max(w[0], 0.0)
    ops = [
        np.sqrt(mu) * v[:, i].reshape(n, n)
        for i, mu in enumerate(w)
        if mu > eig_cutoff * mu_max
    ]
    if not ops:
        raise ValueError("Choi matrix has no eigenvalue above the extraction cutoff")
    return KrausChannel(np.stack(ops), tp_atol=tp_atol)


def apply(x: TransferMatrix, rho, atol=1e-8) -> DensityOperator:
    """Apply a channel in transfer form to a state."""
    xm = _mat_of(x)
    rm = _mat_of(rho)
    if xm.shape[0] != rm.size:
        raise ValueError(f"dimension mismatch: channel on n={_square_side(xm)}, state {rm.shape}")
    out = unvectorize(xm @ vectorize_state(rm))
    out = (out + out.conj().T) / 2.0
    return DensityOperator(out, atol=atol)


def compose(a: TransferMatrix, b: TransferMatrix) -> TransferMatrix:
    """Cascade connection: the channel b followed by a, i.e. the product a @ b."""
    am, bm = _mat_of(a), _mat_of(b)
    if am.shape != bm.shape:
        raise ValueError(f"dimension mismatch: {am.shape} vs {bm.shape}")
    return TransferMatrix(am @ bm)


def check_tp(x) -> float:
    """Trace-preservation residual max |<e| X - <e||."""
    xm = _mat_of(x)
    n = _square_side(xm)
    e = max_entangled_vec(n)
    return float(np.abs(e.conj() @ xm - e.conj()).max())


def check_cp(x) -> float:
    """Smallest eigenvalue of the Hermitian part of the rearranged matrix.

    Nonnegative (up to tolerance) exactly for completely positive maps.
    """
    r = rearrange(x)
    return float(np.linalg.eigvalsh((r + r.conj().T) / 2.0)[0])


def bit_flip_channel(p, qubits=1) -> KrausChannel:
    """Tensor power of the single-qubit bit-flip channel with flip probability p.

    Kraus operators enumerate flip patterns from all-flipped down to identity;
    a pattern flipping w of the k qubits carries weight sqrt(p^w q^(k-w)).
    For one qubit this is {sqrt(p) X, sqrt(q) I}; for two qubits
    {p XX, sqrt(pq) XI, sqrt(pq) IX, q II}.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"flip probability {p} outside [0, 1]")
    if qubits not in (1, 2, 3):
        raise ValueError(f"qubits must be 1, 2 or 3, got {qubits}")
    q = 1.0 - p
    eye = np.eye(2, dtype=complex)
    ops = []
    for mask in range(2**qubits - 1, -1, -1):
        op = np.array([[1.0 + 0j]])
        weight = 0
        for bit in range(qubits - 1, -1, -1):
            if mask & (1 << bit):
                op = kron(op, PAULI_X)
                weight += 1
            else:
                op = kron(op, eye)
        ops.append(np.sqrt(p**weight * q ** (qubits - weight)) * op)
    return KrausChannel(np.stack(ops), validate=False)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def encode_matrix(m):
    """Row-major nested list of [re, im] pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def decode_matrix(data):
    try:
        return np.array([[complex(e[0], e[1]) for e in row] for row in data], dtype=complex)
    except (TypeError, IndexError) as exc:
        raise ValueError(f"malformed matrix entry: {exc}") from exc


def channel_to_json(ch):
    if isinstance(ch, KrausChannel):
        return {"dim": ch.dim, "kraus": [encode_matrix(op) for op in ch.ops]}
    if isinstance(ch, TransferMatrix):
        return {"dim": ch.dim, "transfer": encode_matrix(ch.mat)}
    if isinstance(ch, ChoiMatrix):
        return {"dim": ch.dim, "choi": encode_matrix(ch.mat)}
    raise TypeError(f"not a channel object: {type(ch)!r}")


def channel_from_json(data):
    """Rebuild a channel from its JSON form, validating the invariants."""
    if not isinstance(data, dict) or "dim" not in data:
        raise ValueError("channel JSON must be an object with a 'dim' field")
    dim = int(data["dim"])
    if "kraus" in data:
        ops = np.stack([decode_matrix(m) for m in data["kraus"]])
        if ops.shape[1] != dim:
            raise ValueError(f"field 'dim'={dim} disagrees with operator shape {ops.shape[1:]}")
        return KrausChannel(ops)
    if "transfer" in data:
        mat = decode_matrix(data["transfer"])
        if mat.shape[0] != dim * dim:
            raise ValueError(f"field 'dim'={dim} disagrees with matrix shape {mat.shape}")
        return TransferMatrix(mat)
    if "choi" in data:
        mat = decode_matrix(data["choi"])
        if mat.shape[0] != dim * dim:
            raise ValueError(f"field 'dim'={dim} disagrees with matrix shape {mat.shape}")
        return ChoiMatrix(mat)
    raise ValueError("channel JSON needs one of the fields 'kraus', 'transfer', 'choi'")


def save_channel(ch, path):
    with open(path, "w") as fh:
        json.dump(channel_to_json(ch), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_channel(path):
    with open(path) as fh:
        return channel_from_json(json.load(fh))
