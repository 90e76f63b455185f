import json

import numpy as np
import pytest

from conftest import random_kraus_channel, random_unitary
from qrecovery.channels import (
    ChoiMatrix,
    DensityOperator,
    KrausChannel,
    TransferMatrix,
    apply,
    bit_flip_channel,
    channel_from_json,
    channel_to_json,
    check_cp,
    check_tp,
    choi_from_kraus,
    compose,
    kraus_from_choi,
    max_entangled_vec,
    rearrange,
    transfer_from_kraus,
    unvectorize,
    vectorize_state,
)

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def paper_style_double_flip_transfer(p):
    """The 16x16 two-qubit flip transfer matrix assembled block by block."""
    q = 1.0 - p
    e1 = p * np.kron(SX, SX)
    e2 = np.sqrt(p * q) * np.kron(SX, I2)
    e3 = np.sqrt(p * q) * np.kron(I2, SX)
    e4 = q * np.kron(I2, I2)
    return np.block(
        [
            [q * e4, np.sqrt(p * q) * e3, np.sqrt(p * q) * e2, p * e1],
            [np.sqrt(p * q) * e3, q * e4, p * e1, np.sqrt(p * q) * e2],
            [np.sqrt(p * q) * e2, p * e1, q * e4, np.sqrt(p * q) * e3],
            [p * e1, np.sqrt(p * q) * e2, np.sqrt(p * q) * e3, q * e4],
        ]
    )


# ---------------------------------------------------------------------------
# reference vector and vectorization
# ---------------------------------------------------------------------------

def test_max_entangled_vec_small():
    assert np.array_equal(max_entangled_vec(2), np.array([1, 0, 0, 1], dtype=complex))
    e3 = np.zeros(9, dtype=complex)
    e3[[0, 4, 8]] = 1.0
    assert np.array_equal(max_entangled_vec(3), e3)
    with pytest.raises(ValueError):
        max_entangled_vec(0)


def test_max_entangled_vec_basis_independence():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = random_unitary(rng, 4)
        acc = sum(np.kron(u[:, k], u[:, k].conj()) for k in range(4))
        assert np.abs(acc - max_entangled_vec(4)).max() <= 1e-12


def test_vectorize_pure_and_mixed_states():
    assert np.array_equal(
        vectorize_state(np.array([[1, 0], [0, 0]], dtype=complex)),
        np.array([1, 0, 0, 0], dtype=complex),
    )
    assert np.array_equal(
        vectorize_state(I2 / 2), np.array([0.5, 0, 0, 0.5], dtype=complex)
    )
    phi = np.array([1.0, 1.0j]) / np.sqrt(2.0)
    vec = vectorize_state(np.outer(phi, phi.conj()))
    assert np.abs(vec - np.kron(phi, phi.conj())).max() < 1e-15
    assert abs(vec[1] - (-0.5j)) < 1e-15  # the (0,1) component


def test_transpose_identity_on_reference_vector():
    rng = np.random.default_rng(1)
    for n in (2, 3, 4):
        e = max_entangled_vec(n)
        for _ in range(34):
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            lhs = np.kron(a, np.eye(n)) @ e
            rhs = np.kron(np.eye(n), a.T) @ e
            assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(a).max())


# ---------------------------------------------------------------------------
# conversions
# ---------------------------------------------------------------------------

def test_transfer_identity_channel():
    ident = KrausChannel(np.eye(2, dtype=complex)[None])
    assert np.array_equal(transfer_from_kraus(ident).mat, np.eye(4))


def test_transfer_single_qubit_bit_flip():
    t = transfer_from_kraus(bit_flip_channel(0.9, 1)).mat
    expected = np.array(
        [
            [0.1, 0, 0, 0.9],
            [0, 0.1, 0.9, 0],
            [0, 0.9, 0.1, 0],
            [0.9, 0, 0, 0.1],
        ],
        dtype=complex,
    )
    assert np.abs(t - expected).max() < 1e-15


def test_transfer_double_flip_matches_block_layout():
    t = transfer_from_kraus(bit_flip_channel(0.9, 2)).mat
    assert np.abs(t - paper_style_double_flip_transfer(0.9)).max() < 1e-15


def test_choi_identity_channel_is_reference_projector():
    ident = KrausChannel(np.eye(2, dtype=complex)[None])
    choi = choi_from_kraus(ident).mat
    e = max_entangled_vec(2)
    assert np.array_equal(choi, np.outer(e, e.conj()))
    w = np.linalg.eigvalsh(choi)
    assert np.allclose(w, [0, 0, 0, 2], atol=1e-14)


def test_choi_bit_flip_spectrum():
    w = np.linalg.eigvalsh(choi_from_kraus(bit_flip_channel(0.9, 1)).mat)
    assert np.allclose(np.sort(w), [0.0, 0.0, 0.2, 1.8], atol=1e-12)


def test_choi_equals_rearranged_transfer():
    rng = np.random.default_rng(2)
    for _ in range(10):
        ch = random_kraus_channel(rng, 3, 4)
        choi = choi_from_kraus(ch).mat
        transfer = transfer_from_kraus(ch).mat
        assert np.abs(choi - rearrange(transfer)).max() <= 1e-12


def test_rearrange_is_involution_exactly():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    assert np.array_equal(rearrange(rearrange(x)), x)
    with pytest.raises(ValueError):
        rearrange(np.eye(3))


def test_rearranged_double_flip_transfer_is_valid_choi():
    t = paper_style_double_flip_transfer(0.9)
    c = rearrange(t)
    w = np.linalg.eigvalsh((c + c.conj().T) / 2.0)
    assert w[0] >= -1e-12
    pt = np.einsum("iaib->ab", c.reshape(4, 4, 4, 4))
    assert np.abs(pt - np.eye(4)).max() < 1e-12


def test_kraus_from_choi_identity():
    ident = KrausChannel(np.eye(2, dtype=complex)[None])
    extracted = kraus_from_choi(choi_from_kraus(ident))
    assert len(extracted) == 1
    op = extracted.ops[0]
    phase = op[0, 0] / abs(op[0, 0])
    assert np.abs(op / phase - np.eye(2)).max() < 1e-12


def test_kraus_from_choi_bit_flip_round_trip():
    ch = bit_flip_channel(0.9, 1)
    extracted = kraus_from_choi(choi_from_kraus(ch))
    assert len(extracted) == 2
    t1 = transfer_from_kraus(ch).mat
    t2 = transfer_from_kraus(extracted).mat
    assert np.abs(t1 - t2).max() <= 1e-10


def test_kraus_from_choi_random_round_trip():
    rng = np.random.default_rng(4)
    ch = random_kraus_channel(rng, 3, 6)
    extracted = kraus_from_choi(choi_from_kraus(ch))
    t1 = transfer_from_kraus(ch).mat
    t2 = transfer_from_kraus(extracted).mat
    assert np.abs(t1 - t2).max() <= 1e-8


def test_kraus_from_choi_rejects_negative():
    bad = np.diag([1.0, -0.5, 1.0, 1.5]).astype(complex)
    with pytest.raises(ValueError, match="not a channel"):
        kraus_from_choi(bad)


# ---------------------------------------------------------------------------
# application and composition
# ---------------------------------------------------------------------------

def test_apply_identity_and_bit_flip():
    rho = DensityOperator(np.array([[1, 0], [0, 0]], dtype=complex))
    ident = transfer_from_kraus(KrausChannel(np.eye(2, dtype=complex)[None]))
    assert np.abs(apply(ident, rho).mat - rho.mat).max() < 1e-14
    flip = transfer_from_kraus(bit_flip_channel(0.9, 1))
    out = apply(flip, rho).mat
    assert np.abs(out - np.diag([0.1, 0.9])).max() < 1e-14


def test_apply_double_flip_on_00():
    p, q = 0.9, 0.1
    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 1.0
    ch = bit_flip_channel(p, 2)
    # direct Kraus evaluation as the oracle
    expected = sum(op @ rho @ op.conj().T for op in ch.ops)
    assert np.abs(expected - np.diag([q * q, p * q, p * q, p * p])).max() < 1e-15
    out = apply(transfer_from_kraus(ch), DensityOperator(rho)).mat
    assert np.abs(out - expected).max() <= 1e-10


def test_apply_dimension_mismatch():
    flip = transfer_from_kraus(bit_flip_channel(0.5, 1))
    with pytest.raises(ValueError):
        apply(flip, DensityOperator(np.eye(4) / 4))


def test_compose_identity_and_classical_convolution():
    p = 0.3
    flip = transfer_from_kraus(bit_flip_channel(p, 1))
    ident = transfer_from_kraus(KrausChannel(np.eye(2, dtype=complex)[None]))
    assert np.abs(compose(ident, flip).mat - flip.mat).max() < 1e-14
    twice = compose(flip, flip)
    conv = transfer_from_kraus(bit_flip_channel(2 * p * (1 - p), 1))
    assert np.abs(twice.mat - conv.mat).max() <= 1e-12


def test_check_tp_values():
    ident = transfer_from_kraus(KrausChannel(np.eye(2, dtype=complex)[None]))
    assert check_tp(ident) == 0.0
    t2 = transfer_from_kraus(bit_flip_channel(0.9, 2))
    assert check_tp(t2) <= 1e-12
    # scaling by 1.01 leaves a residual of exactly 0.01 in the max norm
    assert abs(check_tp(1.01 * np.asarray(t2.mat)) - 0.01) < 1e-12


def test_check_cp_values():
    ident = transfer_from_kraus(KrausChannel(np.eye(2, dtype=complex)[None]))
    assert abs(check_cp(ident)) <= 1e-12
    rng = np.random.default_rng(5)
    ch = random_kraus_channel(rng, 3, 4)
    assert check_cp(transfer_from_kraus(ch)) >= -1e-10
    # the transpose map: X2 = SWAP is trace preserving but not CP
    swap = np.zeros((4, 4))
    swap[0, 0] = swap[1, 2] = swap[2, 1] = swap[3, 3] = 1.0
    assert abs(check_tp(swap)) <= 1e-14
    assert abs(check_cp(swap) - (-1.0)) <= 1e-12


# ---------------------------------------------------------------------------
# bit-flip channel construction
# ---------------------------------------------------------------------------

def test_bit_flip_limits_and_errors():
    ident = transfer_from_kraus(bit_flip_channel(0.0, 1))
    assert np.abs(ident.mat - np.eye(4)).max() < 1e-15
    with pytest.raises(ValueError):
        bit_flip_channel(1.5, 1)
    with pytest.raises(ValueError):
        bit_flip_channel(0.5, 4)


def test_bit_flip_two_qubit_operator_list():
    p, q = 0.9, 0.1
    ch = bit_flip_channel(p, 2)
    assert len(ch) == 4
    expected = [
        p * np.kron(SX, SX),
        np.sqrt(p * q) * np.kron(SX, I2),
        np.sqrt(p * q) * np.kron(I2, SX),
        q * np.kron(I2, I2),
    ]
    for op, ref in zip(ch.ops, expected):
        assert np.abs(op - ref).max() < 1e-15
    acc = sum(op.conj().T @ op for op in ch.ops)
    assert np.abs(acc - np.eye(4)).max() < 1e-15


def test_bit_flip_three_qubit_weights():
    p, q = 0.9, 0.1
    ch = bit_flip_channel(p, 3)
    assert len(ch) == 8
    norms = sorted(float(np.abs(op).max()) for op in ch.ops)
    expected = sorted(
        np.sqrt(p**w * q ** (3 - w)) for w in (0, 1, 1, 1, 2, 2, 2, 3)
    )
    assert np.allclose(norms, expected, atol=1e-15)


def test_kraus_constructor_rejects_non_tp():
    with pytest.raises(ValueError, match="trace preserving"):
        KrausChannel(np.stack([np.eye(2, dtype=complex), np.eye(2, dtype=complex)]))


# ---------------------------------------------------------------------------
# structural properties
# ---------------------------------------------------------------------------

def test_unitary_kraus_freedom():
    rng = np.random.default_rng(6)
    for _ in range(5):
        ch = random_kraus_channel(rng, 3, 4)
        u = random_unitary(rng, 4)
        mixed_ops = np.einsum("jk,jab->kab", u, ch.ops)
        mixed = KrausChannel(mixed_ops)
        assert np.abs(
            transfer_from_kraus(ch).mat - transfer_from_kraus(mixed).mat
        ).max() <= 1e-10
        assert np.abs(
            choi_from_kraus(ch).mat - choi_from_kraus(mixed).mat
        ).max() <= 1e-10


def test_product_state_quadratic_form_is_the_fidelity():
    rng = np.random.default_rng(7)
    for _ in range(10):
        n = 3
        ch = random_kraus_channel(rng, n, 3)
        phi = rng.normal(size=n) + 1j * rng.normal(size=n)
        phi = phi / np.linalg.norm(phi)
        v = np.kron(phi, phi.conj())
        lhs = (v.conj() @ transfer_from_kraus(ch).mat @ v).real
        rho_out = sum(op @ np.outer(phi, phi.conj()) @ op.conj().T for op in ch.ops)
        rhs = (phi.conj() @ rho_out @ phi).real
        assert abs(lhs - rhs) <= 1e-10


def test_channel_set_is_convex():
    rng = np.random.default_rng(8)
    a = transfer_from_kraus(random_kraus_channel(rng, 2, 3)).mat
    b = transfer_from_kraus(random_kraus_channel(rng, 2, 2)).mat
    for w in (0.25, 0.5, 0.9):
        mix = w * a + (1 - w) * b
        assert check_tp(mix) <= 1e-12
        assert check_cp(mix) >= -1e-10
        TransferMatrix(mix)  # admission does not raise


# ---------------------------------------------------------------------------
# JSON round trips
# ---------------------------------------------------------------------------

def test_json_round_trip_all_forms(tmp_path):
    ch = bit_flip_channel(0.9, 1)
    forms = [ch, transfer_from_kraus(ch), choi_from_kraus(ch)]
    for obj in forms:
        data = json.loads(json.dumps(channel_to_json(obj)))
        back = channel_from_json(data)
        assert type(back) is type(obj)
        if isinstance(obj, KrausChannel):
            assert np.abs(back.ops - obj.ops).max() == 0.0
        else:
            assert np.abs(back.mat - obj.mat).max() == 0.0


def test_json_reader_validates():
    with pytest.raises(ValueError):
        channel_from_json({"dim": 2})
    with pytest.raises(ValueError):
        channel_from_json({"dim": 2, "transfer": [[1]]})
    # a non-trace-preserving Kraus payload is rejected on load
    bad = {"dim": 2, "kraus": [[[ [1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]]}
    with pytest.raises(ValueError, match="trace preserving"):
        channel_from_json(bad)
