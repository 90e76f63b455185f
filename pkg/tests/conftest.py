"""Shared helpers for the test suite."""

import numpy as np

from qrecovery.channels import KrausChannel


def random_kraus_channel(rng, n, m):
    """Exactly trace-preserving random channel from a Haar-ish isometry.

    A random (m*n, n) complex matrix is orthonormalized by QR; its n-column
    blocks are the Kraus operators, so sum E^+E = I holds to machine
    precision.
    """
    raw = rng.normal(size=(m * n, n)) + 1j * rng.normal(size=(m * n, n))
    q, _ = np.linalg.qr(raw)
    ops = q.reshape(m, n, n)
    return KrausChannel(ops)


def random_unitary(rng, n):
    raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(raw)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_code(rng, n, l):
    """Random orthonormal code basis via QR."""
    raw = rng.normal(size=(n, l)) + 1j * rng.normal(size=(n, l))
    q, _ = np.linalg.qr(raw)
    from qrecovery.codes import CodeSpace

    return CodeSpace(q[:, :l].T)
