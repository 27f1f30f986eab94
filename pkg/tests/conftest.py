"""Shared oracles and small problem builders for the test suite.

The oracles here are deliberately written without the package's own
machinery: spin operators are spelled out with ``np.kron``, Lindblad
dynamics are integrated with a hand-rolled fourth-order Runge-Kutta
scheme, and random unitaries come from a QR decomposition.
"""

import numpy as np
import pytest

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def embed(op, qubit, n):
    """``op`` on ``qubit`` of an ``n``-qubit register, qubit 0 leftmost."""
    out = np.array([[1.0 + 0j]])
    for k in range(n):
        out = np.kron(out, op if k == qubit else I2)
    return out


def random_unitary(n, rng):
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / abs(d))


def random_hermitian(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def random_density(n, rng):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def lindblad_rhs(rho, H, Vs):
    out = -1j * (H @ rho - rho @ H)
    for V in Vs:
        Vd = V.conj().T
        out += V @ rho @ Vd - 0.5 * (Vd @ V @ rho + rho @ Vd @ V)
    return out


def rk4_lindblad(rho0, H, Vs, t, step=1e-4):
    """Integrate the Lindblad equation with classical RK4 at fixed step."""
    n = max(1, int(round(t / step)))
    h = t / n
    rho = np.array(rho0, dtype=complex)
    for _ in range(n):
        k1 = lindblad_rhs(rho, H, Vs)
        k2 = lindblad_rhs(rho + 0.5 * h * k1, H, Vs)
        k3 = lindblad_rhs(rho + 0.5 * h * k2, H, Vs)
        k4 = lindblad_rhs(rho + h * k3, H, Vs)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def pauli_coefficients(rho, n):
    """Coordinates on normalised Pauli products, computed from scratch."""
    singles = [I2, SX, SY, SZ]
    out = []
    for idx in np.ndindex(*(4,) * n):
        P = np.array([[1.0 + 0j]])
        for i in idx:
            P = np.kron(P, singles[i] / np.sqrt(2))
        out.append(np.trace(P @ rho))
    return np.array(out)


def rel_err(a, b, floor=1e-3):
    """Componentwise relative error with a floor relative to the largest entry."""
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.abs(b), floor * np.max(np.abs(b)))
    return np.max(np.abs(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Verdict lines from the acceptance suite, echoed in the terminal summary so
# they appear even when test output is captured.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[2].rstrip(":ab")), s.split()[2])):
            terminalreporter.write_line(line)
