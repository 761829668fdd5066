"""Dense 2x2 / 4x4 complex linear algebra for qubit-pair nodes.

Everything here is small, closed-form, and allocation-light: Haar sampling of
single-qubit unitaries, the weak-measurement Kraus pair, the CNOT-based
entangling circuit, eigen-analysis of qubit density matrices, and the Bloch
map.  All other modules build on these primitives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# Control on the first (top) qubit, basis order |q1 q2> -> index 2*q1 + q2.
CNOT = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]],
    dtype=complex,
)

THETA_MIN = np.pi / 2
THETA_MAX = np.pi


def haar_unitary(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Sample 2x2 unitaries from the Haar measure.

    Uses Gram-Schmidt orthonormalization of a complex Ginibre matrix, which
    yields the unique QR factorization with positive-real diagonal R and
    therefore an exactly Haar-distributed Q.

    Returns shape (2, 2) when ``size`` is None, else (size, 2, 2).
    """
    n = 1 if size is None else int(size)
    # One draw per matrix in stream order, so a prefix of matrices consumes a
    # prefix of the stream (build_instance relies on this for truncation).
    g = rng.standard_normal((n, 2, 2, 2))
    z = g[..., 0] + 1j * g[..., 1]
    c0 = z[:, :, 0]
    c0 = c0 / np.linalg.norm(c0, axis=1, keepdims=True)
    c1 = z[:, :, 1]
    c1 = c1 - np.sum(c0.conj() * c1, axis=1, keepdims=True) * c0
    c1 = c1 / np.linalg.norm(c1, axis=1, keepdims=True)
    u = np.stack([c0, c1], axis=2)
    return u[0] if size is None else u


@dataclass(frozen=True)
class NodeGates:
    """The four single-qubit unitaries dressing one CNOT node."""

    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u4: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.u1, self.u2, self.u3, self.u4])


@dataclass(frozen=True)
class KrausPair:
    """Weak-measurement Kraus operators at strength theta.

    k_m = sin(theta/2) I + [cos(theta/2) - sin(theta/2)] |m><m|, i.e.
    k0 = diag(cos(theta/2), sin(theta/2)) and k1 = diag(sin(theta/2), cos(theta/2)).
    theta = pi/2 is the identity channel; theta = pi is projective (and then
    outcome m projects onto |1-m>, per the formula above).
    """

    theta: float
    k0: np.ndarray
    k1: np.ndarray

    def stacked(self) -> np.ndarray:
        """Shape (2, 2, 2); index [m] selects the outcome-m operator."""
        return np.stack([self.k0, self.k1])


def kraus_pair(theta: float) -> KrausPair:
    """Build the weak-measurement Kraus pair; theta must lie in [pi/2, pi]."""
    if not (THETA_MIN - 1e-12 <= theta <= THETA_MAX + 1e-12):
        raise ValueError(f"measurement strength theta={theta} outside [pi/2, pi]")
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    if abs(c) < 1e-15:
        c = 0.0  # exact projective limit (float cos(pi/2) is 6e-17, not 0)
    k0 = np.array([[c, 0.0], [0.0, s]], dtype=complex)
    k1 = np.array([[s, 0.0], [0.0, c]], dtype=complex)
    return KrausPair(float(theta), k0, k1)


def entangling_unitary(gates: NodeGates) -> np.ndarray:
    """(u3 x u4) CNOT (u1 x u2) on (input qubit, fresh qubit)."""
    return np.kron(gates.u3, gates.u4) @ CNOT @ np.kron(gates.u1, gates.u2)


def eig2(rho: np.ndarray) -> tuple[float, np.ndarray]:
    """Closed-form eigendecomposition of a 2x2 density matrix.

    Returns (z, nu) with z the smaller eigenvalue and nu the unitary whose
    first column is the larger-eigenvalue eigenvector.  For the degenerate
    case z = 1/2 the computational basis is returned.
    """
    a = float(rho[0, 0].real)
    d = float(rho[1, 1].real)
    b = complex(rho[0, 1])
    tr = a + d
    det = a * d - (b.real * b.real + b.imag * b.imag)
    h = np.sqrt(max(tr * tr / 4.0 - det, 0.0))
    lam_big = tr / 2.0 + h
    z = det / lam_big if lam_big > 0.0 else 0.5  # stable small eigenvalue
    z = min(max(z, 0.0), 0.5)
    if h < 1e-15:
        return z, IDENTITY2.copy()
    # Eigenvector for lam_big from the better-conditioned row.
    if abs(b) < 1e-300:
        v = np.array([1.0, 0.0], dtype=complex) if a >= d else np.array([0.0, 1.0], dtype=complex)
    elif abs(lam_big - a) >= abs(lam_big - d):
        v = np.array([b, lam_big - a], dtype=complex)
    else:
        v = np.array([lam_big - d, np.conj(b)], dtype=complex)
    v = v / np.linalg.norm(v)
    w = np.array([-np.conj(v[1]), np.conj(v[0])], dtype=complex)
    return z, np.stack([v, w], axis=1)


def bloch(rho: np.ndarray) -> np.ndarray:
    """Bloch vector (Tr[sigma_x rho], Tr[sigma_y rho], Tr[sigma_z rho])."""
    nx = 2.0 * rho[0, 1].real
    ny = -2.0 * rho[0, 1].imag
    nz = (rho[0, 0] - rho[1, 1]).real
    return np.array([nx, ny, nz])


def rho_from_bloch(n: np.ndarray) -> np.ndarray:
    """Inverse Bloch map rho = (I + n . sigma) / 2."""
    nx, ny, nz = (float(v) for v in n)
    return 0.5 * np.array(
        [[1.0 + nz, nx - 1j * ny],
         [nx + 1j * ny, 1.0 - nz]],
        dtype=complex,
    )


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-sum(lam ln lam) in nats, with 0 ln 0 := 0."""
    z, _ = eig2(rho)
    out = 0.0
    for lam in (1.0 - z, z):
        if lam > 0.0:
            out -= lam * np.log(lam)
    return out


def is_unitary(u: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def is_density_matrix(rho: np.ndarray, tol: float = 1e-12) -> bool:
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        return False
    if abs(np.trace(rho).real - 1.0) > tol:
        return False
    z, _ = eig2(rho)
    # eig2 clamps to [0, 1/2]; re-derive the unclamped smaller eigenvalue.
    tr = float(np.trace(rho).real)
    det = float(np.linalg.det(rho).real)
    lam_small = tr / 2.0 - np.sqrt(max(tr * tr / 4.0 - det, 0.0))
    return lam_small >= -tol
