"""Batched kernels for the leaves-to-root (collapse) node map.

One collapse node consumes two qubit states: apply the outcome-selected weak
Kraus operator to each, couple them through the reverse-time entangling
circuit, project the second (fresh-qubit lineage) output onto an outcome of
the computational basis, and keep the first qubit's conditional state.

Reversing time and conjugating every component of the forward node is the
same as transposing it, so the reverse entangler built from forward gates
(u1, u2, u3, u4) is

    G = (u1 x u2)^T  CNOT  (u3 x u4)^T.

With that convention the root output of the collapse process, fed from
maximally mixed leaf inputs, reproduces the transposed-POVM form of the
expansion-process probe state exactly (pinned by the brute-force oracle in
the test suite).

All kernels take a leading batch axis and use only O(1)-size dense algebra
per element.
"""
from __future__ import annotations

import numpy as np

MAXIMALLY_MIXED = 0.5 * np.eye(2, dtype=complex)

# CNOT @ M permutes rows (0, 1, 3, 2); M @ CNOT permutes columns likewise.
_CNOT_PERM = np.array([0, 1, 3, 2])


def haar_unitaries(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 2, 2) Haar unitaries via Gram-Schmidt on Ginibre matrices."""
    g = rng.standard_normal((n, 2, 2, 2))
    z = g[..., 0] + 1j * g[..., 1]
    c0 = z[:, :, 0]
    c0 = c0 / np.linalg.norm(c0, axis=1, keepdims=True)
    c1 = z[:, :, 1]
    c1 = c1 - np.sum(c0.conj() * c1, axis=1, keepdims=True) * c0
    c1 = c1 / np.linalg.norm(c1, axis=1, keepdims=True)
    return np.stack([c0, c1], axis=2)


def haar_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3) unit vectors uniform on the sphere."""
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def haar_pure_states(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 2) Haar-uniform qubit state vectors."""
    v = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def orthogonal_state(psi: np.ndarray) -> np.ndarray:
    """(n, 2) states orthogonal to psi (phase convention irrelevant to callers)."""
    out = np.empty_like(psi)
    out[:, 0] = -psi[:, 1].conj()
    out[:, 1] = psi[:, 0].conj()
    return out


def density_from_z(z: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """(n, 2, 2) states with smaller eigenvalue z and eigenbasis along direction."""
    r = 1.0 - 2.0 * z
    nx, ny, nz = direction[:, 0] * r, direction[:, 1] * r, direction[:, 2] * r
    rho = np.empty((z.shape[0], 2, 2), dtype=complex)
    rho[:, 0, 0] = 0.5 * (1.0 + nz)
    rho[:, 1, 1] = 0.5 * (1.0 - nz)
    rho[:, 0, 1] = 0.5 * (nx - 1j * ny)
    rho[:, 1, 0] = 0.5 * (nx + 1j * ny)
    return rho


def smaller_eigenvalues(rho: np.ndarray) -> np.ndarray:
    """Batched smaller eigenvalue of trace-1 Hermitian 2x2 matrices.

    Uses lam_small = det / lam_big, which stays accurate for near-pure states.
    """
    a = rho[..., 0, 0].real
    d = rho[..., 1, 1].real
    b = rho[..., 0, 1]
    tr = a + d
    det = a * d - (b.real * b.real + b.imag * b.imag)
    h = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    lam_big = np.maximum(tr / 2.0 + h, 1e-300)
    return np.clip(det / lam_big, 0.0, 0.5)


def bloch_batch(rho: np.ndarray) -> np.ndarray:
    """(..., 3) Bloch vectors of (..., 2, 2) states."""
    out = np.empty(rho.shape[:-2] + (3,))
    out[..., 0] = 2.0 * rho[..., 0, 1].real
    out[..., 1] = -2.0 * rho[..., 0, 1].imag
    out[..., 2] = (rho[..., 0, 0] - rho[..., 1, 1]).real
    return out


def kron22(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched Kronecker product of (..., 2, 2) blocks -> (..., 4, 4)."""
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(out.shape[:-4] + (4, 4))


def reverse_entangler(gates: np.ndarray) -> np.ndarray:
    """Reverse-time entangler (u1 x u2)^T CNOT (u3 x u4)^T, batched.

    ``gates`` has shape (..., 4, 2, 2) in forward slot order (u1, u2, u3, u4).
    """
    u1t = np.swapaxes(gates[..., 0, :, :], -1, -2)
    u2t = np.swapaxes(gates[..., 1, :, :], -1, -2)
    u3t = np.swapaxes(gates[..., 2, :, :], -1, -2)
    u4t = np.swapaxes(gates[..., 3, :, :], -1, -2)
    left = kron22(u1t, u2t)
    right = kron22(u3t, u4t)
    # CNOT between the factors = row permutation of the right factor.
    return left @ right[..., _CNOT_PERM, :]


def kraus_diagonals(theta: float) -> np.ndarray:
    """Shape (2, 2): [m] -> diagonal of the outcome-m Kraus operator."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    if abs(c) < 1e-15:
        c = 0.0  # exact projective limit (float cos(pi/2) is 6e-17, not 0)
    return np.array([[c, s], [s, c]])


def apply_weak_kraus(rho: np.ndarray, diag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply per-item diagonal Kraus operators to (n, 2, 2) states.

    ``diag`` has shape (n, 2).  Returns (unnormalized K rho K, trace weight).
    """
    out = rho * diag[:, :, None] * diag[:, None, :]
    p = (out[:, 0, 0] + out[:, 1, 1]).real
    return out, p


def weak_outcome_probabilities(rho: np.ndarray, theta: float) -> np.ndarray:
    """(n, 2) Born probabilities of the two weak outcomes on (n, 2, 2) states."""
    kd = kraus_diagonals(theta) ** 2
    pop1 = rho[:, 1, 1].real
    pop0 = rho[:, 0, 0].real
    p0 = kd[0, 0] * pop0 + kd[0, 1] * pop1
    p1 = kd[1, 0] * pop0 + kd[1, 1] * pop1
    return np.stack([p0, p1], axis=1)


def couple_and_project(
    sigma_in1: np.ndarray,
    sigma_in2: np.ndarray,
    entangler: np.ndarray,
    m_p: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Entangle two (possibly unnormalized) single-qubit states and project.

    Forms G (rho1 x rho2) G^dagger, projects the second qubit onto |m_p>, and
    returns the first qubit's unnormalized conditional state together with
    the projection weight (trace).
    """
    sigma = kron22(sigma_in1, sigma_in2)
    sigma = entangler @ sigma @ np.conj(np.swapaxes(entangler, -1, -2))
    n = sigma.shape[0]
    rows = 2 * np.arange(2)[None, :] + m_p[:, None]            # (n, 2)
    idx = np.arange(n)[:, None, None]
    out = sigma[idx, rows[:, :, None], rows[:, None, :]]       # (n, 2, 2)
    p = (out[:, 0, 0] + out[:, 1, 1]).real
    return out, p


def node_forced(
    rho1: np.ndarray,
    rho2: np.ndarray,
    theta: float,
    m_r: np.ndarray,
    m_s: np.ndarray,
    m_p: np.ndarray,
    entangler: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse-node map with all three outcomes forced.

    Returns (normalized output states (n, 2, 2), node weight = trace before
    normalization).  A weight of exactly zero marks an inconsistent record.
    """
    kd = kraus_diagonals(theta)
    a1, _ = apply_weak_kraus(rho1, kd[m_r])
    a2, _ = apply_weak_kraus(rho2, kd[m_s])
    out, p = couple_and_project(a1, a2, entangler, m_p)
    safe = np.maximum(p, 1e-300)
    return out / safe[:, None, None], p


def node_sampled(
    rho1: np.ndarray,
    rho2: np.ndarray,
    theta: float,
    entangler: np.ndarray,
    uniforms: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse-node map with Born-sampled outcomes.

    ``uniforms`` has shape (n, 3) and drives (m_r, m_s, m_p) in that order.
    Returns (normalized output states, outcomes (n, 3) int8).
    """
    n = rho1.shape[0]
    kd = kraus_diagonals(theta)

    p1 = weak_outcome_probabilities(rho1, theta)
    m_r = (uniforms[:, 0] < p1[:, 1]).astype(np.int8)
    a1, w1 = apply_weak_kraus(rho1, kd[m_r])
    a1 = a1 / w1[:, None, None]

    p2 = weak_outcome_probabilities(rho2, theta)
    m_s = (uniforms[:, 1] < p2[:, 1]).astype(np.int8)
    a2, w2 = apply_weak_kraus(rho2, kd[m_s])
    a2 = a2 / w2[:, None, None]

    # Projection probabilities of both outcomes from one coupled state.
    sigma = kron22(a1, a2)
    sigma = entangler @ sigma @ np.conj(np.swapaxes(entangler, -1, -2))
    diag = np.einsum("nii->ni", sigma).real
    p_mp1 = diag[:, 1] + diag[:, 3]
    m_p = (uniforms[:, 2] < p_mp1).astype(np.int8)

    rows = 2 * np.arange(2)[None, :] + m_p[:, None]
    idx = np.arange(n)[:, None, None]
    out = sigma[idx, rows[:, :, None], rows[:, None, :]]
    p = (out[:, 0, 0] + out[:, 1, 1]).real
    out = out / np.maximum(p, 1e-300)[:, None, None]
    outcomes = np.stack([m_r, m_s, m_p], axis=1)
    return out, outcomes
