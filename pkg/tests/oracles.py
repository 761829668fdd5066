"""Independent reference implementations used only to check the package.

Everything here is written from first principles against the forward
(expansion) process: full statevector evolution with a real Bell pair,
exhaustive record enumeration through the subtree POVM recursion, and a
direct single-node Monte Carlo.  None of it reuses the package's collapse
kernels, so agreement is meaningful.
"""
from __future__ import annotations

import itertools

import numpy as np

from qtree.model import TreeInstance, n_nodes
from qtree.qmath import entangling_unitary, kraus_pair


def input_qubits(t: int, offset: int) -> list[int]:
    """Statevector wire of each node's input qubit; root wire = offset."""
    q = [offset] * n_nodes(t)
    for k in range(1, n_nodes(t)):
        p = (k - 1) // 2
        q[k] = q[p] if k % 2 else p + offset + 1
    return q


def _apply_gate(psi: np.ndarray, gate: np.ndarray, wires: tuple[int, ...]) -> np.ndarray:
    k = len(wires)
    psi = np.moveaxis(psi, wires, range(k))
    shape = psi.shape
    psi = (gate @ psi.reshape(2**k, -1)).reshape(shape)
    return np.moveaxis(psi, range(k), wires)


def brute_force_probe_state(instance: TreeInstance, m_w: np.ndarray) -> np.ndarray:
    """Probe reduced state conditioned on forced weak outcomes.

    Builds the Bell pair on (probe, root), runs every node's entangler and
    forced Kraus operators on the full (2^t + 1)-qubit pure state, and
    partial-traces down to the probe.
    """
    t = instance.t
    nq = (1 << t) + 1
    psi = np.zeros((2,) * nq, dtype=complex)
    psi[(0,) * nq] = 1.0 / np.sqrt(2.0)
    one = [0] * nq
    one[0] = one[1] = 1
    psi[tuple(one)] = 1.0 / np.sqrt(2.0)
    kp = kraus_pair(instance.theta)
    kraus = (kp.k0, kp.k1)
    q_in = input_qubits(t, offset=1)
    for k in range(instance.n_nodes):
        psi = _apply_gate(psi, entangling_unitary(instance.node(k)), (q_in[k], k + 2))
        psi = _apply_gate(psi, kraus[int(m_w[2 * k])], (q_in[k],))
        psi = _apply_gate(psi, kraus[int(m_w[2 * k + 1])], (k + 2,))
    flat = psi.reshape(2, -1)
    rho = flat @ flat.conj().T
    return rho / np.trace(rho)


def all_weak_records(t: int) -> np.ndarray:
    """(4^(2^t - 1), 2(2^t - 1)) array of every weak-outcome assignment."""
    n_bits = 2 * n_nodes(t)
    grid = np.array(list(itertools.product((0, 1), repeat=n_bits)), dtype=np.int8)
    return grid


def subtree_povms(instance: TreeInstance, m_w: np.ndarray) -> np.ndarray:
    """Whole-tree POVM elements E = T^dag T for a batch of weak records.

    ``m_w`` has shape (batch, 2(2^t - 1)); the recursion composes each
    node's forced operator N = (K_r x K_s) U (I x |0>) bottom-up:
    E_node = N^dag (E_left x E_right) N, with identity below the last layer.
    """
    t = instance.t
    batch = m_w.shape[0]
    kp = kraus_pair(instance.theta)
    kdiag = np.stack([np.diag(kp.k0).real, np.diag(kp.k1).real])
    eye = np.broadcast_to(np.eye(2, dtype=complex), (batch, 2, 2))
    e_by_node: dict[int, np.ndarray] = {}
    for k in range(instance.n_nodes - 1, -1, -1):
        u = entangling_unitary(instance.node(k))
        inj = u[:, [0, 2]]  # U (I x |0>)
        e_l = e_by_node.pop(2 * k + 1, eye)
        e_r = e_by_node.pop(2 * k + 2, eye)
        d_r = kdiag[m_w[:, 2 * k]]
        d_s = kdiag[m_w[:, 2 * k + 1]]
        w_l = e_l * d_r[:, :, None] * d_r[:, None, :]
        w_r = e_r * d_s[:, :, None] * d_s[:, None, :]
        w4 = np.einsum("nij,nkl->nikjl", w_l, w_r).reshape(batch, 4, 4)
        e_by_node[k] = np.einsum("ji,njk,kl->nil", inj.conj(), w4, inj)
    return e_by_node[0]


def enumerate_exact(instance: TreeInstance) -> dict[str, np.ndarray]:
    """Exact per-record quantities for every weak record of one instance.

    Returns probabilities p(M_w) = Tr E / 2 (probe marginalized), the
    conditional root-bit weights p(m0, M_w) = <m0|E|m0>/2, the probe state's
    smaller eigenvalue and Bloch-z component per record.  Eigenvalues come
    from numpy's Hermitian solver, not the package's closed forms.
    """
    records = all_weak_records(instance.t)
    e = subtree_povms(instance, records)
    tr = np.einsum("nii->n", e).real
    p_marginal = tr / 2.0
    p_m0 = np.stack([e[:, 0, 0].real / 2.0, e[:, 1, 1].real / 2.0], axis=1)
    evals = np.linalg.eigvalsh(e / np.maximum(tr, 1e-300)[:, None, None])
    z = evals[:, 0]
    n_z = (e[:, 0, 0] - e[:, 1, 1]).real / np.maximum(tr, 1e-300)
    return {
        "records": records,
        "p": p_marginal,
        "p_m0": p_m0,
        "z": np.clip(z, 0.0, 0.5),
        "n_z": n_z,
        "povm": e,
    }


def exact_mean_z(instance: TreeInstance) -> float:
    """Exact order parameter of one instance: sum_records p(M_w) Z(M_w)."""
    data = enumerate_exact(instance)
    return float(np.sum(data["p"] * data["z"]))


def single_node_z_samples(theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Direct Monte Carlo of the depth-1 tree's exact per-instance mean Z.

    For each sampled node, enumerate its four weak records exactly via the
    POVM recursion and Born-average Z; no pool machinery involved.
    """
    from qtree.model import build_instance

    out = np.empty(n)
    for i in range(n):
        inst = build_instance(1, theta, seed=int(rng.integers(0, 2**62)))
        out[i] = exact_mean_z(inst)
    return out


# ---------------------------------------------------------------------------
# Minimal OpenQASM 2.0 line grammar (independent of the exporter).
# ---------------------------------------------------------------------------

import re

_QASM_LINE_PATTERNS = [
    re.compile(r"^OPENQASM 2\.0;$"),
    re.compile(r'^include "[\w.]+";$'),
    re.compile(r"^qreg [a-z][\w]*\[\d+\];$"),
    re.compile(r"^creg [a-z][\w]*\[\d+\];$"),
    re.compile(r"^[a-z][\w]*(\((-?\d+(\.\d+)?([eE]-?\d+)?)(,-?\d+(\.\d+)?([eE]-?\d+)?)*\))? "
               r"[a-z][\w]*\[\d+\](,[a-z][\w]*\[\d+\])*;$"),
    re.compile(r"^measure [a-z][\w]*\[\d+\] -> [a-z][\w]*\[\d+\];$"),
    re.compile(r"^reset [a-z][\w]*\[\d+\];$"),
    re.compile(r"^barrier .*;$"),
]


def qasm_grammar_errors(text: str) -> list[str]:
    """Lines that do not match the OpenQASM 2.0 subset grammar."""
    bad = []
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("//")]
    if not lines or not _QASM_LINE_PATTERNS[0].match(lines[0]):
        bad.append("missing OPENQASM 2.0 header")
    for line in lines:
        if not any(p.match(line) for p in _QASM_LINE_PATTERNS):
            bad.append(line)
    return bad
