"""Reconstruct the probe state from a realization and its weak outcomes.

The decoder runs the collapse process: feed every node of the last layer
with maximally mixed inputs, apply the outcome-selected Kraus pair, couple
through the reverse-time entangler, project the fresh-qubit output onto |0>
(or a supplied projective outcome), renormalize, and pass the surviving
state up the tree.  The root output equals the expansion-process probe
state conditioned on the same weak outcomes; cost is one constant-size node
map per tree node.  No randomness is involved anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import collapse
from .model import MeasurementRecord, TreeInstance, n_nodes, record_length
from .qmath import PAULI_X, bloch

_PAULI_X_POWERS = (np.eye(2, dtype=complex), PAULI_X)


class InconsistentRecordError(ValueError):
    """A node projection had probability zero: record impossible for this tree."""


@dataclass(frozen=True)
class DecodeResult:
    """Probe-state reconstruction: density matrix, Bloch vector, smaller eigenvalue."""

    rho: np.ndarray
    n: np.ndarray
    z: float


def decode_batch(
    instance: TreeInstance,
    m_w: np.ndarray,
    m_p: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decode a batch of weak-outcome vectors for one instance.

    ``m_w`` has shape (batch, 2(2^t - 1)); optional ``m_p`` has shape
    (batch, 2^t - 1) of per-node projective outcomes (default all zero).
    Returns (rho (batch, 2, 2), bloch (batch, 3), z (batch,)).
    """
    t = instance.t
    nodes = n_nodes(t)
    m_w = np.asarray(m_w, dtype=np.int64)
    if m_w.ndim == 1:
        m_w = m_w[None, :]
    batch = m_w.shape[0]
    if m_w.shape[1] != 2 * nodes:
        raise ValueError(f"expected {2 * nodes} weak outcomes, got {m_w.shape[1]}")
    if m_p is None:
        m_p = np.zeros((batch, nodes), dtype=np.int64)
    else:
        m_p = np.asarray(m_p, dtype=np.int64)
        if m_p.ndim == 1:
            m_p = m_p[None, :]
        if m_p.shape != (batch, nodes):
            raise ValueError(f"expected projective outcomes of shape {(batch, nodes)}")

    entanglers = collapse.reverse_entangler(instance.gates)  # (nodes, 4, 4)
    processed = 0
    # States flowing out of the layer below, ordered by node id within the layer.
    below: np.ndarray | None = None
    for time in range(t, 0, -1):
        width = 1 << (time - 1)
        first = width - 1  # id of the leftmost node at this time
        ids = np.arange(first, first + width)
        if below is None:
            rho1 = np.broadcast_to(collapse.MAXIMALLY_MIXED, (batch * width, 2, 2))
            rho2 = rho1
        else:
            rho1 = below[:, 0::2].reshape(batch * width, 2, 2)
            rho2 = below[:, 1::2].reshape(batch * width, 2, 2)
        g = np.broadcast_to(entanglers[ids], (batch, width, 4, 4)).reshape(batch * width, 4, 4)
        mr = m_w[:, 2 * ids].reshape(batch * width)
        ms = m_w[:, 2 * ids + 1].reshape(batch * width)
        mp = m_p[:, ids].reshape(batch * width)
        kd = collapse.kraus_diagonals(instance.theta)
        a1, _ = collapse.apply_weak_kraus(np.ascontiguousarray(rho1), kd[mr])
        a2, _ = collapse.apply_weak_kraus(np.ascontiguousarray(rho2), kd[ms])
        out, p = collapse.couple_and_project(a1, a2, g, mp)
        if np.any(p < 1e-300):
            raise InconsistentRecordError(
                f"projection probability underflow at tree time {time}"
            )
        out = out / p[:, None, None]
        below = out.reshape(batch, width, 2, 2)
        processed += width
    assert processed == nodes
    decode_batch.last_node_count = processed  # instrumentation for the cost contract
    rho = below[:, 0]
    n_vec = collapse.bloch_batch(rho)
    z = collapse.smaller_eigenvalues(rho)
    return rho, n_vec, z


decode_batch.last_node_count = 0


def decode_bloch(
    instance: TreeInstance,
    m_w: np.ndarray,
    m_p: np.ndarray | None = None,
) -> DecodeResult:
    """Decode one weak-outcome vector (length 2(2^t - 1)) to the probe state."""
    rho, n_vec, z = decode_batch(
        instance,
        np.asarray(m_w)[None, :],
        None if m_p is None else np.asarray(m_p)[None, :],
    )
    return DecodeResult(rho=rho[0], n=n_vec[0], z=float(z[0]))


def decode_record(instance: TreeInstance, record: MeasurementRecord) -> DecodeResult:
    if record.bits.size != record_length(instance.t):
        raise ValueError("record does not belong to this instance")
    return decode_bloch(instance, record.weak)


def predict_sign(n: np.ndarray) -> int:
    """Sign of the z-component; the tie sign(0) := +1 is unbiased since m0 is fair."""
    return -1 if float(n[2]) < 0.0 else 1


def absorb_projective(instance: TreeInstance, m_p: np.ndarray) -> TreeInstance:
    """Fold per-node projective outcomes into the gate list.

    Projecting a node's fresh-qubit output onto |m> instead of |0> equals
    projecting onto |0> after replacing that node's u2 by u2 X^m.
    """
    m_p = np.asarray(m_p, dtype=np.int64)
    if m_p.shape != (instance.n_nodes,):
        raise ValueError(f"expected {instance.n_nodes} projective outcomes")
    gates = instance.gates.copy()
    for k in range(instance.n_nodes):
        if m_p[k]:
            gates[k, 1] = gates[k, 1] @ _PAULI_X_POWERS[1]
    return TreeInstance(t=instance.t, theta=instance.theta, gates=gates, seed=instance.seed)


def invariance_check(
    instance: TreeInstance,
    m_p: np.ndarray,
    m_w: np.ndarray,
    tol: float = 1e-12,
) -> bool:
    """Verify that absorbing projective outcomes into the gates leaves rho fixed."""
    direct = decode_bloch(instance, m_w, m_p=m_p)
    absorbed = decode_bloch(absorb_projective(instance, m_p), m_w)
    return bool(np.max(np.abs(direct.rho - absorbed.rho)) <= tol)
