"""Draw measurement records from the exact Born distribution of a tree circuit.

Two interchangeable backends produce identically distributed records:

* ``statevector`` keeps the full 2^t-qubit pure state and Born-samples each
  weak outcome in BFS firing order.  Memory is 2^(2^t) amplitudes, so depth
  is capped (default t <= 4).
* ``branch`` exploits the tree structure: it samples a node's two outcomes
  from the node's conditional two-qubit state, recurses into the left
  subtree, conditions the right input on the left subtree's realized POVM
  element, and recurses right.  Memory is O(t) constant-size matrices, so
  any depth is reachable.

The root bit m0 is a fair coin: preparing |m0> with probability 1/2 gives
the same record distribution as measuring the probe half of a Bell pair, and
drops one qubit.  Weak measurements are applied directly as Kraus updates;
the hardware ancilla decomposition lives in the circuits module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MeasurementRecord, TreeInstance, n_nodes, record_length
from .qmath import entangling_unitary, kraus_pair

DEFAULT_MAX_DEPTH = 4
HARD_MAX_DEPTH = 5


class CapacityError(ValueError):
    """Tree too deep for the statevector backend's memory guard."""


@dataclass(frozen=True)
class BranchSummary:
    """Realized-subtree POVM element on the subtree's input qubit.

    Hermitian, PSD, operator norm <= 1; the only object conditional sampling
    needs from an already-sampled subtree.
    """

    effective_povm: np.ndarray


def _check_depth(t: int, max_depth: int | None) -> None:
    cap = DEFAULT_MAX_DEPTH if max_depth is None else min(int(max_depth), HARD_MAX_DEPTH)
    if t > cap:
        raise CapacityError(
            f"statevector backend capped at t={cap} (2^{1 << cap} amplitudes); "
            f"got t={t}; use the branch backend"
        )


def _input_qubits(t: int) -> list[int]:
    """q_in per node: q_in(0)=0, q_in(2k+1)=q_in(k), q_in(2k+2)=k+1."""
    q = [0] * n_nodes(t)
    for k in range(1, n_nodes(t)):
        p = (k - 1) // 2
        q[k] = q[p] if k % 2 else p + 1
    return q


def _apply_two_qubit(state: np.ndarray, u4: np.ndarray, qa: int, qb: int, nq: int) -> np.ndarray:
    tens = state.reshape((2,) * nq)
    tens = np.moveaxis(tens, (qa, qb), (0, 1))
    shape = tens.shape
    tens = u4 @ tens.reshape(4, -1)
    tens = np.moveaxis(tens.reshape(shape), (0, 1), (qa, qb))
    return np.ascontiguousarray(tens).reshape(-1)


def _qubit_population(state: np.ndarray, q: int, nq: int) -> float:
    """P(qubit q = 1)."""
    tens = np.abs(state.reshape((2,) * nq)) ** 2
    axes = tuple(i for i in range(nq) if i != q)
    return float(tens.sum(axis=axes)[1])


def _apply_kraus(state: np.ndarray, diag: np.ndarray, q: int, nq: int) -> np.ndarray:
    tens = state.reshape((2,) * nq).copy()
    sl0 = [slice(None)] * nq
    sl0[q] = 0
    sl1 = [slice(None)] * nq
    sl1[q] = 1
    tens[tuple(sl0)] *= diag[0]
    tens[tuple(sl1)] *= diag[1]
    return tens.reshape(-1)


def _statevector_pass(
    instance: TreeInstance,
    forced_bits: np.ndarray | None,
    uniforms: np.ndarray | None,
    max_depth: int | None,
) -> tuple[np.ndarray, float]:
    """Shared statevector walk: sample bits (renormalizing) or force them (not).

    Returns (bits, probability); probability is the exact joint record weight
    in forced mode and the product of the chosen-outcome conditionals when
    sampling (identical quantities, accumulated differently).
    """
    t = instance.t
    _check_depth(t, max_depth)
    nq = 1 << t
    kp = kraus_pair(instance.theta)
    kdiag = np.array([[kp.k0[0, 0].real, kp.k0[1, 1].real],
                      [kp.k1[0, 0].real, kp.k1[1, 1].real]])
    sampling = forced_bits is None
    bits = np.zeros(record_length(t), dtype=np.int8) if sampling else forced_bits

    if sampling:
        bits[0] = 1 if uniforms[0] < 0.5 else 0
    state = np.zeros(1 << nq, dtype=complex)
    state[int(bits[0]) << (nq - 1)] = 1.0  # |m0 0 ... 0>, qubit 0 most significant
    prob = 0.5

    q_in = _input_qubits(t)
    for k in range(n_nodes(t)):
        u4 = entangling_unitary(instance.node(k))
        state = _apply_two_qubit(state, u4, q_in[k], k + 1, nq)
        for slot, q in ((1 + 2 * k, q_in[k]), (2 + 2 * k, k + 1)):
            # Forced mode leaves the state unnormalized; condition the marginal.
            norm2 = 1.0 if sampling else max(float(np.vdot(state, state).real), 1e-300)
            pop1 = _qubit_population(state, q, nq) / norm2
            p1 = kdiag[1, 0] ** 2 * (1.0 - pop1) + kdiag[1, 1] ** 2 * pop1
            if sampling:
                m = 1 if uniforms[slot] < p1 else 0
                bits[slot] = m
            else:
                m = int(bits[slot])
            p_m = p1 if m == 1 else 1.0 - p1
            state = _apply_kraus(state, kdiag[m], q, nq)
            if sampling:
                state /= np.sqrt(max(p_m, 1e-300))
            prob *= p_m
    if sampling:
        norm = float(np.vdot(state, state).real)
        assert abs(norm - 1.0) < 1e-10, f"statevector norm drifted to {norm}"
    return bits, prob


def sample_record_statevector(
    instance: TreeInstance,
    rng: np.random.Generator,
    max_depth: int | None = None,
) -> MeasurementRecord:
    """One Born-distributed record via the full statevector (t <= cap)."""
    uniforms = rng.random(record_length(instance.t))
    bits, _ = _statevector_pass(instance, None, uniforms, max_depth)
    return MeasurementRecord(bits)


def record_probability(
    instance: TreeInstance,
    record: MeasurementRecord,
    max_depth: int | None = None,
) -> float:
    """Exact joint probability of a full record, including the 1/2 for m0."""
    if record.bits.size != record_length(instance.t):
        raise ValueError("record does not belong to this instance")
    bits = record.bits.astype(np.int8).copy()
    _, prob = _statevector_pass(instance, bits, None, max_depth)
    return prob


# ---------------------------------------------------------------------------
# Branch backend: recursive conditional sampling, batched over shots.
# ---------------------------------------------------------------------------

def _branch_node(
    instance: TreeInstance,
    k: int,
    rho_in: np.ndarray,
    bits: np.ndarray,
    uniforms: np.ndarray | None,
    log_prob: np.ndarray,
    kdiag: np.ndarray,
) -> np.ndarray:
    """Sample (or force) node k and its subtree; return the realized POVM.

    ``rho_in`` is the (batch, 2, 2) conditional state of the node's input
    qubit.  Outcomes land in ``bits`` (batch, record_length); probabilities
    multiply into ``log_prob`` (batch,) as plain products in log space.
    Returns the subtree's effective POVM elements (batch, 2, 2).
    """
    batch = rho_in.shape[0]
    u4 = entangling_unitary(instance.node(k))
    # sigma = U (rho x |0><0|) U^dag, built from the 4x2 injection M = U (I x |0>).
    inj = u4[:, [0, 2]]  # columns with the fresh qubit in |0>
    sigma = np.einsum("ij,njk,lk->nil", inj, rho_in, inj.conj())

    sampling = uniforms is not None
    out_bits = np.empty((batch, 2), dtype=np.int8)
    qubit_bit = (np.array([0, 0, 1, 1]),   # qubit 1 occupies the major index
                 np.array([0, 1, 0, 1]))   # qubit 2 the minor index
    for pos in range(2):
        slot = 1 + 2 * k + pos
        bit_of_index = qubit_bit[pos]
        diag = np.einsum("nii->ni", sigma).real
        weights = (kdiag[1] ** 2)[bit_of_index]  # squared K_1 diagonal per basis index
        p1 = diag @ weights / np.maximum(diag.sum(axis=1), 1e-300)
        if sampling:
            m = (uniforms[:, slot] < p1).astype(np.int8)
            bits[:, slot] = m
        else:
            m = bits[:, slot].astype(np.int8)
        out_bits[:, pos] = m
        p_m = np.where(m == 1, p1, 1.0 - p1)
        log_prob += np.log(np.maximum(p_m, 1e-300))
        scale = kdiag[m][:, bit_of_index]
        sigma = sigma * scale[:, :, None] * scale[:, None, :]
        trn = np.einsum("nii->n", sigma).real
        sigma = sigma / np.maximum(trn, 1e-300)[:, None, None]

    kids = (2 * k + 1, 2 * k + 2)
    if kids[0] >= instance.n_nodes:
        e_left = np.broadcast_to(np.eye(2, dtype=complex), (batch, 2, 2))
        e_right = e_left
    else:
        rho_left = sigma.reshape(batch, 2, 2, 2, 2).trace(axis1=2, axis2=4)
        e_left = _branch_node(instance, kids[0], rho_left, bits, uniforms, log_prob, kdiag)
        # Condition qubit 2 on the left subtree's realized POVM element.
        sig5 = sigma.reshape(batch, 2, 2, 2, 2)
        rho_right = np.einsum("nae,necad->ncd", e_left, sig5)
        tr = np.einsum("ncc->n", rho_right).real
        rho_right = rho_right / np.maximum(tr, 1e-300)[:, None, None]
        e_right = _branch_node(instance, kids[1], rho_right, bits, uniforms, log_prob, kdiag)

    # E_k = M^dag (K_r E_L K_r x K_s E_R K_s) M with M = U (I x |0>).
    d_r = kdiag[out_bits[:, 0]]
    d_s = kdiag[out_bits[:, 1]]
    w_left = e_left * d_r[:, :, None] * d_r[:, None, :]
    w_right = e_right * d_s[:, :, None] * d_s[:, None, :]
    w4 = np.einsum("nij,nkl->nikjl", w_left, w_right).reshape(batch, 4, 4)
    return np.einsum("ji,njk,kl->nil", inj.conj(), w4, inj)


def _branch_pass(
    instance: TreeInstance,
    forced_bits: np.ndarray | None,
    uniforms: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched branch walk. Returns (bits (batch, L), joint probabilities)."""
    t = instance.t
    kp = kraus_pair(instance.theta)
    kdiag = np.array([[kp.k0[0, 0].real, kp.k0[1, 1].real],
                      [kp.k1[0, 0].real, kp.k1[1, 1].real]])
    sampling = forced_bits is None
    if sampling:
        batch = uniforms.shape[0]
        bits = np.zeros((batch, record_length(t)), dtype=np.int8)
        bits[:, 0] = (uniforms[:, 0] < 0.5).astype(np.int8)
    else:
        bits = np.atleast_2d(forced_bits).astype(np.int8)
        batch = bits.shape[0]
    log_prob = np.full(batch, np.log(0.5))
    basis = np.zeros((batch, 2), dtype=complex)
    basis[np.arange(batch), bits[:, 0]] = 1.0
    rho_root = np.einsum("ni,nj->nij", basis, basis.conj())
    _branch_node(instance, 0, rho_root, bits, uniforms, log_prob, kdiag)
    return bits, np.exp(log_prob)


def sample_record_branch(
    instance: TreeInstance, rng: np.random.Generator
) -> MeasurementRecord:
    """One Born-distributed record via recursive conditional sampling (any t)."""
    uniforms = rng.random((1, record_length(instance.t)))
    bits, _ = _branch_pass(instance, None, uniforms)
    return MeasurementRecord(bits[0])


def sample_records_branch(
    instance: TreeInstance, uniforms: np.ndarray
) -> np.ndarray:
    """Batch of records from pre-drawn per-bit uniforms (batch, record_length)."""
    if uniforms.shape[1] != record_length(instance.t):
        raise ValueError("uniforms second axis must equal the record length")
    bits, _ = _branch_pass(instance, None, uniforms)
    return bits


def record_probability_branch(
    instance: TreeInstance, record: MeasurementRecord
) -> float:
    """Exact joint record probability via the branch recursion (any t)."""
    _, prob = _branch_pass(instance, record.bits[None, :], None)
    return float(prob[0])


def subtree_povm(
    instance: TreeInstance, record: MeasurementRecord
) -> BranchSummary:
    """Realized whole-tree POVM element for a forced record (diagnostic)."""
    bits = record.bits[None, :].astype(np.int8)
    kp = kraus_pair(instance.theta)
    kdiag = np.array([[kp.k0[0, 0].real, kp.k0[1, 1].real],
                      [kp.k1[0, 0].real, kp.k1[1, 1].real]])
    log_prob = np.zeros(1)
    rho_root = np.array([[[0.5, 0], [0, 0.5]]], dtype=complex)
    e_root = _branch_node(instance, 0, rho_root, bits, None, log_prob, kdiag)
    return BranchSummary(effective_povm=e_root[0])
