"""Gate-level circuits mirroring the hardware realization of a tree instance.

A depth-t tree needs 2^t system qubits (root plus one fresh qubit per node)
and l reusable measurement ancillas: 2^t + l total.  The root qubit gets a
Hadamard and an immediate measurement (the fair-coin preparation of m0);
each node then applies its four dressed single-qubit gates around a CNOT and
weak-measures both outputs through an ancilla.  Two weak-measurement blocks
are supported:

* ``standard``: ancilla in |0>, R_Y(theta) on the ancilla, CNOT from the
  data qubit, measure.
* ``native``:   ancilla in |+>, ZZ(phi) with phi = pi/2 - theta, R_X(pi/2)
  on the ancilla, measure.

Both implement the same Kraus pair on the data qubit; their pre-measurement
states differ only by the constant global phase (1 - i)/sqrt(2).  Ancillas
are recycled round-robin with a reset before each reuse.  Circuits export to
OpenQASM 2.0 with the classical register in canonical record order.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .model import TreeInstance, n_nodes, record_length
from .qmath import CNOT, kraus_pair

NATIVE_BLOCK_PHASE = (1.0 - 1.0j) / math.sqrt(2.0)

_VARIANTS = ("standard", "native")


@dataclass(frozen=True)
class Op:
    """One circuit operation; ``clbit`` is set for measurements only."""

    gate: str
    params: tuple[float, ...]
    qubits: tuple[int, ...]
    clbit: int | None = None


@dataclass(frozen=True)
class GateCircuit:
    n_qubits: int
    n_clbits: int
    ops: tuple[Op, ...]
    meta: dict = field(default_factory=dict)


def _ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def _h() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)


def _rzz(phi: float) -> np.ndarray:
    e_m = np.exp(-1j * phi / 2.0)
    e_p = np.exp(1j * phi / 2.0)
    return np.diag([e_m, e_p, e_p, e_m]).astype(complex)


def weak_block_unitary(theta: float, variant: str) -> np.ndarray:
    """Pre-measurement joint unitary on (data, ancilla), ancilla prep included.

    The ancilla enters in |0>; the native variant's Hadamard produces the
    |+> preparation internally.
    """
    if variant == "standard":
        return CNOT @ np.kron(np.eye(2), _ry(theta))
    if variant == "native":
        phi = math.pi / 2.0 - theta
        return np.kron(np.eye(2), _rx(math.pi / 2.0)) @ _rzz(phi) @ np.kron(np.eye(2), _h())
    raise ValueError(f"unknown weak-measurement variant '{variant}'")


def kraus_from_block(theta: float, variant: str) -> np.ndarray:
    """Reconstruct the data-qubit Kraus pair by projecting the block's ancilla.

    Returns shape (2, 2, 2) indexed by outcome.  The native variant's fixed
    global phase (1 - i)/sqrt(2) is divided out so both variants reproduce
    the Kraus pair as operators.
    """
    block = weak_block_unitary(theta, variant)
    phase = NATIVE_BLOCK_PHASE if variant == "native" else 1.0
    out = np.empty((2, 2, 2), dtype=complex)
    for m in (0, 1):
        # <m|_anc block |0>_anc as an operator on the data qubit.
        out[m] = block.reshape(2, 2, 2, 2)[:, m, :, 0] / phase
    return out


def verify_variant_equivalence(
    theta: float, trials: int, rng: np.random.Generator
) -> tuple[float, complex]:
    """Compare both blocks on random two-qubit pure inputs (ancilla in |0>).

    Returns (max infidelity, mean extracted phase); the phase should be the
    constant (1 - i)/sqrt(2).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    u_std = weak_block_unitary(theta, "standard")
    u_nat = weak_block_unitary(theta, "native")
    # Blocks act on (data, ancilla); a bystander qubit rides along in front.
    big_std = np.kron(np.eye(2), u_std)
    big_nat = np.kron(np.eye(2), u_nat)
    worst = 0.0
    phases = []
    for _ in range(trials):
        psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        psi /= np.linalg.norm(psi)
        full = np.kron(psi.reshape(2, 2), np.array([1.0, 0.0])).reshape(8)
        out_std = big_std @ full
        out_nat = big_nat @ full
        overlap = np.vdot(out_std, out_nat)
        worst = max(worst, abs(1.0 - abs(overlap) ** 2))
        phases.append(overlap)
    return worst, complex(np.mean(phases))


def u3_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Euler angles (theta, phi, lam) with u = e^{i alpha} u3(theta, phi, lam)."""
    a00, a10 = abs(u[0, 0]), abs(u[1, 0])
    theta = 2.0 * math.atan2(a10, a00)
    if a10 <= 1e-12:  # diagonal: only phi + lam is defined
        lam = float(np.angle(u[1, 1]) - np.angle(u[0, 0]))
        return theta, 0.0, _wrap(lam)
    if a00 <= 1e-12:  # antidiagonal: global phase free, pick alpha = 0
        return theta, _wrap(float(np.angle(u[1, 0]))), _wrap(float(np.angle(-u[0, 1])))
    ref = np.angle(u[0, 0])
    phi = float(np.angle(u[1, 0]) - ref)
    lam = float(np.angle(-u[0, 1]) - ref)
    return theta, _wrap(phi), _wrap(lam)


def _wrap(angle: float) -> float:
    return float((angle + math.pi) % (2.0 * math.pi) - math.pi)


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array(
        [[c, -np.exp(1j * lam) * s],
         [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]],
        dtype=complex,
    )


def build_gate_circuit(
    instance: TreeInstance, l: int, variant: str = "native"
) -> GateCircuit:
    """Assemble the full measured circuit for one tree realization.

    Nodes fire in BFS order (increasing time, left to right); the weak block
    on the through output precedes the one on the fresh output, matching the
    record layout.  Ancillas are taken round-robin from a pool of ``l`` and
    reset before every reuse.
    """
    if l < 1:
        raise ValueError("need at least one measurement ancilla")
    if variant not in _VARIANTS:
        raise ValueError(f"unknown weak-measurement variant '{variant}'")
    t = instance.t
    n_sys = 1 << t
    theta = instance.theta
    phi = math.pi / 2.0 - theta
    ops: list[Op] = []
    used = [False] * l  # ancilla needs a reset once it has been measured
    next_anc = 0

    def weak_block(data_q: int, clbit: int) -> None:
        nonlocal next_anc
        anc = n_sys + next_anc
        idx = next_anc
        next_anc = (next_anc + 1) % l
        if used[idx]:
            ops.append(Op("reset", (), (anc,)))
        used[idx] = True
        if variant == "standard":
            ops.append(Op("ry", (theta,), (anc,)))
            ops.append(Op("cx", (), (data_q, anc)))
        else:
            ops.append(Op("h", (), (anc,)))
            ops.append(Op("rzz", (phi,), (data_q, anc)))
            ops.append(Op("rx", (math.pi / 2.0,), (anc,)))
        ops.append(Op("measure", (), (anc,), clbit))

    ops.append(Op("h", (), (0,)))
    ops.append(Op("measure", (), (0,), 0))

    q_in = [0] * n_nodes(t)
    for k in range(1, n_nodes(t)):
        p = (k - 1) // 2
        q_in[k] = q_in[p] if k % 2 else p + 1
    for k in range(n_nodes(t)):
        g = instance.gates[k]
        fresh = k + 1
        ops.append(Op("u3", u3_angles(g[0]), (q_in[k],)))
        ops.append(Op("u3", u3_angles(g[1]), (fresh,)))
        ops.append(Op("cx", (), (q_in[k], fresh)))
        ops.append(Op("u3", u3_angles(g[2]), (q_in[k],)))
        ops.append(Op("u3", u3_angles(g[3]), (fresh,)))
        weak_block(q_in[k], 1 + 2 * k)
        weak_block(fresh, 2 + 2 * k)

    return GateCircuit(
        n_qubits=n_sys + l,
        n_clbits=record_length(t),
        ops=tuple(ops),
        meta={
            "t": t,
            "theta": theta,
            "seed": instance.seed,
            "variant": variant,
            "l": l,
        },
    )


def validate_schedule(circuit: GateCircuit) -> None:
    """Static check: no measurement ancilla is reused without a reset.

    The root qubit's coin-flip measurement feeds the tree on purpose, so
    only the ancilla pool (the qubits above the 2^t system qubits) must obey
    measure -> reset -> reuse ordering.
    """
    n_sys = (circuit.n_clbits + 1) // 2  # record has 1 + 2(n_sys - 1) bits
    measured: set[int] = set()
    for op in circuit.ops:
        for q in op.qubits:
            if q < n_sys:
                continue
            if op.gate == "reset":
                measured.discard(q)
            elif q in measured:
                raise ValueError(
                    f"ancilla {q} used by '{op.gate}' after measurement without reset"
                )
        if op.gate == "measure" and op.qubits[0] >= n_sys:
            measured.add(op.qubits[0])


_QASM_FLOAT = "{:.17g}"


def export_qasm(circuit: GateCircuit) -> str:
    """OpenQASM 2.0 text; classical bit order equals the record order."""
    meta = circuit.meta
    lines = [
        "// dynamical-tree circuit "
        f"t={meta.get('t')} theta={meta.get('theta')!r} seed={meta.get('seed')} "
        f"variant={meta.get('variant')} l={meta.get('l')}",
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        f"qreg q[{circuit.n_qubits}];",
        f"creg m[{circuit.n_clbits}];",
    ]
    for op in circuit.ops:
        if op.gate == "measure":
            lines.append(f"measure q[{op.qubits[0]}] -> m[{op.clbit}];")
        elif op.gate == "reset":
            lines.append(f"reset q[{op.qubits[0]}];")
        elif op.params:
            args = ",".join(_QASM_FLOAT.format(p) for p in op.params)
            qs = ",".join(f"q[{q}]" for q in op.qubits)
            lines.append(f"{op.gate}({args}) {qs};")
        else:
            qs = ",".join(f"q[{q}]" for q in op.qubits)
            lines.append(f"{op.gate} {qs};")
    return "\n".join(lines) + "\n"


_META_RE = re.compile(
    r"//\s*dynamical-tree circuit t=(\S+) theta=(\S+) seed=(\S+) variant=(\S+) l=(\S+)"
)
_OP_RE = re.compile(
    r"^(?P<gate>[a-z][a-z0-9]*)\s*(?:\((?P<params>[^)]*)\))?\s*(?P<qubits>q\[\d+\](?:\s*,\s*q\[\d+\])*)\s*;$"
)
_MEASURE_RE = re.compile(r"^measure\s+q\[(\d+)\]\s*->\s*m\[(\d+)\]\s*;$")
_QREG_RE = re.compile(r"^qreg\s+q\[(\d+)\]\s*;$")
_CREG_RE = re.compile(r"^creg\s+m\[(\d+)\]\s*;$")


def import_qasm(text: str) -> GateCircuit:
    """Parse circuits produced by export_qasm back into op lists."""
    meta: dict = {}
    n_qubits = n_clbits = None
    ops: list[Op] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("//"):
            m = _META_RE.match(line)
            if m:
                meta = {
                    "t": int(m.group(1)),
                    "theta": float(m.group(2)),
                    "seed": int(m.group(3)),
                    "variant": m.group(4),
                    "l": int(m.group(5)),
                }
            continue
        if line.startswith("OPENQASM") or line.startswith("include"):
            continue
        m = _QREG_RE.match(line)
        if m:
            n_qubits = int(m.group(1))
            continue
        m = _CREG_RE.match(line)
        if m:
            n_clbits = int(m.group(1))
            continue
        m = _MEASURE_RE.match(line)
        if m:
            ops.append(Op("measure", (), (int(m.group(1)),), int(m.group(2))))
            continue
        m = _OP_RE.match(line)
        if not m:
            raise ValueError(f"cannot parse QASM line: {line}")
        params = tuple(
            float(p) for p in m.group("params").split(",")
        ) if m.group("params") else ()
        qubits = tuple(int(q) for q in re.findall(r"q\[(\d+)\]", m.group("qubits")))
        ops.append(Op(m.group("gate"), params, qubits))
    if n_qubits is None or n_clbits is None:
        raise ValueError("QASM text missing qreg/creg declarations")
    return GateCircuit(n_qubits=n_qubits, n_clbits=n_clbits, ops=tuple(ops), meta=meta)


def qasm_filename(seed: int, t: int, theta: float) -> str:
    return f"{seed}_{t}_{round(theta * 1000)}.qasm"


def two_qubit_gate_count(circuit: GateCircuit) -> int:
    return sum(1 for op in circuit.ops if op.gate in ("cx", "rzz"))


def reconstruct_kraus_check(theta: float) -> float:
    """Largest deviation of either block's reconstructed Kraus pair."""
    kp = kraus_pair(theta)
    target = kp.stacked()
    worst = 0.0
    for variant in _VARIANTS:
        got = kraus_from_block(theta, variant)
        worst = max(worst, float(np.max(np.abs(got - target))))
    return worst
