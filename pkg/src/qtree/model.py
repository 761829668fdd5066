"""Canonical description of one tree-circuit realization and its record.

A depth-t tree has 2^t - 1 nodes indexed in BFS (heap) order: node k has
children 2k+1 (fed by the through output) and 2k+2 (fed by the fresh-qubit
output).  A measurement record holds 1 + 2(2^t - 1) bits: the root outcome
m0 first, then per node, in BFS order, the pair (m_r, m_s).  This layout
makes truncation to a shallower tree a pure prefix operation on both the
gate list and the record.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .qmath import NodeGates, haar_unitary

FORMAT_VERSION = 1

THETA_MIN = np.pi / 2
THETA_MAX = np.pi


class ParseError(ValueError):
    """Malformed instances/records input."""


def rng_stream(*key: int) -> np.random.Generator:
    """Independent generator for a (seed, namespace..., index...) path.

    SeedSequence hashing splits one 64-bit seed into non-overlapping streams,
    so results do not depend on scheduling or worker count.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) & (2**63 - 1) for k in key])))


def derive_seed(seed: int, *path: int) -> int:
    """Stable 63-bit sub-seed for a child object (e.g. one circuit id)."""
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), *[int(p) & (2**63 - 1) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & (2**63 - 1))


def n_nodes(t: int) -> int:
    return (1 << t) - 1


def record_length(t: int) -> int:
    return 1 + 2 * n_nodes(t)


def node_time_position(k: int, t: int) -> tuple[int, int]:
    """Map node id k to (time i, position p): k = 2^(i-1) - 1 + p."""
    if not 0 <= k < n_nodes(t):
        raise ValueError(f"node id {k} out of range for depth {t}")
    i = int(k + 1).bit_length()
    p = k - ((1 << (i - 1)) - 1)
    return i, p


def node_id(i: int, p: int, t: int) -> int:
    if not 1 <= i <= t:
        raise ValueError(f"time {i} out of range for depth {t}")
    if not 0 <= p < (1 << (i - 1)):
        raise ValueError(f"position {p} out of range at time {i}")
    return (1 << (i - 1)) - 1 + p


def children(k: int, t: int) -> tuple[int, int] | None:
    """(left, right) child ids, or None for nodes in the last layer."""
    i, _ = node_time_position(k, t)
    if i == t:
        return None
    return 2 * k + 1, 2 * k + 2


def parent(k: int, t: int) -> int | None:
    node_time_position(k, t)
    return None if k == 0 else (k - 1) // 2


def is_leaf(k: int, t: int) -> bool:
    return node_time_position(k, t)[0] == t


def record_slots(k: int) -> tuple[int, int]:
    """Record positions of node k's (m_r, m_s) pair."""
    return 1 + 2 * k, 2 + 2 * k


@dataclass(frozen=True)
class TreeInstance:
    """One circuit realization: depth, strength, and BFS-ordered node gates.

    ``gates`` has shape (2^t - 1, 4, 2, 2); slot order per node is
    (u1, u2, u3, u4).  ``seed`` is a provenance tag only.
    """

    t: int
    theta: float
    gates: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        if self.t < 1:
            raise ValueError(f"depth t={self.t} must be >= 1")
        if not (THETA_MIN - 1e-12 <= self.theta <= THETA_MAX + 1e-12):
            raise ValueError(f"theta={self.theta} outside [pi/2, pi]")
        if self.gates.shape != (n_nodes(self.t), 4, 2, 2):
            raise ValueError(
                f"gates shape {self.gates.shape} != {(n_nodes(self.t), 4, 2, 2)}"
            )

    @property
    def n_nodes(self) -> int:
        return n_nodes(self.t)

    def node(self, k: int) -> NodeGates:
        g = self.gates[k]
        return NodeGates(g[0], g[1], g[2], g[3])


@dataclass(frozen=True)
class MeasurementRecord:
    """Ordered outcome bits: m0 first, then (m_r, m_s) per node in BFS order."""

    bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits, dtype=np.int8)
        if arr.ndim != 1:
            raise ValueError("record bits must be one-dimensional")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("record bits must be 0 or 1")
        n_w = arr.size - 1
        n_pairs = n_w // 2
        if arr.size < 3 or n_w % 2 or (n_pairs + 1) & n_pairs:
            raise ValueError(
                f"record length {arr.size} is not 1 + 2(2^t - 1) for any t >= 1"
            )
        object.__setattr__(self, "bits", arr)

    @property
    def m0(self) -> int:
        return int(self.bits[0])

    @property
    def weak(self) -> np.ndarray:
        """The 2(2^t - 1) weak outcomes (record minus the root bit)."""
        return self.bits[1:]

    @property
    def t(self) -> int:
        n_pairs = (self.bits.size - 1) // 2
        t = (n_pairs + 1).bit_length() - 1
        if record_length(t) != self.bits.size:
            raise ValueError(f"record length {self.bits.size} is not 1 + 2(2^t - 1)")
        return t


def build_instance(t: int, theta: float, seed: int) -> TreeInstance:
    """Sample the 4(2^t - 1) Haar unitaries of one realization.

    Gates are drawn in BFS node order from a seed-derived stream, so the
    depth-t' build with the same seed reproduces the first 2^t' - 1 nodes
    exactly (the prefix property used for record truncation).
    """
    if t < 1:
        raise ValueError(f"depth t={t} must be >= 1")
    if not (THETA_MIN - 1e-12 <= theta <= THETA_MAX + 1e-12):
        raise ValueError(f"theta={theta} outside [pi/2, pi]")
    rng = rng_stream(seed, 0xA11CE)
    gates = haar_unitary(rng, size=4 * n_nodes(t)).reshape(n_nodes(t), 4, 2, 2)
    return TreeInstance(t=t, theta=float(theta), gates=gates, seed=int(seed))


def truncate(
    instance: TreeInstance, record: MeasurementRecord, t_prime: int
) -> tuple[TreeInstance, MeasurementRecord]:
    """Restrict a realization and its record to the depth-t' subtree prefix."""
    if not 1 <= t_prime <= instance.t:
        raise ValueError(f"t'={t_prime} outside [1, {instance.t}]")
    if record.bits.size != record_length(instance.t):
        raise ValueError("record does not belong to this instance")
    sub = TreeInstance(
        t=t_prime,
        theta=instance.theta,
        gates=instance.gates[: n_nodes(t_prime)].copy(),
        seed=instance.seed,
    )
    return sub, MeasurementRecord(record.bits[: record_length(t_prime)].copy())


# ---------------------------------------------------------------------------
# Serialization.  JSON with repr-exact floats round-trips doubles losslessly.
# ---------------------------------------------------------------------------

def _gate_to_floats(u: np.ndarray) -> list[float]:
    out: list[float] = []
    for row in range(2):
        for col in range(2):
            out.append(float(u[row, col].real))
            out.append(float(u[row, col].imag))
    return out


def _gate_from_floats(vals: list[float]) -> np.ndarray:
    if len(vals) != 8:
        raise ParseError(f"gate needs 8 floats, got {len(vals)}")
    v = [float(x) for x in vals]
    return np.array(
        [[v[0] + 1j * v[1], v[2] + 1j * v[3]],
         [v[4] + 1j * v[5], v[6] + 1j * v[7]]]
    )


def instances_to_json(instances: list[TreeInstance], seed: int) -> str:
    if not instances:
        raise ValueError("no instances to serialize")
    t, theta = instances[0].t, instances[0].theta
    for inst in instances:
        if inst.t != t or inst.theta != theta:
            raise ValueError("all instances in one file must share (t, theta)")
    doc = {
        "format_version": FORMAT_VERSION,
        "t": t,
        "theta": theta,
        "seed": int(seed),
        "circuits": [
            {
                "id": i,
                "gates": [[_gate_to_floats(inst.gates[k, j]) for j in range(4)]
                          for k in range(inst.n_nodes)],
            }
            for i, inst in enumerate(instances)
        ],
    }
    return json.dumps(doc)


def instances_from_json(text: str) -> tuple[list[TreeInstance], int]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in instances file: {exc}") from exc
    for key in ("format_version", "t", "theta", "seed", "circuits"):
        if key not in doc:
            raise ParseError(f"instances file missing field '{key}'")
    if doc["format_version"] != FORMAT_VERSION:
        raise ParseError(
            f"unsupported instances format_version {doc['format_version']} "
            f"(expected {FORMAT_VERSION})"
        )
    t, theta, seed = int(doc["t"]), float(doc["theta"]), int(doc["seed"])
    instances = []
    for entry in doc["circuits"]:
        for key in ("id", "gates"):
            if key not in entry:
                raise ParseError(f"circuit entry missing field '{key}'")
        if len(entry["gates"]) != n_nodes(t):
            raise ParseError(
                f"circuit {entry['id']}: expected {n_nodes(t)} node gates, "
                f"got {len(entry['gates'])}"
            )
        gates = np.empty((n_nodes(t), 4, 2, 2), dtype=complex)
        for k, node in enumerate(entry["gates"]):
            if len(node) != 4:
                raise ParseError(f"circuit {entry['id']} node {k}: expected 4 unitaries")
            for j in range(4):
                gates[k, j] = _gate_from_floats(node[j])
        instances.append(TreeInstance(t=t, theta=theta, gates=gates, seed=seed))
    return instances, seed


def save_instances(path: str, instances: list[TreeInstance], seed: int) -> None:
    with open(path, "w") as fh:
        fh.write(instances_to_json(instances, seed))
        fh.write("\n")


def load_instances(path: str) -> tuple[list[TreeInstance], int]:
    with open(path) as fh:
        return instances_from_json(fh.read())


def records_to_lines(
    records: list[tuple[int, int, MeasurementRecord]], header: dict | None = None
) -> str:
    """One JSON object per line: {circuit_id, shot, bits}."""
    lines = []
    if header is not None:
        lines.append(json.dumps({"format_version": FORMAT_VERSION, **header}))
    for circuit_id, shot, rec in records:
        lines.append(json.dumps(
            {"circuit_id": int(circuit_id), "shot": int(shot),
             "bits": [int(b) for b in rec.bits]}
        ))
    return "\n".join(lines) + "\n"


def records_from_lines(text: str) -> tuple[list[tuple[int, int, MeasurementRecord]], dict]:
    header: dict = {}
    out: list[tuple[int, int, MeasurementRecord]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"records line {lineno}: invalid JSON: {exc}") from exc
        if "format_version" in obj and "bits" not in obj:
            if obj["format_version"] != FORMAT_VERSION:
                raise ParseError(
                    f"records line {lineno}: unsupported format_version "
                    f"{obj['format_version']}"
                )
            header = obj
            continue
        for key in ("circuit_id", "shot", "bits"):
            if key not in obj:
                raise ParseError(f"records line {lineno}: missing field '{key}'")
        bits = obj["bits"]
        if any(b not in (0, 1) for b in bits):
            raise ParseError(f"records line {lineno}: bits must be 0 or 1")
        try:
            rec = MeasurementRecord(np.array(bits, dtype=np.int8))
        except ValueError as exc:
            raise ParseError(f"records line {lineno}: {exc}") from exc
        out.append((int(obj["circuit_id"]), int(obj["shot"]), rec))
    return out, header


def save_records(
    path: str, records: list[tuple[int, int, MeasurementRecord]], header: dict | None = None
) -> None:
    with open(path, "w") as fh:
        fh.write(records_to_lines(records, header))


def load_records(path: str) -> tuple[list[tuple[int, int, MeasurementRecord]], dict]:
    with open(path) as fh:
        return records_from_lines(fh.read())
