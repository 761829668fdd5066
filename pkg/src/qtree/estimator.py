"""Postselection-free order-parameter estimation.

Each shot contributes X = 1/2 - (-1)^m0 / sign(n_z), where n_z comes from
decoding the shot's weak outcomes.  Per circuit the shots are averaged; the
estimate is the mean of the circuit means and its standard error treats the
circuit means as independent.  Truncating the record and gate list yields
estimates for every smaller depth from the same data (which does correlate
the per-depth datasets; the error bars ignore that, matching the protocol).
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import sampler
from .decoder import decode_batch
from .model import (
    MeasurementRecord,
    TreeInstance,
    build_instance,
    derive_seed,
    record_length,
    rng_stream,
    truncate,
)

_CIRCUIT_NS = 0xC1
_SHOT_NS = 0x50

# Six measurement strengths spanning the weakest-to-projective range, used
# by the reference experiment configuration (evenly spaced over [pi/2, pi]).
EXPERIMENT_THETAS = tuple(np.pi / 2 + k * (np.pi / 2) / 5 for k in range(6))


@dataclass(frozen=True)
class EstimatorResult:
    """Z-hat with its standard error for one (t, theta) cell."""

    z_hat: float
    se: float
    n_circuits: int
    n_shots: int
    t: int
    theta: float


def x_statistic(m0: int, n_z: float) -> float:
    """1/2 - (-1)^m0 / sign(n_z); sign(0) := +1.  Values are -1/2 or 3/2."""
    sign = -1.0 if n_z < 0.0 else 1.0
    return 0.5 - (-1.0) ** int(m0) / sign


def estimate_Z(
    xs: list[list[float]] | list[np.ndarray], t: int, theta: float
) -> EstimatorResult:
    """Aggregate per-circuit X lists into the estimate and its standard error."""
    if not xs or any(len(row) == 0 for row in xs):
        raise ValueError("need at least one circuit with at least one shot")
    means = np.array([float(np.mean(row)) for row in xs])
    n_c = means.size
    z_hat = float(means.mean())
    if n_c == 1:
        se = 0.0
    else:
        se = float(np.sqrt(np.sum((means - z_hat) ** 2) / (n_c * (n_c - 1))))
    return EstimatorResult(
        z_hat=z_hat, se=se, n_circuits=n_c, n_shots=len(xs[0]), t=t, theta=float(theta)
    )


def simulate_records(
    t: int,
    theta: float,
    n_circuits: int,
    n_shots: int,
    seed: int,
    backend: str = "branch",
) -> tuple[list[TreeInstance], list[tuple[int, int, MeasurementRecord]]]:
    """Build instances and Born-sample records for every (circuit, shot).

    Shot j of circuit i is driven by the stream (seed, SHOT, i, j) alone, so
    identical parameters reproduce identical records for any scheduling.
    """
    if backend not in ("branch", "statevector"):
        raise ValueError(f"unknown backend '{backend}'")
    instances = [
        build_instance(t, theta, derive_seed(seed, _CIRCUIT_NS, i))
        for i in range(n_circuits)
    ]
    records: list[tuple[int, int, MeasurementRecord]] = []
    length = record_length(t)
    for i, inst in enumerate(instances):
        if backend == "branch":
            uniforms = np.stack([
                rng_stream(seed, _SHOT_NS, i, j).random(length) for j in range(n_shots)
            ])
            bits = sampler.sample_records_branch(inst, uniforms)
            records.extend((i, j, MeasurementRecord(bits[j])) for j in range(n_shots))
        else:
            for j in range(n_shots):
                rec = sampler.sample_record_statevector(inst, rng_stream(seed, _SHOT_NS, i, j))
                records.append((i, j, rec))
    return instances, records


def xs_by_depth(
    instances: list[TreeInstance],
    records: list[tuple[int, int, MeasurementRecord]],
    t_primes: list[int] | None = None,
) -> dict[int, list[list[float]]]:
    """Decode records at every requested truncation depth.

    Returns {t': per-circuit lists of X values}, decoding each circuit's
    shot batch in one vectorized pass per depth.
    """
    t = instances[0].t
    if t_primes is None:
        t_primes = list(range(1, t + 1))
    by_circuit: dict[int, list[MeasurementRecord]] = {}
    for cid, _, rec in sorted(records, key=lambda r: (r[0], r[1])):
        by_circuit.setdefault(cid, []).append(rec)
    out: dict[int, list[list[float]]] = {tp: [] for tp in t_primes}
    for cid in sorted(by_circuit):
        inst = instances[cid]
        recs = by_circuit[cid]
        m0 = np.array([r.m0 for r in recs])
        for tp in t_primes:
            sub_inst, _ = truncate(inst, recs[0], tp)
            m_w = np.stack([r.bits[1 : record_length(tp)] for r in recs])
            _, n_vec, _ = decode_batch(sub_inst, m_w)
            sign = np.where(n_vec[:, 2] < 0.0, -1.0, 1.0)
            x = 0.5 - (-1.0) ** m0 / sign
            out[tp].append([float(v) for v in x])
    return out


def _protocol_chunk(args) -> dict[int, list[list[float]]]:
    t, theta, seed, cid_lo, cid_hi, n_shots, backend = args
    instances = []
    records: list[tuple[int, int, MeasurementRecord]] = []
    length = record_length(t)
    for i in range(cid_lo, cid_hi):
        inst = build_instance(t, theta, derive_seed(seed, _CIRCUIT_NS, i))
        instances.append(inst)
        if backend == "branch":
            uniforms = np.stack([
                rng_stream(seed, _SHOT_NS, i, j).random(length) for j in range(n_shots)
            ])
            bits = sampler.sample_records_branch(inst, uniforms)
            records.extend(
                (i - cid_lo, j, MeasurementRecord(bits[j])) for j in range(n_shots)
            )
        else:
            records.extend(
                (i - cid_lo, j,
                 sampler.sample_record_statevector(inst, rng_stream(seed, _SHOT_NS, i, j)))
                for j in range(n_shots)
            )
    return xs_by_depth(instances, records)


def default_workers() -> int:
    env = os.environ.get("QTREE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_protocol(
    t: int,
    theta: float,
    n_circuits: int,
    n_shots: int,
    seed: int,
    backend: str = "branch",
    workers: int = 1,
) -> dict[int, EstimatorResult]:
    """Full protocol: build, sample, decode, aggregate, at every depth <= t.

    Results are keyed by truncation depth and independent of ``workers``
    because every random draw is tied to (seed, circuit id, shot).
    """
    if n_circuits < 1 or n_shots < 1:
        raise ValueError("need n_circuits >= 1 and n_shots >= 1")
    if backend not in ("branch", "statevector"):
        raise ValueError(f"unknown backend '{backend}'")
    workers = max(1, int(workers))
    chunk = max(1, (n_circuits + workers - 1) // workers)
    spans = [(lo, min(lo + chunk, n_circuits)) for lo in range(0, n_circuits, chunk)]
    tasks = [(t, theta, seed, lo, hi, n_shots, backend) for lo, hi in spans]
    if workers == 1 or len(tasks) == 1:
        parts = [_protocol_chunk(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_protocol_chunk, tasks))
    merged: dict[int, list[list[float]]] = {tp: [] for tp in range(1, t + 1)}
    for part in parts:  # parts arrive in span order: deterministic reduce
        for tp, rows in part.items():
            merged[tp].extend(rows)
    return {
        tp: estimate_Z(rows, tp, theta) for tp, rows in merged.items()
    }
