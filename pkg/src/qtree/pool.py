"""Population-dynamics Monte Carlo for the collapse process.

A pool holds an empirical sample of smaller-eigenvalue values Z at one tree
time.  One generation: draw two parent Z values uniformly with replacement
from the frozen previous pool, give each a Haar-random eigenbasis (expectation
values are invariant under single-qubit rotations, so only Z needs storing),
Born-sample and apply a weak Kraus operator on each, couple them with a
freshly sampled entangling node, Born-sample the projective measurement on
the fresh-qubit output, and record the surviving qubit's Z.  Iterating to
time t approximates the distribution of Z_t; the arithmetic mean estimates
the order parameter and the geometric mean over the strictly positive
entries estimates its typical value.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import collapse
from .model import rng_stream

# Fixed vectorization slab: results are a pure function of (seed, theta index,
# t, slab index), so worker count and memory limits never change the output.
_SLAB = 1 << 15

_ZERO_FLOOR = 1e-300  # below this a Z counts as exactly zero in the log mean


@dataclass(frozen=True)
class Pool:
    """Empirical Z population at one tree time."""

    theta: float
    t: int
    values: np.ndarray

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class PoolCurves:
    """Order-parameter curves on a (theta, t) grid."""

    thetas: np.ndarray          # (n_theta,)
    ts: np.ndarray              # (t_max,), values 1..t_max
    z_mean: np.ndarray          # (n_theta, t_max)
    z_typ: np.ndarray           # (n_theta, t_max)
    se: np.ndarray              # (n_theta, t_max)
    pool_size: int


def pool_init(size: int, theta: float) -> Pool:
    """Time-zero pool: every leaf input is maximally mixed, so every Z is 1/2."""
    if size < 1:
        raise ValueError("pool size must be >= 1")
    return Pool(theta=float(theta), t=0, values=np.full(size, 0.5))


def _haar_unitary_t(col: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Transpose of the Haar unitary with first column ``col`` and a uniform
    relative column phase; shape (n, 2, 2)."""
    n = col.shape[0]
    u_t = np.empty((n, 2, 2), dtype=complex)
    u_t[:, 0, 0] = col[:, 0]
    u_t[:, 0, 1] = col[:, 1]
    u_t[:, 1, 0] = -col[:, 1].conj() * phase
    u_t[:, 1, 1] = col[:, 0].conj() * phase
    return u_t


def _propagated_basis(
    psi: np.ndarray, kraus_diag: np.ndarray, u_t: np.ndarray
) -> np.ndarray:
    """Columns [u^T K psi, u^T K psi_perp], shape (n, 2, 2), unnormalized."""
    n = psi.shape[0]
    basis = np.empty((n, 2, 2), dtype=complex)
    basis[:, :, 0] = psi
    basis[:, 0, 1] = -psi[:, 1].conj()
    basis[:, 1, 1] = psi[:, 0].conj()
    basis *= kraus_diag[:, :, None]
    return u_t @ basis


def _abs2(x: np.ndarray) -> np.ndarray:
    return x.real * x.real + x.imag * x.imag


def _factored_small_eigenvalue(
    a_t: np.ndarray, beta: np.ndarray,
    z1: np.ndarray, z2: np.ndarray,
    det_a: np.ndarray, det_b: np.ndarray,
) -> np.ndarray:
    """Normalized smaller eigenvalue of sum_ij w_i w_j chi_ij chi_ij^dag.

    chi_ij[p] = a_t[p, i] * beta[p, j] and the weights are (1-Z, Z) per
    factor.  The determinant is expanded over component pairs,
    det = sum_{v<u} w_v w_u |chi_v wedge chi_u|^2, whose terms are all
    nonnegative, so the result keeps full relative precision even when it is
    exponentially small (the naive 2x2 determinant loses everything below
    the 1e-16 cancellation floor).  ``det_a`` and ``det_b`` are the squared
    moduli of the two factor determinants, supplied by the caller in exactly
    factored form.
    """
    w1c, w1z = 1.0 - z1, z1
    w2c, w2z = 1.0 - z2, z2
    a_sq = _abs2(a_t)
    b_sq = _abs2(beta)
    alpha = w1c[:, None] * a_sq[:, :, 0] + w1z[:, None] * a_sq[:, :, 1]
    gamma = w2c[:, None] * b_sq[:, :, 0] + w2z[:, None] * b_sq[:, :, 1]
    tr = (alpha * gamma).sum(axis=1)

    pa = _abs2(a_t[:, 0, :] * a_t[:, 1, :])          # (n, i)
    pb = _abs2(beta[:, 0, :] * beta[:, 1, :])        # (n, j)
    da_pos = a_t[:, 0, 0] * a_t[:, 1, 1]
    da_neg = a_t[:, 0, 1] * a_t[:, 1, 0]
    db_pos = beta[:, 0, 0] * beta[:, 1, 1]
    db_neg = beta[:, 0, 1] * beta[:, 1, 0]
    x1 = _abs2(da_pos * db_pos - da_neg * db_neg)    # chi_00 wedge chi_11
    x2 = _abs2(da_pos * db_neg - da_neg * db_pos)    # chi_01 wedge chi_10
    det = (
        w1c * w1c * w2c * w2z * pa[:, 0] * det_b
        + w1c * w1z * w2c * w2c * det_a * pb[:, 0]
        + w1c * w1z * w2c * w2z * (x1 + x2)
        + w1c * w1z * w2z * w2z * det_a * pb[:, 1]
        + w1z * w1z * w2c * w2z * pa[:, 1] * det_b
    )
    tr = np.maximum(tr, 1e-300)
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    lam_big = np.maximum(tr / 2.0 + disc, 1e-300)
    return np.clip(det / (lam_big * tr), 0.0, 0.5)


def _step_values(values: np.ndarray, theta: float, rng: np.random.Generator) -> np.ndarray:
    """One synchronous generation, vectorized in fixed-size slabs.

    Each input is carried in eigen-decomposed form (two pure components with
    weights 1-Z and Z).  Writing the post-CNOT product components as
    a_i[p] * beta_j[p], the node output separates into a Hadamard product of
    two rank-2 2x2 matrices, so no 4x4 object is ever formed.  Two exact
    reductions are used: the rotation on the surviving qubit is dropped (it
    changes neither outcome probabilities nor the output eigenvalue), and
    the rotation on the measured qubit is absorbed into a Haar-random
    measurement basis.
    """
    kd = collapse.kraus_diagonals(theta)
    w1sq = kd[1] ** 2  # squared diagonal of the outcome-1 Kraus operator
    size = values.size
    out = np.empty(size)
    for lo in range(0, size, _SLAB):
        hi = min(lo + _SLAB, size)
        n = hi - lo
        idx = rng.integers(0, size, size=(2, n))
        z1, z2 = values[idx[0]], values[idx[1]]
        g = rng.standard_normal((n, 10, 2))
        cvars = g[:, :, 0] + 1j * g[:, :, 1]
        uniforms = rng.random((n, 5))

        def unit_rows(block: np.ndarray) -> np.ndarray:
            return block / np.sqrt((block.real**2 + block.imag**2).sum(axis=1))[:, None]

        a0 = unit_rows(cvars[:, 0:2])
        b0 = unit_rows(cvars[:, 2:4])
        col3 = unit_rows(cvars[:, 4:6])
        col4 = unit_rows(cvars[:, 6:8])
        phase3 = np.exp(2j * np.pi * uniforms[:, 0])
        phase4 = np.exp(2j * np.pi * uniforms[:, 1])
        u3t = _haar_unitary_t(col3, phase3)
        u4t = _haar_unitary_t(col4, phase4)
        w_meas = unit_rows(cvars[:, 8:10])  # Haar measurement basis on the fresh lineage

        # Weak outcomes: Born from the two inputs independently.
        pop_a = a0[:, 1].real ** 2 + a0[:, 1].imag ** 2
        rho11_a = (1.0 - z1) * pop_a + z1 * (1.0 - pop_a)
        m_r = (uniforms[:, 2] < w1sq[0] + (w1sq[1] - w1sq[0]) * rho11_a).astype(np.int64)
        pop_b = b0[:, 1].real ** 2 + b0[:, 1].imag ** 2
        rho11_b = (1.0 - z2) * pop_b + z2 * (1.0 - pop_b)
        m_s = (uniforms[:, 3] < w1sq[0] + (w1sq[1] - w1sq[0]) * rho11_b).astype(np.int64)

        a_t = _propagated_basis(a0, kd[m_r], u3t)   # (n, 2, 2) columns per component
        b_t = _propagated_basis(b0, kd[m_s], u4t)

        # beta^(m)_j[p] = <w_m| X^p |b_j>: CNOT + measurement collapsed into dots.
        wc = w_meas.conj()
        w2 = collapse.orthogonal_state(w_meas).conj()
        b0c, b1c = b_t[:, 0, :], b_t[:, 1, :]          # amplitude rows, columns = j
        beta = np.empty((n, 2, 2, 2), dtype=complex)   # [m, p, component j]
        beta[:, 0, 0, :] = wc[:, 0, None] * b0c + wc[:, 1, None] * b1c
        beta[:, 0, 1, :] = wc[:, 0, None] * b1c + wc[:, 1, None] * b0c
        beta[:, 1, 0, :] = w2[:, 0, None] * b0c + w2[:, 1, None] * b1c
        beta[:, 1, 1, :] = w2[:, 0, None] * b1c + w2[:, 1, None] * b0c

        wa = np.stack([1.0 - z1, z1], axis=1)
        wb = np.stack([1.0 - z2, z2], axis=1)
        alpha = ((a_t.real**2 + a_t.imag**2) * wa[:, None, :]).sum(axis=2)   # (n, p)
        gam = ((beta.real**2 + beta.imag**2) * wb[:, None, None, :]).sum(axis=3)  # (n, m, p)
        p_un = (gam * alpha[:, None, :]).sum(axis=2)                          # (n, m)
        m_p = (uniforms[:, 4] * (p_un[:, 0] + p_un[:, 1]) < p_un[:, 1]).astype(np.int64)

        beta_sel = beta[np.arange(n), m_p]             # (n, p, j)
        # Factor determinants exactly: det(u K basis) and its measured twin.
        kprod = kd[:, 0] * kd[:, 1]
        unit_a = (a0.real**2 + a0.imag**2).sum(axis=1)
        unit_b = (b0.real**2 + b0.imag**2).sum(axis=1)
        det_a_amp = phase3 * (col3.real**2 + col3.imag**2).sum(axis=1) * kprod[m_r] * unit_a
        mdet_c0 = np.where(m_p == 0, wc[:, 0], w2[:, 0])
        mdet_c1 = np.where(m_p == 0, wc[:, 1], w2[:, 1])
        mdet = mdet_c0 * mdet_c0 - mdet_c1 * mdet_c1
        det_b_amp = (mdet * phase4 * (col4.real**2 + col4.imag**2).sum(axis=1)
                     * kprod[m_s] * unit_b)
        out[lo:hi] = _factored_small_eigenvalue(
            a_t, beta_sel, z1, z2, _abs2(det_a_amp), _abs2(det_b_amp)
        )
    return out


def pool_step(pool: Pool, rng: np.random.Generator) -> Pool:
    """Advance the pool one tree time step."""
    return Pool(theta=pool.theta, t=pool.t + 1, values=_step_values(pool.values, pool.theta, rng))


def pool_statistics(pool: Pool) -> tuple[float, float, float]:
    """(arithmetic mean, geometric mean over positive entries, standard error).

    Entries at or below the double-precision floor count as zeros and are
    excluded from the geometric mean; an all-zero pool reports z_typ = 0.
    """
    v = pool.values
    z_mean = float(v.mean())
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    positive = v[v > _ZERO_FLOOR]
    z_typ = float(np.exp(np.log(positive).mean())) if positive.size else 0.0
    return z_mean, z_typ, se


def _run_one_theta(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta, theta_index, t_max, size, seed = args
    pool = pool_init(size, theta)
    z_mean = np.empty(t_max)
    z_typ = np.empty(t_max)
    se = np.empty(t_max)
    for t in range(1, t_max + 1):
        rng = rng_stream(seed, 0x9001, theta_index, t)
        pool = pool_step(pool, rng)
        z_mean[t - 1], z_typ[t - 1], se[t - 1] = pool_statistics(pool)
    return z_mean, z_typ, se


def default_workers() -> int:
    env = os.environ.get("QTREE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def pool_run(
    thetas: np.ndarray | list[float],
    t_max: int,
    size: int,
    seed: int,
    workers: int = 1,
) -> PoolCurves:
    """Evolve one pool per theta and collect curves for every t <= t_max.

    Streams are keyed by (seed, theta index, t), so the output is identical
    for any worker count.
    """
    thetas = np.asarray(thetas, dtype=float)
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    tasks = [(float(th), i, t_max, size, seed) for i, th in enumerate(thetas)]
    workers = max(1, int(workers))
    if workers == 1 or len(tasks) == 1:
        results = [_run_one_theta(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(_run_one_theta, tasks))
    z_mean = np.stack([r[0] for r in results])
    z_typ = np.stack([r[1] for r in results])
    se = np.stack([r[2] for r in results])
    return PoolCurves(
        thetas=thetas,
        ts=np.arange(1, t_max + 1),
        z_mean=z_mean,
        z_typ=z_typ,
        se=se,
        pool_size=int(size),
    )


def parse_theta_grid(spec: str) -> np.ndarray:
    """Parse 'start:stop:count' (inclusive endpoints) into a theta grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"theta grid '{spec}' is not 'start:stop:count'")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ValueError("theta grid count must be >= 1")
    return np.linspace(start, stop, count)


def curves_to_csv(curves: PoolCurves, config_line: str | None = None) -> str:
    lines = []
    if config_line:
        lines.append(f"# {config_line}")
    lines.append("theta,t,z_mean,z_typ,se,pool_size")
    for i, th in enumerate(curves.thetas):
        for j, t in enumerate(curves.ts):
            lines.append(
                f"{float(th)!r},{int(t)},{float(curves.z_mean[i, j])!r},"
                f"{float(curves.z_typ[i, j])!r},{float(curves.se[i, j])!r},"
                f"{curves.pool_size}"
            )
    return "\n".join(lines) + "\n"


def curves_from_csv(text: str) -> PoolCurves:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("theta,"):
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"curves row has {len(parts)} fields, expected 6: {line}")
        rows.append((float(parts[0]), int(parts[1]), float(parts[2]),
                     float(parts[3]), float(parts[4]), int(parts[5])))
    if not rows:
        raise ValueError("no data rows in curves input")
    thetas = sorted({r[0] for r in rows})
    ts = sorted({r[1] for r in rows})
    th_index = {th: i for i, th in enumerate(thetas)}
    t_index = {t: j for j, t in enumerate(ts)}
    shape = (len(thetas), len(ts))
    z_mean = np.full(shape, np.nan)
    z_typ = np.full(shape, np.nan)
    se = np.full(shape, np.nan)
    for th, t, zm, zt, s, _size in rows:
        z_mean[th_index[th], t_index[t]] = zm
        z_typ[th_index[th], t_index[t]] = zt
        se[th_index[th], t_index[t]] = s
    return PoolCurves(
        thetas=np.array(thetas),
        ts=np.array(ts),
        z_mean=z_mean,
        z_typ=z_typ,
        se=se,
        pool_size=rows[0][5],
    )
