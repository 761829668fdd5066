"""Linearized-recursion analysis: node coefficients, front velocity, theta_c.

Near the transition only the linear response of a collapse node matters:
writing the output eigenvalue as Z_out = A1 Z' + A2 Z'' + O(Z^2), the
coefficients are extracted numerically per sampled node as one-sided finite
differences Z_out(eps, 0)/eps and Z_out(0, eps)/eps, with the node's
outcomes Born-sampled once at the pure-input baseline (where Z_out is
exactly zero) and then frozen.  The traveling-front velocity of ln Z^typ is

    v(theta, lam) = ln E[A1^lam + A2^lam] / lam,

and the critical strength solves v = 0 at the stationary lam = 1, i.e.
E[A1 + A2] = 1.  Monte Carlo evaluations share random numbers across theta
so the bisection sees a smooth, monotone function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import collapse
from .model import rng_stream
from .qmath import NodeGates, haar_unitary

THETA_MIN = np.pi / 2
THETA_MAX = np.pi

# Critical measurement strength: root of E[A1 + A2] = 1 (see
# find_critical_point, which reproduces it to Monte Carlo accuracy).
THETA_C = 2.2142

_CHUNK = 1 << 16
_A_NS = 0x0A


@dataclass(frozen=True)
class LinearCoefficients:
    """One node's sampled linear-response coefficients and their context."""

    a1: float
    a2: float
    outcomes: tuple[int, int, int]
    gates: NodeGates


@dataclass(frozen=True)
class VelocityEstimate:
    theta: float
    lam: float
    v: float
    mc_error: float
    degenerate: bool = False


@dataclass(frozen=True)
class CriticalPointResult:
    theta_c: float
    ci_halfwidth: float
    n_samples: int


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual: float


def _check_theta(theta: float) -> None:
    if not (THETA_MIN - 1e-12 <= theta <= THETA_MAX + 1e-12):
        raise ValueError(f"theta={theta} outside [pi/2, pi]")


def _mixture_z(norm1_sq: np.ndarray, norm2_sq: np.ndarray,
               cross_sq: np.ndarray, eps: float) -> np.ndarray:
    """Smaller eigenvalue of (1-eps) chi1 chi1^dag + eps chi2 chi2^dag, normalized.

    Only the two squared norms and the squared cross amplitude
    |chi1[0] chi2[1] - chi1[1] chi2[0]|^2 enter.
    """
    tr = (1.0 - eps) * norm1_sq + eps * norm2_sq
    det = eps * (1.0 - eps) * cross_sq
    tr = np.maximum(tr, 1e-300)
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    lam_big = np.maximum(tr / 2.0 + disc, 1e-300)
    return det / (lam_big * tr)


def _sample_A_batch(
    theta: float, n: int, rng: np.random.Generator, eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draw of n (A1, A2) pairs.

    Uses the same factorized node map as the pool: post-CNOT components
    separate as a_i[p] * beta_j[p], the rotation on the surviving qubit is
    dropped, and the rotation on the measured qubit becomes a Haar-random
    measurement basis.  Baseline outcomes are Born-sampled from the pure
    inputs; the two perturbed evaluations reuse them.
    """
    kd = collapse.kraus_diagonals(theta)
    w1sq = kd[1] ** 2
    g = rng.standard_normal((n, 10, 2))
    cvars = g[:, :, 0] + 1j * g[:, :, 1]
    uniforms = rng.random((n, 5))

    def unit_rows(block: np.ndarray) -> np.ndarray:
        return block / np.sqrt((block.real**2 + block.imag**2).sum(axis=1))[:, None]

    phi1 = unit_rows(cvars[:, 0:2])
    phi2 = unit_rows(cvars[:, 2:4])
    col3 = unit_rows(cvars[:, 4:6])
    col4 = unit_rows(cvars[:, 6:8])
    phase3 = np.exp(2j * np.pi * uniforms[:, 0])
    phase4 = np.exp(2j * np.pi * uniforms[:, 1])
    u3t = _haar_t(col3, phase3)
    u4t = _haar_t(col4, phase4)
    w_meas = unit_rows(cvars[:, 8:10])

    # Baseline Born sampling at pure inputs.
    pop1 = phi1[:, 1].real ** 2 + phi1[:, 1].imag ** 2
    m_r = (uniforms[:, 2] < w1sq[0] + (w1sq[1] - w1sq[0]) * pop1).astype(np.int64)
    pop2 = phi2[:, 1].real ** 2 + phi2[:, 1].imag ** 2
    m_s = (uniforms[:, 3] < w1sq[0] + (w1sq[1] - w1sq[0]) * pop2).astype(np.int64)

    a_t = _propagate_pair(phi1, kd[m_r], u3t)   # (n, p, component i)
    b_t = _propagate_pair(phi2, kd[m_s], u4t)

    wc0 = w_meas.conj()
    wc1 = collapse.orthogonal_state(w_meas).conj()
    b0c, b1c = b_t[:, 0, :], b_t[:, 1, :]
    beta = np.empty((n, 2, 2, 2), dtype=complex)   # [m, p, component j]
    beta[:, 0, 0, :] = wc0[:, 0, None] * b0c + wc0[:, 1, None] * b1c
    beta[:, 0, 1, :] = wc0[:, 0, None] * b1c + wc0[:, 1, None] * b0c
    beta[:, 1, 0, :] = wc1[:, 0, None] * b0c + wc1[:, 1, None] * b1c
    beta[:, 1, 1, :] = wc1[:, 0, None] * b1c + wc1[:, 1, None] * b0c

    # Baseline projective Born with the pure components (i = j = 0).
    amp_a0 = a_t[:, :, 0]
    w_p = np.einsum("np,nmp->nm", np.abs(amp_a0) ** 2, np.abs(beta[:, :, :, 0]) ** 2)
    m_p = (uniforms[:, 4] * (w_p[:, 0] + w_p[:, 1]) < w_p[:, 1]).astype(np.int64)
    beta_sel = beta[np.arange(n), m_p]             # (n, p, j)

    # chi_ij[p] = a_i[p] beta_j[p]; norms and cross terms factorize, and the
    # 2x2 determinants factor exactly through the construction, e.g.
    # det(u K B) = det(u) det(K) det(B), so the projective limit is exact.
    a_sq = a_t.real**2 + a_t.imag**2               # (n, p, i)
    beta_sq = beta_sel.real**2 + beta_sel.imag**2  # (n, p, j)
    norm_11 = (a_sq[:, :, 0] * beta_sq[:, :, 0]).sum(axis=1)
    norm_21 = (a_sq[:, :, 1] * beta_sq[:, :, 0]).sum(axis=1)
    norm_12 = (a_sq[:, :, 0] * beta_sq[:, :, 1]).sum(axis=1)
    kprod = kd[:, 0] * kd[:, 1]
    det_a = _haar_t_det(col3, phase3) * kprod[m_r] * _basis_det(phi1)
    det_b = (_measurement_det(w_meas, m_p) * _haar_t_det(col4, phase4)
             * kprod[m_s] * _basis_det(phi2))
    prod_b = beta_sel[:, 0, 0] * beta_sel[:, 1, 0]
    prod_a = a_t[:, 0, 0] * a_t[:, 1, 0]
    cross_1 = (det_a.real**2 + det_a.imag**2) * (prod_b.real**2 + prod_b.imag**2)
    cross_2 = (prod_a.real**2 + prod_a.imag**2) * (det_b.real**2 + det_b.imag**2)

    a1 = _mixture_z(norm_11, norm_21, cross_1, eps) / eps
    a2 = _mixture_z(norm_11, norm_12, cross_2, eps) / eps
    return a1, a2


def _haar_t(col: np.ndarray, phase: np.ndarray) -> np.ndarray:
    n = col.shape[0]
    u_t = np.empty((n, 2, 2), dtype=complex)
    u_t[:, 0, 0] = col[:, 0]
    u_t[:, 0, 1] = col[:, 1]
    u_t[:, 1, 0] = -col[:, 1].conj() * phase
    u_t[:, 1, 1] = col[:, 0].conj() * phase
    return u_t


def _haar_t_det(col: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """det of _haar_t(col, phase): phase * |col|^2."""
    return phase * (col.real**2 + col.imag**2).sum(axis=1)


def _basis_det(psi: np.ndarray) -> np.ndarray:
    """det of the [psi, psi_perp] eigenbasis: |psi|^2."""
    return (psi.real**2 + psi.imag**2).sum(axis=1)


def _measurement_det(w_meas: np.ndarray, m_p: np.ndarray) -> np.ndarray:
    """det of the bra matrix [<w_m| ; <w_m| X] for the selected outcome."""
    c0 = np.where(m_p == 0, w_meas[:, 0].conj(), -w_meas[:, 1])
    c1 = np.where(m_p == 0, w_meas[:, 1].conj(), w_meas[:, 0])
    return c0 * c0 - c1 * c1


def _propagate_pair(psi: np.ndarray, kraus_diag: np.ndarray, u_t: np.ndarray) -> np.ndarray:
    n = psi.shape[0]
    basis = np.empty((n, 2, 2), dtype=complex)
    basis[:, :, 0] = psi
    basis[:, 0, 1] = -psi[:, 1].conj()
    basis[:, 1, 1] = psi[:, 0].conj()
    basis *= kraus_diag[:, :, None]
    return u_t @ basis


def node_linear_coefficients(
    theta: float, rng: np.random.Generator, epsilon: float = 1e-6
) -> LinearCoefficients:
    """Sample one node and extract (A1, A2) by one-sided finite differences.

    The node's gates and two Haar-random input eigenbases are drawn, the
    weak and projective outcomes are Born-sampled at the pure-input baseline
    (where the output eigenvalue is exactly zero), and the frozen node map
    is then re-run with each input's smaller eigenvalue displaced to epsilon.
    """
    _check_theta(theta)
    if not 0.0 < epsilon <= 1e-3:
        raise ValueError("epsilon must lie in (0, 1e-3]")
    for _ in range(64):
        gates_arr = haar_unitary(rng, size=4)
        entangler = collapse.reverse_entangler(gates_arr[None, :, :, :])
        phi1 = collapse.haar_pure_states(rng, 1)
        phi2 = collapse.haar_pure_states(rng, 1)
        basis1 = np.stack([phi1[0], collapse.orthogonal_state(phi1)[0]], axis=1)
        basis2 = np.stack([phi2[0], collapse.orthogonal_state(phi2)[0]], axis=1)
        uniforms = rng.random(3)

        def rho_of(z: float, basis: np.ndarray) -> np.ndarray:
            return ((1.0 - z) * np.outer(basis[:, 0], basis[:, 0].conj())
                    + z * np.outer(basis[:, 1], basis[:, 1].conj()))[None, :, :]

        # Baseline Born sampling at pure inputs.
        p1 = collapse.weak_outcome_probabilities(rho_of(0.0, basis1), theta)[0]
        m_r = int(uniforms[0] < p1[1])
        p2 = collapse.weak_outcome_probabilities(rho_of(0.0, basis2), theta)[0]
        m_s = int(uniforms[1] < p2[1])
        kd = collapse.kraus_diagonals(theta)
        a1k, _ = collapse.apply_weak_kraus(rho_of(0.0, basis1), kd[[m_r]])
        a2k, _ = collapse.apply_weak_kraus(rho_of(0.0, basis2), kd[[m_s]])
        _, p_m0 = collapse.couple_and_project(a1k, a2k, entangler, np.array([0]))
        _, p_m1 = collapse.couple_and_project(a1k, a2k, entangler, np.array([1]))
        tot = p_m0[0] + p_m1[0]
        if tot <= 0.0:
            continue
        m_p = int(uniforms[2] * tot < p_m1[0])

        def z_out(z1: float, z2: float) -> float | None:
            out, p = collapse.node_forced(
                rho_of(z1, basis1), rho_of(z2, basis2), theta,
                np.array([m_r]), np.array([m_s]), np.array([m_p]), entangler,
            )
            if p[0] <= 0.0:
                return None
            return float(collapse.smaller_eigenvalues(out)[0])

        za = z_out(epsilon, 0.0)
        zb = z_out(0.0, epsilon)
        if za is None or zb is None:
            continue  # forced outcome hit probability zero: resample the node
        g = gates_arr
        return LinearCoefficients(
            a1=za / epsilon,
            a2=zb / epsilon,
            outcomes=(m_r, m_s, m_p),
            gates=NodeGates(g[0], g[1], g[2], g[3]),
        )
    raise RuntimeError("could not sample a node with nonzero outcome probability")


def mean_A_power(
    theta: float,
    lam: float,
    n_samples: int,
    seed: int,
    eps: float = 1e-6,
) -> tuple[float, float]:
    """Monte Carlo E[A1^lam + A2^lam] with standard error.

    Chunk c draws from the stream (seed, c) regardless of theta, so repeated
    calls at different theta share randomness (common random numbers).
    """
    _check_theta(theta)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    chunk_sums: list[float] = []
    chunk_sq_sums: list[float] = []
    done = 0
    chunk_idx = 0
    while done < n_samples:
        n = min(_CHUNK, n_samples - done)
        rng = rng_stream(seed, _A_NS, chunk_idx)
        a1, a2 = _sample_A_batch(theta, n, rng, eps)
        if lam == 1.0:
            vals = a1 + a2
        else:
            vals = np.power(a1, lam) + np.power(a2, lam)
        chunk_sums.append(float(vals.sum()))
        chunk_sq_sums.append(float((vals * vals).sum()))
        done += n
        chunk_idx += 1
    total = math.fsum(chunk_sums)
    total_sq = math.fsum(chunk_sq_sums)
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return mean, math.sqrt(var / n_samples)


def velocity(
    theta: float, lam: float, n_samples: int, seed: int, eps: float = 1e-6
) -> VelocityEstimate:
    """Front velocity v = ln E[A1^lam + A2^lam] / lam with propagated error."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    mean, err = mean_A_power(theta, lam, n_samples, seed, eps)
    if mean <= 0.0:
        return VelocityEstimate(theta=theta, lam=lam, v=-np.inf, mc_error=np.inf,
                                degenerate=True)
    return VelocityEstimate(
        theta=theta, lam=lam, v=math.log(mean) / lam, mc_error=err / (lam * mean)
    )


def find_critical_point(
    lam: float = 1.0,
    n_samples: int = 1_000_000,
    tol: float = 1e-3,
    seed: int = 0,
    bracket: tuple[float, float] = (THETA_MIN, THETA_MAX),
) -> CriticalPointResult:
    """Bisection root of E[A1^lam + A2^lam] = 1 on the theta bracket.

    Every evaluation reuses the same sample streams, making the estimated
    function effectively monotone; the confidence half-width propagates the
    Monte Carlo error through the locally fitted slope.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    evals: dict[float, tuple[float, float]] = {}

    def g(theta: float) -> tuple[float, float]:
        if theta not in evals:
            mean, err = mean_A_power(theta, lam, n_samples, seed)
            evals[theta] = (mean - 1.0, err)
        return evals[theta]

    a, b = float(bracket[0]), float(bracket[1])
    if not THETA_MIN - 1e-12 <= a < b <= THETA_MAX + 1e-12:
        raise ValueError(f"bracket {bracket} must be ordered within [pi/2, pi]")
    ga, _ = g(a)
    gb, _ = g(b)
    if not (ga > 0.0 > gb):
        raise RuntimeError(
            f"no sign change on bracket: g({a})={ga:.4f}, g({b})={gb:.4f}"
        )
    while b - a > tol:
        mid = 0.5 * (a + b)
        gm, _ = g(mid)
        if gm > 0.0:
            a = mid
        else:
            b = mid
    theta_c = 0.5 * (a + b)

    # Slope from the evaluations nearest the root (at least four points).
    pts = sorted(evals.items(), key=lambda kv: abs(kv[0] - theta_c))[:6]
    if len(pts) < 2:
        pts = sorted(evals.items())[:2]
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1][0] for p in pts])
    slope = np.polyfit(xs, ys, 1)[0]
    err_near = max(p[1][1] for p in pts)
    halfwidth = abs(err_near / slope) if slope != 0.0 else np.inf
    halfwidth = max(halfwidth, tol / 2.0)
    return CriticalPointResult(
        theta_c=float(theta_c), ci_halfwidth=float(halfwidth), n_samples=int(n_samples)
    )


def scaling_fit(
    ts: np.ndarray, ln_z_typ: np.ndarray, t_min: int = 20
) -> ScalingFit:
    """Fit ln(-ln Z^typ_t) = slope ln t + intercept over t >= t_min.

    A pure power-law front ln Z^typ ~ -C t^gamma recovers slope = gamma.
    Requires at least 10 usable points; entries with Z^typ >= 1 or
    nonpositive Z^typ are rejected.
    """
    ts = np.asarray(ts, dtype=float)
    ln_z = np.asarray(ln_z_typ, dtype=float)
    if ts.shape != ln_z.shape:
        raise ValueError("ts and ln_z_typ must have matching shapes")
    keep = ts >= t_min
    ts, ln_z = ts[keep], ln_z[keep]
    if np.any(~np.isfinite(ln_z)) or np.any(ln_z >= 0.0):
        raise ValueError("scaling fit needs finite ln Z^typ < 0 (Z^typ in (0, 1))")
    if ts.size < 10:
        raise ValueError(f"need >= 10 points with t >= {t_min}, got {ts.size}")
    x = np.log(ts)
    y = np.log(-ln_z)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ScalingFit(
        slope=float(slope),
        intercept=float(intercept),
        residual=float(np.sqrt(np.mean(resid**2))),
    )
