"""Symplectic linear algebra for Fermi coordinates.

Matrices act on column vectors ordered (x_1..x_n, xi_1..xi_n) unless stated
otherwise; the symplectic form is J = [[0, I], [-I, 0]].  The interleaved
ordering (x_1, xi_1, x_2, xi_2, ...) is obtained with ``to_interleaved``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .phasepoly import (
    PhasePoly, from_real_monomials, harmonic_part, linear_substitution, quadratic_symbol,
    real_to_ladder,
)


class FermiError(ValueError):
    """Raised when a frame cannot be built from the given data."""


def standard_form(n):
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def symplectic_residual(S):
    S = np.asarray(S, dtype=float)
    J = standard_form(S.shape[0] // 2)
    return float(np.max(np.abs(S.T @ J @ S - J)))


def interleave_matrix(n):
    """Permutation matrix M with M[i, sigma(i)] = 1, sigma sending x_i to slot 2i and xi_i to 2i+1."""
    M = np.zeros((2 * n, 2 * n))
    for i in range(n):
        M[i, 2 * i] = 1.0
        M[n + i, 2 * i + 1] = 1.0
    return M


def to_interleaved(S):
    M = interleave_matrix(np.asarray(S).shape[0] // 2)
    return M.T @ S @ M


def from_interleaved(S_sigma):
    M = interleave_matrix(np.asarray(S_sigma).shape[0] // 2)
    return M @ S_sigma @ M.T


def block_rotation(angles):
    """Block-diagonal rotation acting on each (x_k, xi_k) plane, plain ordering."""
    n = len(angles)
    R = np.zeros((2 * n, 2 * n))
    for k, a in enumerate(angles):
        c, s = math.cos(a), math.sin(a)
        R[k, k], R[k, n + k] = c, -s
        R[n + k, k], R[n + k, n + k] = s, c
    return R


# ---------------------------------------------------------------------------
# Williamson diagonalization
# ---------------------------------------------------------------------------

@dataclass
class WilliamsonData:
    S: np.ndarray
    lam: np.ndarray
    residuals: dict = field(default_factory=dict)


def williamson(A, degenerate_tol=1e-8):
    """Symplectic S with S^T A S = diag(lam, lam), lam ascending.

    The frequencies are the moduli of the eigenvalues of J A.  A near
    degenerate pair of frequencies only triggers a warning.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
        raise FermiError("A must be a square matrix of even size")
    if np.max(np.abs(A - A.T)) > 1e-12 * max(1.0, np.max(np.abs(A))):
        raise FermiError("A is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0] // 2
    evals, evecs = np.linalg.eigh(A)
    if evals[0] <= 0:
        raise FermiError("A is not positive definite")
    inv_root = evecs @ np.diag(evals ** -0.5) @ evecs.T
    K = inv_root @ standard_form(n) @ inv_root
    # i K is Hermitian; eigenvalue -omega of iK <-> K w = i omega w
    w_vals, w_vecs = np.linalg.eigh(1j * K)
    neg = np.argsort(w_vals)[:n]
    omega = -w_vals[neg]
    lam = 1.0 / omega
    order = np.argsort(lam)
    lam = lam[order]
    vecs = w_vecs[:, neg][:, order] * math.sqrt(2.0)
    O = np.hstack([vecs.real, vecs.imag])
    scale = np.concatenate([np.sqrt(lam), np.sqrt(lam)])
    S = inv_root @ O @ np.diag(scale)
    if n > 1 and np.min(np.diff(lam)) < degenerate_tol * lam[-1]:
        warnings.warn("near-degenerate symplectic frequencies", RuntimeWarning, stacklevel=2)
    D = np.diag(np.concatenate([lam, lam]))
    res = {"symplectic": symplectic_residual(S), "diagonal": float(np.max(np.abs(S.T @ A @ S - D)))}
    return WilliamsonData(S, lam, res)


# ---------------------------------------------------------------------------
# invariants of a frame and reconstruction from them
# ---------------------------------------------------------------------------

def block_rows(S):
    """L[i, k] = ((S_sigma)[i, 2k], (S_sigma)[i, 2k+1]) for all rows i and blocks k."""
    Ss = to_interleaved(np.asarray(S, dtype=float))
    n = Ss.shape[0] // 2
    return Ss.reshape(2 * n, n, 2)


def invariants_from(S):
    """Gram family a[i, j, k] = <L_{i,k}, L_{j,k}> (0-based indices, interleaved rows)."""
    L = block_rows(S)
    return np.einsum("ikc,jkc->ijk", L, L)


def block_determinant_sums(S):
    """sum_i det(b_{i,k}) for each block column k, with b_{i,k} the 2x2 blocks of S_sigma."""
    L = block_rows(S)
    n = L.shape[1]
    sums = np.zeros(n)
    for k in range(n):
        for i in range(n):
            top, bottom = L[2 * i, k], L[2 * i + 1, k]
            sums[k] += top[0] * bottom[1] - top[1] * bottom[0]
    return sums


def invariants_to_records(a):
    size, _, n = a.shape
    return [{"i": i, "j": j, "k": k, "value": float(a[i, j, k])}
            for k in range(n) for i in range(size) for j in range(size)]


def invariants_from_records(records, n):
    a = np.zeros((2 * n, 2 * n, n))
    for r in records:
        a[r["i"], r["j"], r["k"]] = r["value"]
    return a


def choose_pairs(a, margin=1e-12):
    """For each block k the index pair with the widest Cauchy-Schwarz gap."""
    size, _, n = a.shape
    pairs = []
    for k in range(n):
        best, best_gap = None, margin
        for i in range(size):
            for j in range(i + 1, size):
                gap = a[i, i, k] * a[j, j, k] - a[i, j, k] ** 2
                if gap > best_gap:
                    best, best_gap = (i, j), gap
        if best is None:
            raise FermiError(f"no index pair satisfies the strict Cauchy-Schwarz inequality for block {k}")
        pairs.append(best)
    return pairs


def _block_candidates(a, k, pair):
    """The two solutions (v+, v-) for block k; each is a (2n, 2) array of rows."""
    i0, j0 = pair
    size = a.shape[0]
    anchor = np.array([math.sqrt(a[i0, i0, k]), 0.0])
    first = a[i0, j0, k] / anchor[0]
    second = math.sqrt(max(a[j0, j0, k] - first ** 2, 0.0))
    out = []
    for sign in (1.0, -1.0):
        partner = np.array([first, sign * second])
        basis = np.vstack([anchor, partner])
        rows = np.zeros((size, 2))
        for i in range(size):
            rows[i] = np.linalg.solve(basis, np.array([a[i0, i, k], a[j0, i, k]]))
        rows[i0] = anchor
        rows[j0] = partner
        out.append(rows)
    return out


def reconstruct_symplectic(a, pairs=None, tol=1e-6):
    """Rebuild a symplectic matrix whose invariants are ``a``.

    All 2**n sign candidates are formed; exactly one has every block
    determinant sum equal to 1, and that one is returned.
    """
    a = np.asarray(a, dtype=float)
    size, _, n = a.shape
    if size != 2 * n:
        raise FermiError("invariant family has inconsistent shape")
    if pairs is None:
        pairs = choose_pairs(a)
    candidates = [_block_candidates(a, k, pairs[k]) for k in range(n)]
    passing = []
    for signs in itertools.product((0, 1), repeat=n):
        Ts = np.zeros((2 * n, 2 * n))
        for k in range(n):
            Ts[:, 2 * k:2 * k + 2] = candidates[k][signs[k]]
        T = from_interleaved(Ts)
        if np.all(np.abs(block_determinant_sums(T) - 1.0) < tol):
            passing.append(T)
    if len(passing) != 1:
        raise FermiError(f"{len(passing)} sign candidates pass the symplectic test (expected 1)")
    return passing[0]


def rotation_defect(S, T):
    """Distance of S^{-1} T from block-diagonal 2x2 rotations (interleaved blocks)."""
    Q = to_interleaved(np.linalg.solve(S, T))
    n = Q.shape[0] // 2
    worst = 0.0
    for i in range(n):
        for k in range(n):
            blk = Q[2 * i:2 * i + 2, 2 * k:2 * k + 2]
            if i != k:
                worst = max(worst, np.max(np.abs(blk)))
            else:
                worst = max(worst, np.max(np.abs(blk.T @ blk - np.eye(2))), abs(np.linalg.det(blk) - 1.0))
    return float(worst)


# ---------------------------------------------------------------------------
# Fermi coordinates for a well
# ---------------------------------------------------------------------------

def fermi_general(hessian, remainder=None, E=0.0, max_order=None):
    """Move a Hamiltonian E + v^T A v / 2 + remainder into Fermi form.

    Returns the Williamson data and the transformed symbol, whose quadratic
    part is sum lam_i z_i zbar_i.
    """
    data = williamson(hessian)
    C = real_to_ladder(data.S)
    n = len(data.lam)
    quad = linear_substitution(quadratic_symbol(hessian), C)
    target = harmonic_part(data.lam)
    data.residuals["quadratic"] = (quad - target).max_abs()
    total = PhasePoly.constant(n, E) + target
    if remainder is not None and not remainder.is_zero():
        total = total + linear_substitution(remainder, C, max_order)
    return data, total.with_caps(max_order)


@dataclass
class SchrodingerFrame:
    U: np.ndarray
    theta: np.ndarray
    remainder: dict
    symbol: PhasePoly


def canonical_column_signs(U, tol=1e-12):
    U = np.array(U, dtype=float)
    for c in range(U.shape[1]):
        col = U[:, c]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            U[:, c] = -col
    return U


def substitute_x_poly(coeffs, M):
    """Coefficients of sum c_k (M y)**k as a polynomial in y; keys are exponent tuples."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    out = {}
    for k, c in coeffs.items():
        partial = {(0,) * n: float(c)}
        for i, e in enumerate(k):
            for _ in range(e):
                nxt = {}
                for mono, v in partial.items():
                    for b in range(n):
                        if M[i, b] == 0.0:
                            continue
                        key = tuple(m + (1 if q == b else 0) for q, m in enumerate(mono))
                        nxt[key] = nxt.get(key, 0.0) + v * M[i, b]
                partial = nxt
        for mono, v in partial.items():
            out[mono] = out.get(mono, 0.0) + v
    peak = max((abs(v) for v in out.values()), default=0.0)
    return {k: v for k, v in out.items() if abs(v) > 1e-14 * peak}


def x_poly_symbol(n, coeffs, max_order=None):
    """Symbol of a function of x only, from {exponent: coefficient}."""
    return from_real_monomials(n, {(tuple(k), (0,) * n): c for k, c in coeffs.items()}, max_order)


def fermi_schrodinger(potential_hessian, cubic_and_higher=None, V0=0.0, max_order=None, gap_tol=1e-8):
    """Fermi frame for the symbol |xi|^2/2 + V(x).

    ``potential_hessian`` is d^2 V at the minimum and ``cubic_and_higher`` maps
    x-exponents to Taylor coefficients.  The orthogonal U diagonalizes the
    Hessian with ascending eigenvalues theta_i**2 and canonical column signs;
    the returned remainder is R in Fermi coordinates (a function of x only).
    """
    K = np.asarray(potential_hessian, dtype=float)
    n = K.shape[0]
    evals, U = np.linalg.eigh(0.5 * (K + K.T))
    if evals[0] <= 0:
        raise FermiError("potential Hessian is not positive definite")
    if n > 1 and np.min(np.diff(evals)) < gap_tol * evals[-1]:
        raise FermiError("repeated eigenvalues of the potential Hessian")
    U = canonical_column_signs(U)
    theta = np.sqrt(evals)
    M = U @ np.diag(theta ** -0.5)
    remainder = substitute_x_poly(cubic_and_higher or {}, M)
    symbol = harmonic_part(theta, V0) + x_poly_symbol(n, remainder, max_order)
    return SchrodingerFrame(U, theta, remainder, symbol.with_caps(max_order))


def schrodinger_symbol_check(frame, potential_hessian):
    """Max deviation of the quadratic part of H o phi o phi_0 from sum theta (x^2 + xi^2)/2."""
    n = len(frame.theta)
    M = frame.U @ np.diag(frame.theta ** -0.5)
    P = frame.U @ np.diag(frame.theta ** 0.5)
    K = np.asarray(potential_hessian, dtype=float)
    A = np.zeros((2 * n, 2 * n))
    A[:n, :n] = M.T @ K @ M
    A[n:, n:] = P.T @ P
    return float(np.max(np.abs(A - np.diag(np.concatenate([frame.theta, frame.theta])))))


# ---------------------------------------------------------------------------
# loops of frames along a periodic orbit
# ---------------------------------------------------------------------------

def loop_trace(S_samples, S_dot_samples):
    """d^2 q_S/dx_k^2 + d^2 q_S/dxi_k^2 for each sample and block k."""
    S = np.asarray(S_samples, dtype=float)
    Sd = np.asarray(S_dot_samples, dtype=float)
    n = S.shape[1] // 2
    out = np.zeros((S.shape[0], n))
    for k in range(n):
        cols = [k, k + n]
        top, bottom = S[:, :n, :][:, :, cols], S[:, n:, :][:, :, cols]
        dtop, dbottom = Sd[:, :n, :][:, :, cols], Sd[:, n:, :][:, :, cols]
        out[:, k] = np.sum(dbottom * top, axis=(1, 2)) - np.sum(dtop * bottom, axis=(1, 2))
    return out


def spectral_derivative(samples):
    """d/dt of samples of a 1-periodic function on a uniform grid."""
    samples = np.asarray(samples, dtype=float)
    M = samples.shape[0]
    freqs = np.fft.fftfreq(M, d=1.0 / M)
    if M % 2 == 0:
        freqs[M // 2] = 0.0
    spec = np.fft.fft(samples, axis=0)
    shape = (M,) + (1,) * (samples.ndim - 1)
    return np.real(np.fft.ifft(spec * (2j * np.pi * freqs).reshape(shape), axis=0))


@dataclass
class LoopFrame:
    grid: np.ndarray
    S_samples: np.ndarray
    base_samples: np.ndarray
    theta_dot: np.ndarray
    angles: np.ndarray
    pairs: list


def fermi_periodic(invariant_samples, trace_samples, jump_tol=None):
    """Reconstruct a loop of symplectic frames from sampled invariants and traces.

    ``invariant_samples`` has shape (M, 2n, 2n, n) on the uniform grid t = m/M;
    ``trace_samples`` has shape (M, n).  The result is defined up to one
    constant block rotation.
    """
    inv = np.asarray(invariant_samples, dtype=float)
    trace = np.asarray(trace_samples, dtype=float)
    M, size, _, n = inv.shape
    grid = np.arange(M) / M
    # keep one index pair per block for the whole loop so the fibers vary smoothly
    pairs = []
    for k in range(n):
        best, best_gap = None, 0.0
        for i in range(size):
            for j in range(i + 1, size):
                gap = np.min(inv[:, i, i, k] * inv[:, j, j, k] - inv[:, i, j, k] ** 2)
                if gap > best_gap:
                    best, best_gap = (i, j), gap
        if best is None:
            raise FermiError(f"no index pair is feasible along the whole loop for block {k}")
        pairs.append(best)
    base = np.array([reconstruct_symplectic(inv[m], pairs) for m in range(M)])
    jumps = np.max(np.abs(np.diff(np.concatenate([base, base[:1]]), axis=0)), axis=(1, 2))
    if jump_tol is None:
        jump_tol = 0.5 * max(1.0, float(np.max(np.abs(base))))
    if np.max(jumps) > jump_tol:
        raise FermiError("fiber solutions are discontinuous; refine the grid")
    base_trace = loop_trace(base, spectral_derivative(base))
    theta_dot = 0.5 * (trace - base_trace)
    angles = np.zeros((M, n))
    angles[1:] = np.cumsum(0.5 * (theta_dot[1:] + theta_dot[:-1]) / M, axis=0)
    frames = np.array([base[m] @ block_rotation(angles[m]) for m in range(M)])
    return LoopFrame(grid, frames, base, theta_dot, angles, pairs)
