"""Random symbol generators shared by the tests."""

import numpy as np
import scipy.linalg as la

from bnfinv.phasepoly import PhasePoly


def random_poly(rng, n, orders, periodic=False, band=1, density=0.6, real=False, hbar=False):
    """Random symbol with terms of the given grades."""
    terms = {}
    for r in orders:
        for key in all_keys(n, r, periodic=periodic, band=band, hbar=hbar):
            if rng.random() < density:
                terms[key] = complex(rng.normal(), rng.normal())
    poly = PhasePoly(n, terms)
    if real:
        poly = (poly + poly.conj_symbol()) * 0.5
    return poly


def all_keys(n, r, periodic=False, band=0, hbar=False):
    keys = []
    for p in range(r // 2 + 1 if hbar else 1):
        for m in range((r - 2 * p) // 2 + 1 if periodic else 1):
            rest = r - 2 * p - 2 * m
            for jk in _exponents(2 * n, rest):
                ds = range(-band, band + 1) if periodic else [0]
                for d in ds:
                    keys.append((p, tuple(jk[:n]), tuple(jk[n:]), m, d))
    return keys


def _exponents(size, total):
    if size == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _exponents(size - 1, total - first):
            yield (first,) + rest


def random_pd(rng, size):
    X = rng.normal(size=(size, size))
    return X @ X.T + 0.5 * np.eye(size)


def random_symplectic(rng, n, scale=0.4):
    """Product of exponentials of Hamiltonian matrices J X with X symmetric."""
    eye, zero = np.eye(n), np.zeros((n, n))
    J = np.block([[zero, eye], [-eye, zero]])
    S = np.eye(2 * n)
    for _ in range(2):
        X = rng.normal(size=(2 * n, 2 * n)) * scale
        S = S @ la.expm(J @ (X + X.T) / 2)
    return S
