"""Observables and the forward data they generate.

An observable is a symbol with a single leading monomial:
``exp(-2 pi i p t) z**m zbar**n`` (with m_i n_i = 0 in the standard family),
``exp(-2 pi i q t) tau``, or a product of positions ``x_i x_j``.  Its
average over the normal-form tori is the diagonal part of the symbol
transformed by the normal-form generator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .phasepoly import (
    TWO_PI, ActionPoly, PhasePoly, action_from_diagonal, from_real_monomials, grade,
    lie_transform, weyl_to_operator,
)


@dataclass(frozen=True)
class Observable:
    kind: str
    payload: PhasePoly
    m: tuple = ()
    n: tuple = ()
    p: int = 0

    @property
    def weight(self):
        """Smallest grade present in the symbol."""
        return min(grade(key) for key in self.payload.terms)

    @property
    def label(self):
        if self.kind == "mnp":
            return f"mnp:{','.join(map(str, self.m))}:{','.join(map(str, self.n))}:{self.p}"
        if self.kind == "q":
            return f"q:{self.p}"
        return f"{self.kind}:{id(self.payload)}"


def make_observable(m, n, p=0):
    """exp(-2 pi i p t) prod z_j**m_j zbar_j**n_j."""
    m, n = tuple(int(v) for v in m), tuple(int(v) for v in n)
    if len(m) != len(n):
        raise ValueError("m and n must have the same length")
    if sum(m) + sum(n) == 0:
        raise ValueError("the observable must have positive degree")
    poly = PhasePoly(len(m), {(0, m, n, 0, -int(p)): 1.0})
    return Observable("mnp", poly, m, n, int(p))


def make_tau_observable(q, dof):
    """exp(-2 pi i q t) tau."""
    zero = (0,) * dof
    return Observable("q", PhasePoly(dof, {(0, zero, zero, 1, -int(q)): 1.0}), p=int(q))


def make_position_product(i, j, dof):
    """x_i x_j expanded in z, zbar."""
    alpha = [0] * dof
    alpha[i] += 1
    alpha[j] += 1
    poly = from_real_monomials(dof, {(tuple(alpha), (0,) * dof): 1.0})
    return Observable("quadratic", poly)


def signed_vectors(dof, max_norm):
    """All v in Z^dof with 0 < |v|_1 <= max_norm."""
    out = []
    for v in itertools.product(range(-max_norm, max_norm + 1), repeat=dof):
        if 0 < sum(abs(a) for a in v) <= max_norm:
            out.append(v)
    return out


def split_signed(v):
    m = tuple(max(a, 0) for a in v)
    n = tuple(max(-a, 0) for a in v)
    return m, n


def observable_family(dof, order, band=0, periodic=False):
    """The (m, n, p) family with m_i n_i = 0 and 0 < |m| + |n| <= order, plus tau observables.

    ``band`` bounds |p| and |q|; tau observables only appear in the periodic
    setting and for order >= 2.
    """
    ps = range(-band, band + 1) if periodic else [0]
    fam = []
    for v in signed_vectors(dof, order):
        m, n = split_signed(v)
        for p in ps:
            fam.append(make_observable(m, n, p))
    if periodic and order >= 2:
        fam.extend(make_tau_observable(q, dof) for q in range(-band, band + 1) if q != 0)
    return fam


def schrodinger_family(dof):
    """z**m for m in {0, 1}^dof without the zero vector."""
    return [make_observable(m, (0,) * dof) for m in itertools.product((0, 1), repeat=dof) if any(m)]


def family_size(dof, order):
    """Number of (m, n) pairs with m_i n_i = 0 and 0 < |m| + |n| <= order.

    Equals the number of nonzero lattice points in the l1 ball of radius
    ``order``: sum_k 2**k C(dof, k) C(order, k) - 1.
    """
    return sum(2 ** k * math.comb(dof, k) * math.comb(order, k) for k in range(dof + 1)) - 1


# ---------------------------------------------------------------------------
# forward data
# ---------------------------------------------------------------------------

def average_cap(observable, order):
    return order + observable.weight - 2


def transformed(observable, result, cap=None):
    cap = average_cap(observable, result.order) if cap is None else cap
    return lie_transform(observable.payload, result.generator(), cap, result.mode)


def average_classical(observable, result, cap=None):
    """Torus average of the observable in normal-form coordinates, as a polynomial in (A, tau)."""
    if result.mode != "classical":
        raise ValueError("average_classical needs a classical normal form")
    return action_from_diagonal(transformed(observable, result, cap))


def matrix_elements_quantum(observable, result, cap=None):
    """Taylor coefficients b[k, m, s] of the diagonal matrix elements.

    The returned ActionPoly has keys (k, m, s) for x**k y**m z**s with
    x = (mu + 1/2) hbar, y = 2 pi nu hbar and z = hbar.
    """
    if result.mode != "quantum":
        raise ValueError("matrix_elements_quantum needs a quantum normal form")
    return weyl_to_operator(transformed(observable, result, cap))


def forward_data(observable, result, cap=None):
    if result.mode == "classical":
        return average_classical(observable, result, cap)
    return matrix_elements_quantum(observable, result, cap)


def forward_averages(result, family, cap_order=None):
    """{label: data} for a whole family, each at the cap matching ``cap_order``."""
    order = result.order if cap_order is None else cap_order
    return {obs.label: forward_data(obs, result, average_cap(obs, order)) for obs in family}


def trace_taylor(data):
    """{(k, m, s): b} from the ActionPoly returned by ``matrix_elements_quantum``."""
    return {key: c for key, c in data}


# ---------------------------------------------------------------------------
# response polynomials
# ---------------------------------------------------------------------------

def g_jks(j, k, s, m, n, p, actions, tau):
    """A**max(j,k) tau**s (sum_i (k_i m_i - j_i n_i)/A_i + 2 pi p s / tau), zero unless j + m = k + n."""
    j, k, m, n = (np.asarray(v, dtype=int) for v in (j, k, m, n))
    if np.any(j + m != k + n):
        return 0.0
    actions = np.asarray(actions, dtype=float)
    top = np.maximum(j, k)
    total = 0.0
    for i in range(len(j)):
        coef = k[i] * m[i] - j[i] * n[i]
        if coef:
            if actions[i] == 0:
                raise ZeroDivisionError(f"action {i} vanishes")
            e = top.copy()
            e[i] -= 1
            total += coef * np.prod(actions ** e) * tau ** s
    if p * s:
        if tau == 0 and s == 0:
            raise ZeroDivisionError("tau vanishes")
        total += TWO_PI * p * s * np.prod(actions ** top) * tau ** (s - 1)
    return float(total)


def g_jks_poly(j, k, s, m, n, p):
    """The same response as an ActionPoly (no division involved)."""
    j, k, m, n = (tuple(int(v) for v in x) for x in (j, k, m, n))
    dof = len(j)
    if any(a + b != c + d for a, b, c, d in zip(j, m, k, n)):
        return ActionPoly(dof)
    top = tuple(max(a, b) for a, b in zip(j, k))
    terms = {}
    for i in range(dof):
        coef = k[i] * m[i] - j[i] * n[i]
        if coef:
            e = list(top)
            e[i] -= 1
            key = (tuple(e), s, 0)
            terms[key] = terms.get(key, 0.0) + coef
    if p * s:
        key = (top, s - 1, 0)
        terms[key] = terms.get(key, 0.0) + TWO_PI * p * s
    return ActionPoly(dof, terms)


def g_q_poly(j, s, q):
    """Response of the tau observable: 2 pi q (1 + s) A**j tau**s."""
    return ActionPoly(len(j), {(tuple(j), s, 0): TWO_PI * q * (1 + s)})


# ---------------------------------------------------------------------------
# trace kernels
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _stirling2(j, i):
    if j == i:
        return 1
    if i == 0 or i > j:
        return 0
    return i * _stirling2(j - 1, i) + _stirling2(j - 1, i - 1)


def euler_derivative(power, x):
    """(x d/dx)**power applied to x / (1 - x**2), evaluated at x."""
    x = complex(x)
    if abs(1 - x) < 1e-14 or abs(1 + x) < 1e-14:
        raise ZeroDivisionError("kernel is singular at x = +-1")
    if power == 0:
        return x / (1 - x * x)
    total = 0.0
    for i in range(1, power + 1):
        c = _stirling2(power, i) * math.factorial(i) * x ** i
        total += c * (1 / (1 - x) ** (i + 1) - (-1) ** i / (1 + x) ** (i + 1))
    return 0.5 * total


def _multinomials(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _multinomials(total - first, parts - 1):
            yield (first,) + rest


def trace_kernel_u(k, m, x, theta):
    """(-i d/dt)**m (-i d/(t d alpha))**k of prod_i h(x_i), h(x) = x / (1 - x**2).

    Each factor depends on x_i = exp(i t alpha_i / 2); both derivations act as
    multiples of x_i d/dx_i, giving theta_i**s_i / 2**(k_i + s_i) times the
    (k_i + s_i)-th Euler derivative of h.
    """
    k = tuple(int(v) for v in k)
    x = np.asarray(x, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    total = 0.0
    for s in _multinomials(int(m), len(k)):
        coef = math.factorial(m)
        term = 1.0
        for i, (ki, si) in enumerate(zip(k, s)):
            coef //= math.factorial(si)
            term *= theta[i] ** si / 2 ** (ki + si) * euler_derivative(ki + si, x[i])
        total += coef * term
    return complex(total)


def kernel_points(t, theta):
    return np.exp(0.5j * t * np.asarray(theta, dtype=float))


def trace_index_set(dof, p):
    """(k, m) with |k| + m <= p, in a fixed order."""
    out = []
    for total in range(p + 1):
        for km in _multinomials(total, dof + 1):
            out.append((km[:dof], km[dof]))
    return out


def collapse_nu_terms(b, theta):
    """Fold every b[k, m, s] with m > 0 onto the m = 0 keys it is indistinguishable from.

    At alpha = theta both derivations reduce to multiples of x d/dx, so
    u^(k, m) = sum_{|sigma| = m} multinomial(m; sigma) theta**sigma u^(k + sigma, 0)
    and the trace samples only see these combinations.
    """
    theta = np.asarray(theta, dtype=float)
    out = {}
    for (k, m, s), c in b.items():
        for sigma in _multinomials(int(m), len(k)):
            coef = math.factorial(m)
            for th, si in zip(theta, sigma):
                coef = coef / math.factorial(si) * th ** si
            key = (tuple(a + b_ for a, b_ in zip(k, sigma)), 0, s)
            out[key] = out.get(key, 0.0) + coef * c
    return out


def trace_samples(b, theta, times, order):
    """X_p(l) = sum_{|k|+m <= p} b[k, m, p-|k|-m] u^(k,m)(l) for p = 1..order."""
    dof = len(theta)
    out = {}
    for p in range(1, order + 1):
        for l in times:
            x = kernel_points(l, theta)
            val = 0.0
            for k, m in trace_index_set(dof, p):
                coef = b.get((k, m, p - sum(k) - m), 0.0)
                if coef:
                    val += coef * trace_kernel_u(k, m, x, theta)
            out[(p, l)] = complex(val)
    return out
