"""Graded sparse polynomials in the ladder variables z, zbar, the action tau,
a formal hbar and Fourier modes exp(2 pi i d t).

A monomial key is the tuple ``(p, j, k, m, d)`` standing for

    hbar**p * z**j * zbar**k * tau**m * exp(2 pi i d t)

with ``j`` and ``k`` integer tuples of length ``n``.  Its grade is
``2p + |j| + |k| + 2m``.

Brackets follow one fixed convention::

    {f, g} = -i sum_i (df/dz_i dg/dzbar_i - df/dzbar_i dg/dz_i)
             + (df/dt dg/dtau - df/dtau dg/dt)

which is the (x, xi) bracket ``df/dx dg/dxi - df/dxi dg/dx`` rewritten with
z = (x + i xi)/sqrt(2).  With Op^W(z) = a and Op^W(zbar) = a*, the Moyal
bracket is the Weyl symbol of [F, G]/(i hbar).
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

ZERO_TOL = 1e-12
TWO_PI = 2.0 * math.pi


def grade(key):
    """Return ``2p + |j| + |k| + 2m`` for a monomial key."""
    p, j, k, m, _ = key
    return 2 * p + sum(j) + sum(k) + 2 * m


def _prune(terms, tol=ZERO_TOL):
    peak = {}
    for key, c in terms.items():
        r = grade(key)
        peak[r] = max(peak.get(r, 0.0), abs(c))
    return {key: complex(c) for key, c in terms.items()
            if abs(c) > 0.0 and abs(c) > tol * peak[grade(key)]}


def _min_cap(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


class PhasePoly:
    """Sparse graded polynomial with complex coefficients.

    Parameters
    ----------
    n : int
        Number of degrees of freedom.
    terms : dict, optional
        Mapping from monomial keys to coefficients.
    max_order : int or None
        Terms of grade above this are discarded (None: no cap).
    fourier_band : int or None
        Terms with ``|d|`` above this are discarded (None: no band).

    Instances are treated as immutable; every operation returns a new object.
    Discarded terms are counted in ``truncation``.
    """

    __slots__ = ("n", "terms", "max_order", "fourier_band", "truncation")

    def __init__(self, n, terms=None, max_order=None, fourier_band=None, truncation=None):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = n
        self.max_order = max_order
        self.fourier_band = fourier_band
        dropped = {"order": 0, "band": 0}
        if truncation:
            for name in dropped:
                dropped[name] += truncation.get(name, 0)
        kept = {}
        for key, c in (terms or {}).items():
            key = (int(key[0]), tuple(int(v) for v in key[1]), tuple(int(v) for v in key[2]),
                   int(key[3]), int(key[4]))
            if len(key[1]) != n or len(key[2]) != n:
                raise ValueError(f"key {key} does not match n={n}")
            if max_order is not None and grade(key) > max_order:
                dropped["order"] += 1
                continue
            if fourier_band is not None and abs(key[4]) > fourier_band:
                dropped["band"] += 1
                continue
            kept[key] = kept.get(key, 0.0) + c
        self.terms = _prune(kept)
        self.truncation = dropped

    # construction helpers
    @classmethod
    def zero(cls, n, max_order=None, fourier_band=None):
        return cls(n, {}, max_order, fourier_band)

    @classmethod
    def monomial(cls, n, j, k, p=0, m=0, d=0, coeff=1.0):
        j = tuple(j) if j is not None else (0,) * n
        k = tuple(k) if k is not None else (0,) * n
        return cls(n, {(p, j, k, m, d): coeff})

    @classmethod
    def constant(cls, n, value):
        zero = (0,) * n
        return cls(n, {(0, zero, zero, 0, 0): value})

    def _like(self, terms, truncation=None):
        return PhasePoly(self.n, terms, self.max_order, self.fourier_band,
                         _sum_trunc(self.truncation, truncation))

    # arithmetic
    def __add__(self, other):
        if not isinstance(other, PhasePoly):
            return self + PhasePoly.constant(self.n, other)
        _check_dof(self, other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + c
        return PhasePoly(self.n, out, _min_cap(self.max_order, other.max_order),
                         _min_cap(self.fourier_band, other.fourier_band),
                         _sum_trunc(self.truncation, other.truncation))

    __radd__ = __add__

    def __neg__(self):
        return self._like({key: -c for key, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, PhasePoly):
            return mul(self, other)
        return self._like({key: c * other for key, c in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __eq__(self, other):
        return isinstance(other, PhasePoly) and self.n == other.n and self.terms == other.terms

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def __repr__(self):
        shown = ", ".join(f"{k}: {c:.6g}" for k, c in list(self)[:6])
        more = " ..." if len(self.terms) > 6 else ""
        return f"PhasePoly(n={self.n}, {{{shown}{more}}})"

    def coeff(self, key):
        return self.terms.get(key, 0.0)

    def is_zero(self):
        return not self.terms

    # views
    def truncate(self, max_order=None, fourier_band=None):
        return PhasePoly(self.n, self.terms, _min_cap(self.max_order, max_order),
                         _min_cap(self.fourier_band, fourier_band), self.truncation)

    def with_caps(self, max_order, fourier_band=None):
        """Same terms, new caps (terms outside the new caps are dropped)."""
        return PhasePoly(self.n, self.terms, max_order, fourier_band, self.truncation)

    def orders(self):
        return sorted({grade(key) for key in self.terms})

    def order_part(self, r):
        return self._like({key: c for key, c in self.terms.items() if grade(key) == r})

    def select(self, predicate):
        return self._like({key: c for key, c in self.terms.items() if predicate(key)})

    def diagonal_part(self):
        """Keys with j == k and d == 0 (the part surviving angle averages)."""
        return self.select(is_resonant)

    def off_diagonal_part(self):
        return self.select(lambda key: not is_resonant(key))

    def hbar_slice(self, p):
        return self.select(lambda key: key[0] == p)

    def max_abs(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def conj_symbol(self):
        """Complex conjugate of the symbol: z and zbar swap, d changes sign."""
        return self._like({(p, k, j, m, -d): np.conj(c) for (p, j, k, m, d), c in self.terms.items()})

    def is_real_symbol(self, tol=1e-10):
        scale = max(self.max_abs(), 1.0)
        return (self - self.conj_symbol()).max_abs() <= tol * scale

    def has_time(self):
        return any(key[3] or key[4] for key in self.terms)

    def evaluate(self, z, t=0.0, tau=0.0, hbar=0.0):
        """Numerical value at complex points z (zbar = conj z)."""
        z = np.asarray(z, dtype=complex)
        zb = np.conj(z)
        total = 0.0
        for (p, j, k, m, d), c in self.terms.items():
            total += (c * hbar ** p * np.prod(z ** np.array(j)) * np.prod(zb ** np.array(k))
                      * tau ** m * np.exp(1j * TWO_PI * d * t))
        return complex(total)

    # serialization
    def to_records(self):
        return [{"p": p, "j": list(j), "k": list(k), "m": m, "d": d,
                 "re": float(np.real(c)), "im": float(np.imag(c))}
                for (p, j, k, m, d), c in self]

    @classmethod
    def from_records(cls, n, records, max_order=None, fourier_band=None):
        terms = {}
        for r in records:
            key = (r.get("p", 0), tuple(r["j"]), tuple(r["k"]), r.get("m", 0), r.get("d", 0))
            terms[key] = terms.get(key, 0.0) + complex(r.get("re", 0.0), r.get("im", 0.0))
        return cls(n, terms, max_order, fourier_band)

    def to_json(self):
        return json.dumps(self.to_records())


def _sum_trunc(a, b):
    out = {"order": 0, "band": 0}
    for src in (a, b):
        if src:
            for name in out:
                out[name] += src.get(name, 0)
    return out


def _check_dof(f, g):
    if f.n != g.n:
        raise ValueError(f"dof mismatch: {f.n} vs {g.n}")


def is_resonant(key):
    return key[1] == key[2] and key[4] == 0


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _result(f, g, raw, cap, dropped=None):
    band = _min_cap(f.fourier_band, g.fourier_band)
    cap = _min_cap(cap, _min_cap(f.max_order, g.max_order))
    trunc = _sum_trunc(_sum_trunc(f.truncation, g.truncation), dropped)
    return PhasePoly(f.n, raw, cap, band, trunc)


def mul(f, g, cap=None):
    """Pointwise product of symbols, discarding grades above ``cap``."""
    _check_dof(f, g)
    cap = _min_cap(cap, _min_cap(f.max_order, g.max_order))
    raw = defaultdict(complex)
    dropped = 0
    g_items = list(g.terms.items())
    for (p1, j1, k1, m1, d1), c1 in f.terms.items():
        r1 = 2 * p1 + sum(j1) + sum(k1) + 2 * m1
        for (p2, j2, k2, m2, d2), c2 in g_items:
            if cap is not None and r1 + 2 * p2 + sum(j2) + sum(k2) + 2 * m2 > cap:
                dropped += 1
                continue
            raw[(p1 + p2, _add(j1, j2), _add(k1, k2), m1 + m2, d1 + d2)] += c1 * c2
    return _result(f, g, raw, cap, {"order": dropped})


# ---------------------------------------------------------------------------
# bidifferential operator  Lambda = sum_i -i(dz_i x dzbar_i - dzbar_i x dz_i)
#                                   + (dt x dtau - dtau x dt)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Pattern:
    coeff: complex
    fz: tuple
    fzb: tuple
    ft: int
    ftau: int
    gz: tuple
    gzb: tuple
    gt: int
    gtau: int


@functools.lru_cache(maxsize=None)
def _patterns(n, power, with_time):
    """Expansion of Lambda**power as a list of derivative patterns."""
    # pair slots: (z_i on f, zbar_i on g) coefficient -i, (zbar_i on f, z_i on g) coefficient +i,
    # (t on f, tau on g) coefficient 1, (tau on f, t on g) coefficient -1
    slots = [-1j] * n + [1j] * n + ([1.0, -1.0] if with_time else [])
    out = []
    for alpha in _compositions(power, len(slots)):
        c = math.factorial(power)
        for a, s in zip(alpha, slots):
            c = c / math.factorial(a) * s ** a
        za = alpha[:n]
        zb = alpha[n:2 * n]
        t_f = alpha[2 * n] if with_time else 0
        tau_f = alpha[2 * n + 1] if with_time else 0
        out.append(_Pattern(c, za, zb, t_f, tau_f, zb, za, tau_f, t_f))
    return tuple(out)


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _falling(a, b):
    out = 1
    for i in range(b):
        out *= a - i
    return out


def _apply_pattern(pat, key1, key2):
    p1, j1, k1, m1, d1 = key1
    p2, j2, k2, m2, d2 = key2
    c = pat.coeff
    for e, a in zip(j1, pat.fz):
        if a > e:
            return None
        c *= _falling(e, a)
    for e, a in zip(k1, pat.fzb):
        if a > e:
            return None
        c *= _falling(e, a)
    for e, a in zip(j2, pat.gz):
        if a > e:
            return None
        c *= _falling(e, a)
    for e, a in zip(k2, pat.gzb):
        if a > e:
            return None
        c *= _falling(e, a)
    if pat.ftau > m1 or pat.gtau > m2:
        return None
    c *= _falling(m1, pat.ftau) * _falling(m2, pat.gtau)
    if pat.ft:
        if d1 == 0:
            return None
        c *= (1j * TWO_PI * d1) ** pat.ft
    if pat.gt:
        if d2 == 0:
            return None
        c *= (1j * TWO_PI * d2) ** pat.gt
    key = (p1 + p2,
           tuple(a - x + b - y for a, x, b, y in zip(j1, pat.fz, j2, pat.gz)),
           tuple(a - x + b - y for a, x, b, y in zip(k1, pat.fzb, k2, pat.gzb)),
           m1 - pat.ftau + m2 - pat.gtau,
           d1 + d2)
    return key, c


def _bidiff_series(f, g, cap, weights, grade_shift):
    """sum_l weight_l * hbar**shift_l * (f Lambda**l g), truncated at cap.

    ``weights`` is a list of (l, scalar, hbar_shift); ``grade_shift`` is the
    grade change of the output relative to grade(f) + grade(g).
    """
    _check_dof(f, g)
    cap = _min_cap(cap, _min_cap(f.max_order, g.max_order))
    with_time = f.has_time() or g.has_time()
    n = f.n
    raw = defaultdict(complex)
    dropped = 0
    if not f.terms or not g.terms:
        return _result(f, g, {}, cap)
    zdeg = min(max(sum(k[1]) + sum(k[2]) for k in f.terms), max(sum(k[1]) + sum(k[2]) for k in g.terms))
    mdeg = max(k[3] for k in f.terms) + max(k[3] for k in g.terms)
    lmax = zdeg + mdeg
    plan = [(w, shift, _patterns(n, l, with_time)) for l, w, shift in weights if l <= lmax]
    g_items = [(key, c, grade(key)) for key, c in g.terms.items()]
    for key1, c1 in f.terms.items():
        r1 = grade(key1)
        for key2, c2, r2 in g_items:
            if cap is not None and r1 + r2 + grade_shift > cap:
                dropped += 1
                continue
            for w, shift, pats in plan:
                for pat in pats:
                    hit = _apply_pattern(pat, key1, key2)
                    if hit is None:
                        continue
                    key, c = hit
                    if shift:
                        key = (key[0] + shift,) + key[1:]
                    raw[key] += w * c * c1 * c2
    return _result(f, g, raw, cap, {"order": dropped})


def poisson_bracket(f, g, cap=None):
    """Poisson bracket {f, g} in the convention of the module docstring."""
    return _bidiff_series(f, g, cap, [(1, 1.0, 0)], -2)


def _max_power(f, g):
    if not f.terms or not g.terms:
        return 0
    zdeg = min(max(sum(k[1]) + sum(k[2]) for k in f.terms), max(sum(k[1]) + sum(k[2]) for k in g.terms))
    return zdeg + max(k[3] for k in f.terms) + max(k[3] for k in g.terms)


def moyal_bracket(f, g, cap=None):
    """Weyl symbol of [Op(f), Op(g)] / (i hbar).

    Only odd powers of the bidifferential operator survive; the l-th power
    carries hbar**(l-1), so every term keeps grade(f) + grade(g) - 2.
    """
    top = _max_power(f, g)
    weights = [(l, (0.5j) ** (l - 1) / math.factorial(l), l - 1) for l in range(1, top + 1, 2)]
    return _bidiff_series(f, g, cap, weights, -2)


def star(f, g, cap=None):
    """Weyl symbol of Op(f) Op(g) (Moyal product)."""
    top = _max_power(f, g)
    weights = [(l, (0.5j) ** l / math.factorial(l), l) for l in range(0, top + 1)]
    return _bidiff_series(f, g, cap, weights, 0)


def adjoint(F, X, cap=None, mode="classical"):
    """One step of the Lie series generated by F.

    classical: {F, X};  quantum: (i/hbar)[F, X] = -moyal(F, X).
    """
    if mode == "classical":
        return poisson_bracket(F, X, cap)
    if mode == "quantum":
        return -moyal_bracket(F, X, cap)
    raise ValueError(f"unknown mode {mode!r}")


def lie_transform(H, F, cap, mode="classical"):
    """Transform H by the generator F, truncated at grade ``cap``.

    classical: sum_l ad_F**l H / l! with ad_F = {F, .}, i.e. H composed
    with the time-one flow of F.  quantum: the Weyl symbol of
    exp(iF/hbar) H exp(-iF/hbar).  Every term of F must have grade >= 3 so
    that each bracket raises the grade.
    """
    low = [key for key in F.terms if grade(key) <= 2]
    if low:
        raise ValueError(f"generator has terms of grade <= 2: {low[:3]}")
    result = H.truncate(cap)
    if F.is_zero():
        return result
    term = result
    level = 1
    while not term.is_zero():
        term = adjoint(F, term, cap, mode) * (1.0 / level)
        result = result + term
        level += 1
    return result


# ---------------------------------------------------------------------------
# ladder words and Weyl ordering
# ---------------------------------------------------------------------------

def ladder_symbol(n, index, dagger):
    """Weyl symbol of a_index (z) or a_index^* (zbar)."""
    e = tuple(1 if i == index else 0 for i in range(n))
    zero = (0,) * n
    return PhasePoly.monomial(n, zero, e) if dagger else PhasePoly.monomial(n, e, zero)


def _parse_word(word):
    out = []
    for item in word:
        if isinstance(item, str):
            dagger = item.endswith("*")
            out.append((int(item.strip("a*")), dagger))
        else:
            out.append((int(item[0]), bool(item[1])))
    return out


def ladder_to_weyl(word, n=None):
    """Weyl symbol of an ordered product of ladder operators.

    ``word`` is a sequence of ``(index, dagger)`` pairs (0-based index) or
    strings like ``"a0"`` / ``"a0*"``; the leftmost factor acts last.
    """
    factors = _parse_word(word)
    if n is None:
        n = max((i for i, _ in factors), default=0) + 1
    out = PhasePoly.constant(n, 1.0)
    for index, dagger in factors:
        out = star(out, ladder_symbol(n, index, dagger))
    return out


def normal_ordered_to_weyl(n, coeffs):
    """Weyl symbol of sum c * hbar**p * prod_i (a_i^*)**k_i a_i**j_i.

    ``coeffs`` maps (p, j, k) to c.
    """
    out = PhasePoly.zero(n)
    for (p, j, k), c in coeffs.items():
        word = []
        for i in range(n):
            word += [(i, True)] * k[i]
        for i in range(n):
            word += [(i, False)] * j[i]
        sym = ladder_to_weyl(word, n)
        out = out + mul(sym, _hbar_power(n, p)) * c
    return out


def _hbar_power(n, p):
    zero = (0,) * n
    return PhasePoly(n, {(p, zero, zero, 0, 0): 1.0})


def weyl_to_normal_ordered(poly):
    """Inverse of ``normal_ordered_to_weyl`` for time-independent symbols."""
    if poly.has_time():
        raise ValueError("normal ordering is only defined here for z, zbar symbols")
    n = poly.n
    rest = dict(poly.terms)
    out = defaultdict(complex)
    while rest:
        # peel off the term of largest polynomial degree
        key = max(rest, key=lambda kk: (sum(kk[1]) + sum(kk[2]), kk))
        c = rest.pop(key)
        if abs(c) == 0:
            continue
        p, j, k, _, _ = key
        out[(p, j, k)] += c
        sym = normal_ordered_to_weyl(n, {(p, j, k): 1.0})
        for key2, c2 in sym.terms.items():
            if key2 == key:
                continue
            rest[key2] = rest.get(key2, 0.0) - c * c2
            if abs(rest[key2]) < 1e-14:
                del rest[key2]
    return {key: c for key, c in out.items() if abs(c) > 1e-14}


# ---------------------------------------------------------------------------
# action polynomials and diagonal matrix elements
# ---------------------------------------------------------------------------

class ActionPoly:
    """Polynomial in actions A_1..A_n, tau and hbar.

    Keys are ``(l, s, p)`` for A**l tau**s hbar**p.  For quantum data the
    variables are read as the operators P_i, D_t and hbar.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n, terms=None):
        self.n = n
        clean = {}
        for (l, s, p), c in (terms or {}).items():
            key = (tuple(int(v) for v in l), int(s), int(p))
            clean[key] = clean.get(key, 0.0) + c
        peak = max((abs(c) for c in clean.values()), default=0.0)
        self.terms = {k: complex(c) for k, c in clean.items() if abs(c) > ZERO_TOL * peak}

    def __add__(self, other):
        out = dict(self.terms)
        for key, c in other.terms.items():
            out[key] = out.get(key, 0.0) + c
        return ActionPoly(self.n, out)

    def __neg__(self):
        return ActionPoly(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return ActionPoly(self.n, {k: c * scalar for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        shown = ", ".join(f"{k}: {c:.6g}" for k, c in list(self)[:6])
        return f"ActionPoly(n={self.n}, {{{shown}}})"

    def coeff(self, key):
        return self.terms.get(key, 0.0)

    def max_abs(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def grade_of(self, key):
        l, s, p = key
        return 2 * sum(l) + 2 * s + 2 * p

    def order_part(self, r):
        return ActionPoly(self.n, {k: c for k, c in self.terms.items() if self.grade_of(k) == r})

    def truncate(self, r):
        return ActionPoly(self.n, {k: c for k, c in self.terms.items() if self.grade_of(k) <= r})

    def hbar_slice(self, p):
        return ActionPoly(self.n, {k: c for k, c in self.terms.items() if k[2] == p})

    def evaluate(self, actions, tau=0.0, hbar=0.0):
        a = np.asarray(actions, dtype=float)
        total = 0.0
        for (l, s, p), c in self.terms.items():
            total += c * np.prod(a ** np.array(l)) * tau ** s * hbar ** p
        return complex(total)

    def is_real(self, tol=1e-10):
        scale = max(self.max_abs(), 1.0)
        return all(abs(np.imag(c)) <= tol * scale for c in self.terms.values())

    def to_records(self):
        return [{"l": list(l), "s": s, "p": p, "re": float(np.real(c)), "im": float(np.imag(c))}
                for (l, s, p), c in self]

    @classmethod
    def from_records(cls, n, records):
        return cls(n, {(tuple(r["l"]), r.get("s", 0), r.get("p", 0)):
                       complex(r.get("re", 0.0), r.get("im", 0.0)) for r in records})


def action_from_diagonal(poly):
    """Classical reading of the diagonal part: (z zbar)**l tau**s hbar**p -> A**l tau**s hbar**p."""
    return ActionPoly(poly.n, {(j, m, p): c for (p, j, k, m, d), c in poly.terms.items()
                               if j == k and d == 0})


def diagonal_from_action(ap, max_order=None):
    return PhasePoly(ap.n, {(p, l, l, s, 0): c for (l, s, p), c in ap.terms.items()}, max_order)


@functools.lru_cache(maxsize=None)
def _operator_power_symbol(l):
    """Weyl symbol of P**l in one dof, as {a: c} meaning c * hbar**(l-a) * w**a, w = z zbar."""
    w = PhasePoly.monomial(1, (1,), (1,))
    sym = PhasePoly.constant(1, 1.0)
    for _ in range(l):
        sym = star(sym, w)
    out = {}
    for (p, j, k, m, d), c in sym.terms.items():
        if j != k:
            raise AssertionError("power of P has an off-diagonal symbol")
        out[j[0]] = out.get(j[0], 0.0) + float(np.real(c))
    return out


@functools.lru_cache(maxsize=None)
def _weyl_power_in_operators(j):
    """Op^W(w**j) = sum_a c_a hbar**(j-a) P**a in one dof; returns {a: c_a}."""
    out = {j: 1.0}
    for a, c in _operator_power_symbol(j).items():
        if a == j:
            continue
        for b, cb in _weyl_power_in_operators(a).items():
            out[b] = out.get(b, 0.0) - c * cb
    return {a: c for a, c in out.items() if c != 0.0}


def weyl_to_operator(poly):
    """Rewrite the diagonal part of a Weyl symbol as a polynomial in P_i, D_t, hbar.

    Off-diagonal keys are ignored (their diagonal matrix elements vanish).
    """
    out = defaultdict(complex)
    for (p, j, k, m, d), c in poly.terms.items():
        if j != k or d != 0:
            continue
        factors = [_weyl_power_in_operators(e).items() for e in j]
        for combo in itertools.product(*factors):
            coef = c
            extra = 0
            l = []
            for e, (a, ca) in zip(j, combo):
                coef *= ca
                extra += e - a
                l.append(a)
            out[(tuple(l), m, p + extra)] += coef
    return ActionPoly(poly.n, out)


def operator_to_weyl(ap, max_order=None):
    """Weyl symbol of a polynomial in P_i, D_t, hbar (inverse of ``weyl_to_operator``)."""
    out = defaultdict(complex)
    for (l, s, p), c in ap.terms.items():
        factors = [_operator_power_symbol(e).items() for e in l]
        for combo in itertools.product(*factors):
            coef = c
            extra = 0
            j = []
            for e, (a, ca) in zip(l, combo):
                coef *= ca
                extra += e - a
                j.append(a)
            j = tuple(j)
            out[(p + extra, j, j, s, 0)] += coef
    return PhasePoly(ap.n, out, max_order)


@dataclass(frozen=True)
class FockState:
    """Joint eigenvector |mu, nu> of the P_i and D_t."""

    mu: tuple
    nu: int = 0
    hbar: float = 1.0

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if any(m < 0 for m in self.mu):
            raise ValueError("mu must be non-negative")


def diagonal_eval(f, state):
    """<mu, nu| Op^W(f) |mu, nu>, exact for polynomial symbols."""
    if len(state.mu) != f.n:
        raise ValueError("state dimension does not match the polynomial")
    ap = weyl_to_operator(f)
    actions = (np.asarray(state.mu, dtype=float) + 0.5) * state.hbar
    return ap.evaluate(actions, TWO_PI * state.nu * state.hbar, state.hbar)


# ---------------------------------------------------------------------------
# changes of variables
# ---------------------------------------------------------------------------

def ladder_matrix(n):
    """W with (z, zbar) = W (x, xi)."""
    eye = np.eye(n)
    return np.block([[eye, 1j * eye], [eye, -1j * eye]]) / math.sqrt(2.0)


def real_to_ladder(S):
    """Matrix C acting on (z, zbar) for a real linear map S acting on (x, xi)."""
    S = np.asarray(S, dtype=float)
    W = ladder_matrix(S.shape[0] // 2)
    return W @ S @ np.linalg.inv(W)


def linear_substitution(poly, C, cap=None):
    """Substitute old (z, zbar) = C @ new (z, zbar) into a symbol.

    tau, t and hbar are left untouched.  Grades are preserved.
    """
    n = poly.n
    C = np.asarray(C, dtype=complex)
    zero = (0,) * n

    def unit(b):
        e = tuple(1 if i == b % n else 0 for i in range(n))
        return (0, e, zero, 0, 0) if b < n else (0, zero, e, 0, 0)

    forms = [PhasePoly(n, {unit(b): C[a, b] for b in range(2 * n)}) for a in range(2 * n)]
    powers = [[PhasePoly.constant(n, 1.0)] for _ in range(2 * n)]

    def power(a, e):
        while len(powers[a]) <= e:
            powers[a].append(mul(powers[a][-1], forms[a]))
        return powers[a][e]

    out = defaultdict(complex)
    for (p, j, k, m, d), c in poly.terms.items():
        prod = PhasePoly.constant(n, c)
        for a, e in enumerate(tuple(j) + tuple(k)):
            if e:
                prod = mul(prod, power(a, e))
        for (_, j2, k2, _, _), c2 in prod.terms.items():
            out[(p, j2, k2, m, d)] += c2
    return PhasePoly(n, out, _min_cap(cap, poly.max_order), poly.fourier_band, poly.truncation)


def from_real_monomials(n, coeffs, max_order=None):
    """Symbol of sum c * x**alpha * xi**beta written in z, zbar.

    ``coeffs`` maps (alpha, beta) to c; x = (z + zbar)/sqrt 2 and
    xi = (z - zbar)/(i sqrt 2).
    """
    zero = (0,) * n
    s = 1.0 / math.sqrt(2.0)

    def e(i):
        return tuple(1 if q == i else 0 for q in range(n))

    xs = [PhasePoly(n, {(0, e(i), zero, 0, 0): s, (0, zero, e(i), 0, 0): s}) for i in range(n)]
    xis = [PhasePoly(n, {(0, e(i), zero, 0, 0): -1j * s, (0, zero, e(i), 0, 0): 1j * s}) for i in range(n)]
    out = PhasePoly.zero(n, max_order)
    for (alpha, beta), c in coeffs.items():
        term = PhasePoly.constant(n, c)
        for i in range(n):
            for _ in range(alpha[i]):
                term = mul(term, xs[i])
            for _ in range(beta[i]):
                term = mul(term, xis[i])
        out = out + term
    return out.with_caps(max_order, None)


def quadratic_symbol(A):
    """Symbol of v^T A v / 2 with v = (x, xi)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0] // 2
    coeffs = {}
    for a in range(2 * n):
        for b in range(2 * n):
            if A[a, b] == 0.0:
                continue
            alpha = [0] * n
            beta = [0] * n
            for idx in (a, b):
                if idx < n:
                    alpha[idx] += 1
                else:
                    beta[idx - n] += 1
            key = (tuple(alpha), tuple(beta))
            coeffs[key] = coeffs.get(key, 0.0) + 0.5 * A[a, b]
    return from_real_monomials(n, coeffs)


def harmonic_part(theta, E=0.0, periodic=False):
    """E + sum theta_i z_i zbar_i (+ tau)."""
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    zero = (0,) * n
    terms = {(0, zero, zero, 0, 0): E}
    for i, th in enumerate(theta):
        e = tuple(1 if q == i else 0 for q in range(n))
        terms[(0, e, e, 0, 0)] = th
    if periodic:
        terms[(0, zero, zero, 1, 0)] = 1.0
    return PhasePoly(n, terms)
