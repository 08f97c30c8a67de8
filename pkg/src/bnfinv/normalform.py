"""Classical and quantum Birkhoff normal forms.

The Hamiltonian is E + sum theta_i z_i zbar_i (+ tau in the periodic setting)
plus a remainder of grade >= 3.  A single generator F = f_3 + f_4 + ... is
built order by order: at order r the grade-r part G of the transformed
Hamiltonian is split into its resonant part and a part removed by solving

    bracket_with_h0(f_r) = G - G_resonant

one monomial at a time.  Generators never contain resonant keys.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .phasepoly import (
    TWO_PI, ActionPoly, PhasePoly, action_from_diagonal, adjoint, diagonal_from_action, grade,
    harmonic_part, is_resonant, lie_transform, mul, weyl_to_operator,
)

SETTINGS = ("well", "periodic", "schrodinger")
MODES = ("classical", "quantum")
DEFAULT_DIVISOR_THRESHOLD = 1e-8


class SmallDivisorError(ArithmeticError):
    def __init__(self, key, divisor, order, completed):
        self.key = key
        self.divisor = divisor
        self.order = order
        self.completed = completed
        super().__init__(f"small divisor {abs(divisor):.3e} for key {key} at order {order} "
                         f"(orders <= {completed} completed)")


@dataclass
class HamiltonianSpec:
    """E + harmonic part + ``taylor``; ``order`` and ``band`` cap the computation."""

    setting: str
    theta: np.ndarray
    taylor: PhasePoly
    E: float = 0.0
    order: int = 4
    band: int | None = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        self.theta = np.asarray(self.theta, dtype=float)
        if np.any(self.theta <= 0):
            raise ValueError("frequencies must be positive")
        if self.taylor.n != len(self.theta):
            raise ValueError("taylor data and theta disagree on the number of dof")
        low = [key for key in self.taylor.terms if grade(key) <= 2]
        if low:
            raise ValueError(f"remainder has terms of grade <= 2: {low[:3]}")
        if self.setting != "periodic" and self.taylor.has_time():
            raise ValueError("time-dependent terms need the periodic setting")

    @property
    def n(self):
        return len(self.theta)

    @property
    def periodic(self):
        return self.setting == "periodic"

    def h0(self):
        return harmonic_part(self.theta, 0.0, self.periodic)

    def symbol(self):
        full = harmonic_part(self.theta, self.E, self.periodic) + self.taylor
        return full.with_caps(self.order, self.band)

    def to_dict(self):
        return {"setting": self.setting, "n": self.n, "theta": [float(t) for t in self.theta],
                "E": float(self.E), "order": self.order, "band": self.band,
                "taylor": self.taylor.to_records()}

    @classmethod
    def from_dict(cls, data):
        n = int(data["n"])
        return cls(data["setting"], data["theta"], PhasePoly.from_records(n, data.get("taylor", [])),
                   float(data.get("E", 0.0)), int(data.get("order", 4)), data.get("band"))


@dataclass
class NormalFormResult:
    setting: str
    mode: str
    theta: np.ndarray
    E: float
    order: int
    h: ActionPoly
    h_symbol: PhasePoly
    generators: dict
    divisor_log: list = field(default_factory=list)
    residual: float = 0.0
    truncation: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.theta)

    def generator(self):
        """Sum of the per-order generators."""
        total = PhasePoly.zero(self.n)
        for f in self.generators.values():
            total = total + f
        return total

    def min_divisor(self):
        return min((d for _, d in self.divisor_log), default=float("inf"))

    def to_dict(self):
        return {
            "setting": self.setting, "mode": self.mode, "n": self.n,
            "theta": [float(t) for t in self.theta], "E": float(self.E), "order": self.order,
            "h": self.h.to_records(), "h_symbol": self.h_symbol.to_records(),
            "generators": {str(r): f.to_records() for r, f in sorted(self.generators.items())},
            "divisor_log": [{"key": _key_record(k), "divisor": float(d)} for k, d in self.divisor_log],
            "residual": float(self.residual), "truncation_report": self.truncation,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        n = int(data["n"])
        gens = {int(r): PhasePoly.from_records(n, recs) for r, recs in data["generators"].items()}
        log = [(_key_from_record(e["key"]), e["divisor"]) for e in data.get("divisor_log", [])]
        return cls(data["setting"], data["mode"], np.asarray(data["theta"], dtype=float),
                   data["E"], data["order"], ActionPoly.from_records(n, data["h"]),
                   PhasePoly.from_records(n, data["h_symbol"]), gens, log,
                   data.get("residual", 0.0), data.get("truncation_report", {}))


def _key_record(key):
    p, j, k, m, d = key
    return {"p": p, "j": list(j), "k": list(k), "m": m, "d": d}


def _key_from_record(r):
    return (r["p"], tuple(r["j"]), tuple(r["k"]), r["m"], r["d"])


# ---------------------------------------------------------------------------
# homological equation
# ---------------------------------------------------------------------------

def bracket_with_h0(F, h0, mode="classical"):
    """The linear map F -> -adjoint(F, H0); classically {H0, F}."""
    return -adjoint(F, h0, mode=mode)


def homological_eigenvalue(key, h0, mode="classical"):
    """Eigenvalue of bracket_with_h0 on the monomial ``key``, read off the bracket itself."""
    image = bracket_with_h0(PhasePoly(h0.n, {key: 1.0}), h0, mode)
    extra = set(image.terms) - {key}
    if extra:
        raise AssertionError(f"monomial {key} is not an eigenvector: {sorted(extra)[:3]}")
    return image.coeff(key)


def solve_homological(G, theta, periodic=False, mode="classical",
                      threshold=DEFAULT_DIVISOR_THRESHOLD, order=None, completed=None, log=None):
    """Split G = bracket_with_h0(F) + G1 with G1 resonant and F free of resonant keys.

    Returns ``(F, G1)`` with G1 as an ActionPoly.  Raises SmallDivisorError
    naming the key whose divisor falls below ``threshold``.
    """
    h0 = harmonic_part(theta, 0.0, periodic)
    cache = {}
    f_terms, g1_terms = {}, {}
    for key, c in G.terms.items():
        if is_resonant(key):
            g1_terms[key] = c
            continue
        shape = (tuple(a - b for a, b in zip(key[1], key[2])), key[4])
        if shape not in cache:
            cache[shape] = homological_eigenvalue(key, h0, mode)
        lam = cache[shape]
        if abs(lam) < threshold:
            raise SmallDivisorError(key, lam, order if order is not None else grade(key),
                                    completed if completed is not None else grade(key) - 1)
        if log is not None:
            log.append((key, abs(lam)))
        f_terms[key] = c / lam
    F = PhasePoly(G.n, f_terms)
    G1 = action_from_diagonal(PhasePoly(G.n, g1_terms))
    return F, G1


def homological_residual(F, G, G1, theta, periodic=False, mode="classical"):
    h0 = harmonic_part(theta, 0.0, periodic)
    diff = bracket_with_h0(F, h0, mode) - G + diagonal_from_action(G1)
    return diff.max_abs()


# ---------------------------------------------------------------------------
# normal forms
# ---------------------------------------------------------------------------

def _birkhoff(spec, mode, threshold):
    H = spec.symbol()
    n = spec.n
    F = PhasePoly.zero(n)
    generators, log, residuals = {}, [], {}
    completed = 2
    for r in range(3, spec.order + 1):
        G = lie_transform(H, F, r, mode).order_part(r)
        f_r, g1 = solve_homological(G, spec.theta, spec.periodic, mode, threshold, r, completed, log)
        residuals[r] = homological_residual(f_r, G, g1, spec.theta, spec.periodic, mode)
        generators[r] = f_r
        F = F + f_r
        completed = r
    h_symbol = lie_transform(H, F, spec.order, mode)
    off = h_symbol.off_diagonal_part()
    h_symbol = h_symbol.diagonal_part()
    h = action_from_diagonal(h_symbol) if mode == "classical" else weyl_to_operator(h_symbol)
    trunc = {"order_cap": spec.order, "band_cap": spec.band,
             "terms_dropped_above_order": h_symbol.truncation.get("order", 0),
             "terms_dropped_above_band": h_symbol.truncation.get("band", 0)}
    trunc["homological_residual"] = max(residuals.values(), default=0.0)
    return NormalFormResult(spec.setting, mode, spec.theta.copy(), spec.E, spec.order, h,
                            h_symbol, generators, log, off.max_abs(), trunc)


def birkhoff_classical(spec, threshold=DEFAULT_DIVISOR_THRESHOLD):
    """Classical normal form; ``h`` is a polynomial in the actions z_i zbar_i and tau."""
    return _birkhoff(spec, "classical", threshold)


def birkhoff_quantum(spec, threshold=DEFAULT_DIVISOR_THRESHOLD):
    """Quantum normal form of the Weyl symbol ``spec.symbol()``.

    ``h`` is expressed in the operators P_i (eigenvalues (mu_i + 1/2) hbar),
    D_t and hbar, so eigenvalues are ``h.evaluate((mu + 1/2) hbar, 2 pi nu hbar, hbar)``.
    """
    return _birkhoff(spec, "quantum", threshold)


def birkhoff(spec, mode="classical", threshold=DEFAULT_DIVISOR_THRESHOLD):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    return _birkhoff(spec, mode, threshold)


def normal_form_check(spec, result):
    """Largest off-diagonal coefficient of the transformed Hamiltonian up to the cap."""
    out = lie_transform(spec.symbol(), result.generator(), spec.order, result.mode)
    return out.off_diagonal_part().max_abs()


# ---------------------------------------------------------------------------
# shifting the angles by whole turns in the periodic setting
# ---------------------------------------------------------------------------

def pullback_angle_shift(poly, shift, max_order=None):
    """Compose with z_i -> exp(2 pi i k_i t) z_i, tau -> tau + 2 pi sum k_i z_i zbar_i.

    The map is symplectic and sends sum theta_i z_i zbar_i + tau to
    sum (theta_i + 2 pi k_i) z_i zbar_i + tau.
    """
    shift = tuple(int(s) for s in shift)
    n = poly.n
    zero = (0,) * n
    new_tau = PhasePoly(n, {(0, zero, zero, 1, 0): 1.0})
    for i, s in enumerate(shift):
        if s:
            e = tuple(1 if q == i else 0 for q in range(n))
            new_tau = new_tau + PhasePoly(n, {(0, e, e, 0, 0): TWO_PI * s})
    powers = [PhasePoly.constant(n, 1.0)]
    out = PhasePoly.zero(n)
    for (p, j, k, m, d), c in poly.terms.items():
        while len(powers) <= m:
            powers.append(mul(powers[-1], new_tau))
        d_new = d + sum(s * (a - b) for s, a, b in zip(shift, j, k))
        base = PhasePoly(n, {(p, j, k, 0, d_new): c})
        out = out + mul(base, powers[m])
    return out.with_caps(max_order)


def shift_hamiltonian(spec, shift):
    """The periodic Hamiltonian composed with the angle shift, as a new spec."""
    if not spec.periodic:
        raise ValueError("angle shifts need the periodic setting")
    shift = np.asarray(shift, dtype=int)
    return HamiltonianSpec(spec.setting, spec.theta + TWO_PI * shift,
                           pullback_angle_shift(spec.taylor, shift), spec.E, spec.order, spec.band)


def realize_angle_shift(result, shift):
    """Conjugate a periodic classical normal form by the angle shift.

    Both h and the generators are pulled back; the result coincides with the
    normal form recomputed from ``shift_hamiltonian``.
    """
    if result.setting != "periodic":
        raise ValueError("angle shifts need the periodic setting")
    if result.mode != "classical":
        # the shift mixes t into z, so Weyl symbols do not transform by plain pullback
        raise ValueError("angle shifts are only realized on classical normal forms")
    shift = np.asarray(shift, dtype=int)
    theta = result.theta + TWO_PI * shift
    h_symbol = pullback_angle_shift(result.h_symbol, shift, result.order)
    gens = {r: pullback_angle_shift(f, shift) for r, f in result.generators.items()}
    h = action_from_diagonal(h_symbol)
    log = [(key, abs(float(theta @ (np.array(key[1]) - np.array(key[2]))) - TWO_PI * key[4]))
           for f in gens.values() for key in f.terms]
    return NormalFormResult(result.setting, result.mode, theta, result.E, result.order, h, h_symbol,
                            gens, log, result.residual, dict(result.truncation))
