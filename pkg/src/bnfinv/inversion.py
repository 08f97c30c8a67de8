"""Inverse problems: frequencies from levels, Taylor data from normal forms and averages."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .fermi import substitute_x_poly, x_poly_symbol
from .normalform import HamiltonianSpec, birkhoff
from .observables import (
    average_cap, forward_data, kernel_points, schrodinger_family, trace_index_set, trace_kernel_u,
)
from .phasepoly import (
    ActionPoly, PhasePoly, action_from_diagonal, adjoint, diagonal_from_action, grade,
    harmonic_part, is_resonant, lie_transform, operator_to_weyl, weyl_to_operator,
)


class InversionError(ValueError):
    pass


class RankDeficiencyError(InversionError):
    def __init__(self, message, keys=()):
        self.keys = list(keys)
        super().__init__(message if not self.keys else f"{message}: {self.keys[:6]}")


class ResidualError(InversionError):
    pass


class AmbiguityError(InversionError):
    pass


@dataclass
class RecoveredTaylor:
    setting: str
    coefficients: dict
    achieved_order: int
    residual_report: dict = field(default_factory=dict)

    def to_dict(self):
        coeffs = self.coefficients
        if isinstance(coeffs, PhasePoly):
            recs = coeffs.to_records()
        else:
            recs = [{"k": list(k), "value": float(np.real(v))} for k, v in sorted(coeffs.items())]
        return {"setting": self.setting, "coefficients": recs, "achieved_order": self.achieved_order,
                "residual_report": {k: float(v) for k, v in self.residual_report.items()}}


# ---------------------------------------------------------------------------
# frequencies
# ---------------------------------------------------------------------------

def _lattice(theta, top):
    """Sorted nonnegative integer combinations of theta up to ``top``."""
    points = [0.0]
    for th in theta:
        points = [p + c * th for p in points for c in range(int(top / th) + 1) if p + c * th <= top]
    return np.sort(np.array(points))


def recover_frequencies(levels, hbar, n, tol=1e-6):
    """Frequencies from the bottom of a spectrum E0 + sum theta_i (mu_i + 1/2) hbar.

    Gaps to the ground level are read in units of hbar; each new frequency is
    the smallest gap not already on the lattice spanned by the previous ones.
    """
    levels = np.sort(np.asarray(levels, dtype=float))
    if levels.size < 2:
        raise InversionError("at least two levels are needed")
    gaps = (levels - levels[0]) / hbar
    found = []
    for _ in range(n):
        lattice = _lattice(found, gaps[-1] + 1.0) if found else np.array([0.0])
        new = None
        for g in gaps[1:]:
            dist = np.min(np.abs(lattice - g))
            if dist <= tol:
                continue
            if dist <= 10 * tol:
                raise AmbiguityError(f"gap {g:.12g} lies {dist:.3g} from the lattice, inside the ambiguity band")
            new = g
            break
        if new is None:
            raise InversionError(f"not enough levels to expose frequency {len(found) + 1}")
        found.append(new)
    return np.sort(np.array(found))


# ---------------------------------------------------------------------------
# trace coefficients
# ---------------------------------------------------------------------------

def unmix_trace_coefficients(samples, theta, order, rcond=1e-12, nu_terms=False):
    """Least-squares recovery of b[k, m, s] from samples {(p, l): X_p(l)}.

    By default only the m = 0 keys are solved for: the m > 0 kernels are exact
    combinations of those (see ``collapse_nu_terms``), so the result is the
    collapsed coefficient set.  ``nu_terms=True`` asks for the full set and
    raises ``RankDeficiencyError`` naming the inseparable keys.
    Returns ``(b, report)`` with per-p condition numbers and residuals.
    """
    theta = np.asarray(theta, dtype=float)
    dof = len(theta)
    b, report = {}, {}
    for p in range(1, order + 1):
        times = sorted(l for (q, l) in samples if q == p)
        if not times:
            continue
        index = [(k, m) for k, m in trace_index_set(dof, p) if nu_terms or m == 0]
        M = np.zeros((len(times), len(index)), dtype=complex)
        for r, l in enumerate(times):
            x = kernel_points(l, theta)
            for c, (k, m) in enumerate(index):
                M[r, c] = trace_kernel_u(k, m, x, theta)
        rhs = np.array([samples[(p, l)] for l in times], dtype=complex)
        sol, _, rank, sv = np.linalg.lstsq(M, rhs, rcond=rcond)
        if rank < len(index):
            dependent = [(k, m, p - sum(k) - m) for k, m in index if m > 0]
            raise RankDeficiencyError(f"trace system for p={p} has rank {rank} < {len(index)}",
                                      dependent or index)
        report[f"cond_p{p}"] = float(sv[0] / sv[-1])
        report[f"residual_p{p}"] = float(np.max(np.abs(M @ sol - rhs), initial=0.0))
        for (k, m), v in zip(index, sol):
            b[(k, m, p - sum(k) - m)] = complex(v)
    return b, report


# ---------------------------------------------------------------------------
# shared linear-extraction helpers
# ---------------------------------------------------------------------------

def _grade_slice(ap, g):
    return {key: c for key, c in ap.terms.items() if ap.grade_of(key) == g}


def _solve(columns, known, data, names):
    """Least squares for x in known + sum_c x_c columns[c] = data over the union of keys."""
    rows = set(data) | set(known)
    for col in columns:
        rows |= set(col)
    rows = sorted(rows)
    if not names:
        return np.zeros(0), 0.0
    A = np.array([[col.get(r, 0.0) for col in columns] for r in rows], dtype=complex).reshape(len(rows), len(columns))
    rhs = np.array([data.get(r, 0.0) - known.get(r, 0.0) for r in rows], dtype=complex)
    if A.size == 0:
        raise RankDeficiencyError("no data constrain the unknowns", names)
    scale = np.max(np.abs(A)) if A.size else 1.0
    sol, _, rank, sv = np.linalg.lstsq(A, rhs, rcond=1e-10)
    if rank < len(names):
        # columns with no support, or the trailing right-singular directions
        empty = [nm for nm, col in zip(names, columns) if not any(abs(v) > 1e-14 * scale for v in col.values())]
        raise RankDeficiencyError(f"response system has rank {rank} < {len(names)}", empty or names)
    residual = float(np.max(np.abs(A @ sol - rhs), initial=0.0))
    return sol, residual


# ---------------------------------------------------------------------------
# Schroedinger potentials
# ---------------------------------------------------------------------------

def _x_exponents(dof, total):
    if dof == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _x_exponents(dof - 1, total - first):
            yield (first,) + rest


def _schrodinger_forward(coeffs, theta, order):
    dof = len(theta)
    spec = HamiltonianSpec("schrodinger", theta, x_poly_symbol(dof, coeffs, order), order=order)
    nf = birkhoff(spec, "classical")
    averages = {obs.m: forward_data(obs, nf, average_cap(obs, order)) for obs in schrodinger_family(dof)}
    return nf.h, averages


def _schrodinger_rows(h, averages, r):
    rows = {("h",) + key: c for key, c in _grade_slice(h, r).items()}
    for m, ap in averages.items():
        for key, c in _grade_slice(ap, r + sum(m) - 2).items():
            rows[("avg", m) + key] = c
    return rows


def _complex_to_real(d):
    out = {}
    for key, c in d.items():
        out[key + ("re",)] = float(np.real(c))
        out[key + ("im",)] = float(np.imag(c))
    return out


def invert_schrodinger(bnf, averages, theta, order, tol=1e-8):
    """Taylor coefficients a_k of R(x) in Fermi coordinates (H = sum theta (x^2 + xi^2)/2 + R).

    ``bnf`` is the classical normal form as an ActionPoly and ``averages``
    maps m in {0,1}^n minus 0 to the averaged observable z**m.  The data at
    each order are affine in the unknown a_k of that order; the affine map is
    probed through the forward path and solved exactly.
    """
    theta = np.asarray(theta, dtype=float)
    dof = len(theta)
    needed = [m for m in itertools.product((0, 1), repeat=dof) if any(m)]
    missing = [m for m in needed if tuple(m) not in averages]
    if missing:
        raise InversionError(f"missing averages for m = {missing}")
    averages = {tuple(m): averages[tuple(m)] for m in needed}
    coeffs = {}
    report = {}
    for r in range(3, order + 1):
        data = _complex_to_real(_schrodinger_rows(bnf, averages, r))
        base = _complex_to_real(_schrodinger_rows(*_schrodinger_forward(coeffs, theta, r), r))
        names = list(_x_exponents(dof, r))
        columns = []
        for k in names:
            trial = dict(coeffs)
            trial[k] = 1.0
            probe = _complex_to_real(_schrodinger_rows(*_schrodinger_forward(trial, theta, r), r))
            keys = set(probe) | set(base)
            columns.append({key: probe.get(key, 0.0) - base.get(key, 0.0) for key in keys})
        sol, residual = _solve(columns, base, data, names)
        scale = max(max((abs(v) for v in data.values()), default=0.0), 1.0)
        report[f"order_{r}"] = residual
        if residual > tol * scale:
            raise ResidualError(f"order {r}: data inconsistent with a potential of this form "
                                f"(residual {residual:.3e})")
        for k, v in zip(names, sol):
            if abs(v) > 0.0:
                coeffs[k] = float(np.real(v))
    h_check, avg_check = _schrodinger_forward(coeffs, theta, order)
    report["forward_bnf"] = float((h_check.truncate(order) - bnf.truncate(order)).max_abs())
    report["forward_averages"] = max(
        float((avg_check[m] - averages[m]).truncate(order + sum(m) - 2).max_abs()) for m in needed)
    scale = max([1.0, bnf.max_abs()] + [a.max_abs() for a in averages.values()])
    if max(report["forward_bnf"], report["forward_averages"]) > tol * scale:
        raise ResidualError("recovered potential does not reproduce the data "
                            f"(bnf {report['forward_bnf']:.3e}, averages {report['forward_averages']:.3e})")
    return RecoveredTaylor("schrodinger", coeffs, order, report)


def to_original_coordinates(coeffs, frame):
    """Re-express Fermi-coordinate Taylor data in the original x (inverse of the Fermi frame)."""
    back = frame.U.T * np.sqrt(frame.theta)[:, None]  # x_fermi = diag(sqrt theta) U^T x
    return substitute_x_poly(coeffs, back)


# ---------------------------------------------------------------------------
# general Hamiltonians
# ---------------------------------------------------------------------------

def generator_keys(dof, r, periodic, band, mode):
    """Nonresonant keys of grade r allowed in a generator."""
    keys = []
    hbar_range = range(r // 2 + 1) if mode == "quantum" else [0]
    for p in hbar_range:
        for s in (range((r - 2 * p) // 2 + 1) if periodic else [0]):
            rest = r - 2 * p - 2 * s
            if rest < 0:
                continue
            for jk in _x_exponents(2 * dof, rest):
                ds = range(-band, band + 1) if periodic else [0]
                for d in ds:
                    key = (p, jk[:dof], jk[dof:], s, d)
                    if not is_resonant(key):
                        keys.append(key)
    return keys


def _reading(poly, mode):
    return action_from_diagonal(poly) if mode == "classical" else weyl_to_operator(poly)


def _forward_grade(observable, generator, g, mode):
    out = lie_transform(observable.payload, generator, g, mode)
    return _grade_slice(_reading(out, mode), g)


def response_system(family, data, F, r, dof, periodic, band, mode):
    """Unknown keys of order r, their response columns, the known part and the target.

    Rows are (observable label, data key) pairs at grade r + weight - 2.
    """
    names = generator_keys(dof, r, periodic, band, mode)
    monos = [PhasePoly(dof, {key: 1.0}) for key in names]
    columns = [dict() for _ in names]
    known, target = {}, {}
    for obs in family:
        g = r + obs.weight - 2
        tag = obs.label
        for key, c in _forward_grade(obs, F, g, mode).items():
            known[(tag,) + key] = c
        if data is not None:
            for key, c in _grade_slice(data[obs.label], g).items():
                target[(tag,) + key] = c
        for col, mono in zip(columns, monos):
            resp = _reading(adjoint(mono, obs.payload, g, mode), mode)
            for key, c in _grade_slice(resp, g).items():
                col[(tag,) + key] = c
    return names, columns, known, target


def response_matrix(columns):
    rows = sorted(set().union(*columns)) if columns else []
    return np.array([[col.get(r, 0.0) for col in columns] for r in rows], dtype=complex).reshape(len(rows), len(columns))


def invert_general(h, data, family, theta, order, setting="well", mode="classical", band=0,
                   E=0.0, tol=1e-8):
    """Recover the Taylor data of H from its normal form and averaged observables.

    ``h`` is the normal form (ActionPoly in actions, or in operators when
    ``mode`` is quantum), ``data`` maps observable labels to the averages or
    diagonal matrix elements, ``family`` lists the observables.  Generator
    coefficients are found order by order by exact linear extraction; the
    Hamiltonian is then h transformed back by the inverse generator.
    """
    theta = np.asarray(theta, dtype=float)
    dof = len(theta)
    periodic = setting == "periodic"
    missing = [obs.label for obs in family if obs.label not in data]
    if missing:
        raise InversionError(f"missing data for observables {missing[:5]}")
    F = PhasePoly.zero(dof)
    report = {}
    for r in range(3, order + 1):
        names, columns, known, target = response_system(family, data, F, r, dof, periodic, band, mode)
        sol, residual = _solve(columns, known, target, names)
        scale = max(max((abs(v) for v in target.values()), default=0.0), 1.0)
        report[f"order_{r}"] = residual
        if residual > tol * scale:
            raise ResidualError(f"order {r}: averages inconsistent with a symplectic conjugation "
                                f"(residual {residual:.3e})")
        F = F + PhasePoly(dof, {key: v for key, v in zip(names, sol)})
    mismatch, scale = 0.0, 1.0
    for obs in family:
        cap = order + obs.weight - 2
        forward = _reading(lie_transform(obs.payload, F, cap, mode), mode)
        given = data[obs.label]
        mismatch = max(mismatch, (forward - given).truncate(cap).max_abs())
        scale = max(scale, given.max_abs())
    report["forward_averages"] = float(mismatch)
    if mismatch > tol * scale:
        raise ResidualError(f"recovered generator does not reproduce the averages (mismatch {mismatch:.3e})")
    h_symbol = diagonal_from_action(h) if mode == "classical" else operator_to_weyl(h)
    H = lie_transform(h_symbol.truncate(order), -F, order, mode)
    remainder = H - harmonic_part(theta, E, periodic)
    low = remainder.select(lambda key: grade(key) <= 2)
    report["low_order_mismatch"] = low.max_abs()
    taylor = remainder.select(lambda key: grade(key) >= 3)
    return RecoveredTaylor(setting, taylor, order, report), F
