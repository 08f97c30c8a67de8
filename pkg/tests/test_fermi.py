import math
import warnings

import numpy as np
import pytest
import scipy.linalg as la

from bnfinv.fermi import (
    FermiError, block_determinant_sums, block_rotation, fermi_general, fermi_periodic,
    fermi_schrodinger, from_interleaved, invariants_from, invariants_from_records,
    invariants_to_records, loop_trace, reconstruct_symplectic, rotation_defect,
    schrodinger_symbol_check, spectral_derivative, standard_form, symplectic_residual,
    to_interleaved, williamson,
)
from bnfinv.phasepoly import (
    PhasePoly, from_real_monomials, harmonic_part, linear_substitution, quadratic_symbol,
    real_to_ladder,
)
from helpers import random_symplectic, random_pd


def test_williamson_identity():
    data = williamson(np.eye(2))
    assert np.allclose(data.lam, [1.0])
    assert symplectic_residual(data.S) < 1e-14
    assert np.allclose(data.S.T @ data.S, np.eye(2))


def test_williamson_diagonal_one_dof():
    a, b = 2.0, 0.5
    A = np.diag([a, b])
    data = williamson(A)
    assert abs(data.lam[0] - math.sqrt(a * b)) < 1e-14
    S = data.S
    assert symplectic_residual(S) < 1e-14
    assert np.max(np.abs(S.T @ A @ S - math.sqrt(a * b) * np.eye(2))) < 1e-14
    # S equals diag((b/a)^(1/4), (a/b)^(1/4)) up to a rotation
    ref = np.diag([(b / a) ** 0.25, (a / b) ** 0.25])
    assert rotation_defect(ref, S) < 1e-12


def test_williamson_frequencies_against_eigenvalues(rng):
    for n in (1, 2, 3, 4):
        for _ in range(5):
            A = random_pd(rng, 2 * n)
            data = williamson(A)
            J = standard_form(n)
            D = np.diag(np.concatenate([data.lam, data.lam]))
            assert data.residuals["symplectic"] <= 1e-10
            assert np.max(np.abs(data.S.T @ A @ data.S - D)) <= 1e-9
            freq = np.sort(np.abs(np.linalg.eigvals(J @ A).imag))[::2]
            assert np.max(np.abs(freq - data.lam)) < 1e-10
            inv_freq = np.sort(np.abs(np.linalg.eigvals(np.linalg.solve(A, J)).imag))[::2]
            assert np.max(np.abs(np.sort(1.0 / data.lam) - inv_freq)) < 1e-10


def test_williamson_invariant_under_symplectic_congruence(rng):
    A = random_pd(rng, 4)
    S = random_symplectic(rng, 2)
    assert np.allclose(williamson(A).lam, williamson(S.T @ A @ S).lam, atol=1e-10)


def test_williamson_errors_and_warning():
    with pytest.raises(FermiError):
        williamson(np.diag([1.0, -1.0]))
    with pytest.raises(FermiError):
        williamson(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        williamson(np.eye(4))
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_interleave_round_trip(rng):
    S = rng.normal(size=(6, 6))
    assert np.array_equal(from_interleaved(to_interleaved(S)), S)
    Ss = to_interleaved(S)
    # row x_2 (index 1) moves to interleaved slot 2, row xi_1 (index 3) to slot 1
    assert Ss[2, 1] == S[1, 3]


def test_invariants_of_identity():
    n = 2
    a = invariants_from(np.eye(2 * n))
    for k in range(n):
        for i in range(2 * n):
            for j in range(2 * n):
                expect = 1.0 if (i == j and i in (2 * k, 2 * k + 1)) else 0.0
                assert a[i, j, k] == expect


def test_invariants_blind_to_block_rotations(rng):
    S = random_symplectic(rng, 3)
    R = block_rotation(rng.uniform(0, 2 * np.pi, size=3))
    a = invariants_from(S)
    assert np.max(np.abs(a - invariants_from(S @ R))) < 1e-12
    assert np.max(np.abs(a - a.transpose(1, 0, 2))) == 0.0


def test_block_determinant_sums(rng):
    for n in (1, 2, 3):
        for _ in range(50):
            assert np.max(np.abs(block_determinant_sums(random_symplectic(rng, n)) - 1.0)) < 1e-10


def test_reconstruct_identity():
    T = reconstruct_symplectic(invariants_from(np.eye(4)))
    assert rotation_defect(np.eye(4), T) < 1e-14


def test_reconstruct_round_trip(rng):
    for n in (2, 3):
        for _ in range(10):
            S = random_symplectic(rng, n)
            a = invariants_from(S)
            T = reconstruct_symplectic(a)
            assert symplectic_residual(T) <= 1e-10
            assert np.max(np.abs(invariants_from(T) - a)) <= 1e-8
            assert rotation_defect(S, T) <= 1e-8


def test_reconstruct_rejects_infeasible():
    a = np.zeros((4, 4, 2))
    a[:, :, 0] = 1.0  # every pair collinear in block 0
    a[0, 0, 1] = a[1, 1, 1] = 1.0
    with pytest.raises(FermiError):
        reconstruct_symplectic(a)


def test_reconstruct_rejects_inconsistent(rng):
    a = invariants_from(random_symplectic(rng, 2))
    a[:, :, 0] *= 2.0
    with pytest.raises(FermiError):
        reconstruct_symplectic(a)


def test_invariant_records_round_trip(rng):
    a = invariants_from(random_symplectic(rng, 2))
    assert np.array_equal(invariants_from_records(invariants_to_records(a), 2), a)


def test_fermi_general_coupled_quadratic():
    A = np.zeros((4, 4))
    A[0, 0], A[1, 1], A[2, 2], A[3, 3] = 2.0, 3.0, 1.0, 1.0
    A[0, 1] = A[1, 0] = 0.5
    data, h = fermi_general(A)
    assert data.residuals["quadratic"] <= 1e-9
    assert (h - harmonic_part(data.lam)).max_abs() <= 1e-9


def test_fermi_general_already_in_fermi_form(rng):
    theta = np.array([1.0, math.sqrt(2.0)])
    A = np.diag(np.concatenate([theta, theta]))
    cubic = from_real_monomials(2, {((3, 0), (0, 0)): 0.2, ((0, 1), (2, 0)): -0.1})
    data, h = fermi_general(A, cubic)
    assert np.allclose(data.lam, theta)
    # remainder changes only by a block rotation, which preserves the action dependence
    assert abs(abs(h.coeff((0, (3, 0), (0, 0), 0, 0))) - abs(cubic.coeff((0, (3, 0), (0, 0), 0, 0)))) < 1e-12
    assert set(h.order_part(3).terms) == set(cubic.terms)


def test_fermi_general_random_hessians_and_grading(rng):
    for _ in range(10):
        A = random_pd(rng, 4)
        cubic = from_real_monomials(2, {((1, 1), (1, 0)): 0.3, ((0, 0), (2, 1)): -0.2})
        data, h = fermi_general(A, cubic)
        assert (h.order_part(2) - harmonic_part(data.lam)).max_abs() <= 1e-9
        assert set(h.orders()) <= {2, 3}
        # pointwise: h(new) = H(S new)
        v = rng.normal(size=4) * 0.3
        old = data.S @ v
        Hval = 0.5 * old @ A @ old + cubic.evaluate((old[:2] + 1j * old[2:]) / math.sqrt(2)).real
        assert abs(h.evaluate((v[:2] + 1j * v[2:]) / math.sqrt(2)) - Hval) < 1e-12


def test_fermi_schrodinger_diagonal():
    frame = fermi_schrodinger(np.diag([1.0, 2.0]))
    assert np.allclose(frame.theta, [1.0, math.sqrt(2.0)])
    assert np.array_equal(frame.U, np.eye(2))
    assert schrodinger_symbol_check(frame, np.diag([1.0, 2.0])) < 1e-14


def test_fermi_schrodinger_rotated_up_to_signs(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    K = Q @ np.diag([1.0, 2.0, 3.0]) @ Q.T
    frame = fermi_schrodinger(K)
    assert np.allclose(np.abs(frame.U.T @ Q), np.eye(3), atol=1e-12)
    assert schrodinger_symbol_check(frame, K) < 1e-12
    # every sign choice satisfies the same post-condition
    for signs in ([1, -1, 1], [-1, -1, 1], [1, 1, -1]):
        frame.U = frame.U * np.array(signs)
        assert schrodinger_symbol_check(frame, K) < 1e-12


def test_fermi_schrodinger_cubic_depends_on_x_only():
    frame = fermi_schrodinger(np.diag([1.0, 2.0]), {(3, 0): 0.1, (1, 2): 0.05}, max_order=3)
    rem = frame.symbol - harmonic_part(frame.theta)
    assert set(rem.orders()) == {3}
    # a function of x only is invariant under zbar <-> z
    assert (rem - rem.conj_symbol()).max_abs() < 1e-14
    assert abs(frame.remainder[(3, 0)] - 0.1) < 1e-14


def test_fermi_schrodinger_repeated_eigenvalue():
    with pytest.raises(FermiError):
        fermi_schrodinger(np.eye(2))


def synthetic_loop(S0, M, rates):
    grid = np.arange(M) / M
    S = np.array([S0(t) @ block_rotation(2 * np.pi * np.asarray(rates) * t) for t in grid])
    return grid, S


def test_spectral_derivative_and_rotation_trace(rng):
    n = 2
    X = rng.normal(size=(2 * n, 2 * n))
    gen = standard_form(n) @ (X + X.T) * 0.1

    def S_at(t):
        return la.expm(gen * math.sin(2 * math.pi * t))

    M = 64
    grid = np.arange(M) / M
    S = np.array([S_at(t) for t in grid])
    dS = np.array([(S_at(t + 1e-6) - S_at(t - 1e-6)) / 2e-6 for t in grid])
    assert np.max(np.abs(spectral_derivative(S) - dS)) < 1e-6
    # a pure block rotation at rate w contributes 2 w to the trace
    S0 = random_symplectic(rng, n)
    rates = np.array([1.5, -0.5])
    R = np.array([S0 @ block_rotation(rates * t) for t in grid])
    dR = np.array([S0 @ block_rotation(rates * t) @ block_rotation([np.pi / 2] * n)
                   @ np.diag(np.concatenate([rates, rates])) for t in grid])
    assert np.max(np.abs(loop_trace(R, dR) - 2 * rates)) < 1e-12


def test_trace_invariant_under_constant_rotation(rng):
    M = 64
    S0 = random_symplectic(rng, 2)
    gen = standard_form(2) @ np.diag([1.0, 0.3, 0.5, 0.2]) * 0.1
    grid, S = synthetic_loop(lambda t: S0 @ la.expm(gen * math.cos(2 * math.pi * t)), M, [0, 0])
    R = block_rotation([0.7, -1.1])
    t1 = loop_trace(S, spectral_derivative(S))
    SR = S @ R
    t2 = loop_trace(SR, spectral_derivative(SR))
    assert np.max(np.abs(t1 - t2)) < 1e-10


def test_fermi_periodic_constant_loop(rng):
    S0 = random_symplectic(rng, 2)
    M = 16
    inv = np.array([invariants_from(S0)] * M)
    loop = fermi_periodic(inv, np.zeros((M, 2)))
    assert np.max(np.abs(loop.theta_dot)) < 1e-12
    for S in loop.S_samples:
        assert rotation_defect(S0, S) < 1e-10


def test_fermi_periodic_recovers_rotation_rate(rng):
    n, M = 2, 128
    S0 = random_symplectic(rng, n)
    grid, S = synthetic_loop(lambda t: S0, M, [1, 0])
    inv = np.array([invariants_from(s) for s in S])
    loop = fermi_periodic(inv, loop_trace(S, spectral_derivative(S)))
    assert np.max(np.abs(loop.theta_dot[:, 0] - 2 * np.pi)) < 1e-8
    assert np.max(np.abs(loop.theta_dot[:, 1])) < 1e-8


def test_fermi_periodic_moving_base(rng):
    n, M = 2, 128
    S0 = random_symplectic(rng, n)
    gen = standard_form(n) @ np.diag([1.0, 0.3, 0.5, 0.2]) * 0.1
    grid, S = synthetic_loop(lambda t: S0 @ la.expm(gen * math.sin(2 * math.pi * t)), M, [1, 0])
    inv = np.array([invariants_from(s) for s in S])
    loop = fermi_periodic(inv, loop_trace(S, spectral_derivative(S)))
    U0 = np.linalg.solve(loop.S_samples[0], S[0])
    assert rotation_defect(np.eye(2 * n), U0) < 1e-8
    assert np.max(np.abs(loop.S_samples @ U0 - S)) < 1e-4
    # the recovered rate integrates to one full turn in block 0
    assert abs(np.mean(loop.theta_dot[:, 0]) - 2 * np.pi) < 1e-8


def test_fermi_periodic_rejects_infeasible():
    inv = np.zeros((4, 2, 2, 1))
    with pytest.raises(FermiError):
        fermi_periodic(inv, np.zeros((4, 1)))
