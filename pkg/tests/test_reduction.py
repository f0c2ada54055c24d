import numpy as np
import pytest

from ftns.catalog import companion_ft3s, random_strong_system, random_system, wave_ft2s
from ftns.directions import fibonacci_sphere
from ftns.hyperbolicity import classify_strong, eigenstructure
from ftns.reduction import (
    IterativeReductionParams,
    ResonantLambda,
    choose_lambda,
    constraint_evolution,
    decompose_21,
    epsilon_choice,
    extract_parent_symmetrizer,
    iterate_to_first_order,
    lift_diagonalizer,
    partial_choice,
    redundancy_residual,
    reduce_once,
    submatrix_embedding,
)
from ftns.systems import principal_matrix, principal_symbol, validate

from conftest import random_unit


def test_params_validation(rng):
    sys = random_system(rng, 3)
    params = IterativeReductionParams.zero(sys)
    bad = IterativeReductionParams.random(rng, sys)
    # break antisymmetry
    arr = bad.Dbar.entries.copy()
    arr[0, 1, 1] = 7.0
    from ftns.tensors import MultiIndexTensor
    bad.Dbar = MultiIndexTensor(3, 3, arr.shape[-2:], arr)
    assert any("antisym" in p for p in bad.validate_for(sys))
    assert params.validate_for(sys) == []
    with pytest.raises(ValueError, match="antisym|shape"):
        reduce_once(sys, bad)


def test_reduce_once_shapes_and_validation(rng):
    for N in (2, 3, 4):
        dims = tuple(int(d) for d in rng.integers(1, 3, size=N))
        sys = random_system(rng, N, dims=dims)
        red = reduce_once(sys)
        assert red.sys.N == N - 1
        n0 = dims[0]
        assert red.sys.dims[0] == n0 + 3 * n0 + dims[1]
        assert red.sys.dims[1:] == dims[2:]
        assert validate(red.sys) == []


def test_reduce_rejects_first_order(rng):
    sys = random_system(rng, 1)
    with pytest.raises(ValueError):
        reduce_once(sys)


def test_zero_param_symbol_contains_parent(rng):
    for N in (2, 3):
        sys = random_system(rng, N)
        red = reduce_once(sys)
        for _ in range(10):
            s = random_unit(rng)
            dec = decompose_21(red, s)
            P_parent = principal_symbol(sys, s)
            assert np.max(np.abs(dec.P_parent - P_parent)) <= \
                1e-13 * (1.0 + np.max(np.abs(P_parent)))


def test_zero_param_v0_row(rng):
    # the v^0 row of the reduced principal part is ((A^0_0), 0, ..)
    sys = random_system(rng, 3)
    red = reduce_once(sys)
    n0 = sys.dims[0]
    t = red.sys.A[(0, 0)]
    for k in range(3):
        row = t[(k,)][:n0, :]
        assert np.array_equal(row[:, :n0], sys.A[(0, 0)][(k,)])
        assert np.max(np.abs(row[:, n0:])) == 0.0


def test_submatrix_property_exact(rng):
    for N in (2, 3, 4):
        sys = random_system(rng, N, dims=tuple(int(d) for d in rng.integers(1, 3, size=N)))
        red = reduce_once(sys)
        E, R = submatrix_embedding(red)
        Ap = principal_matrix(sys).matrices
        Ac = principal_matrix(red.sys).matrices
        for p in range(3):
            diff = np.max(np.abs(R @ Ac[p] @ E - Ap[p]))
            assert diff <= 1e-13 * (1.0 + np.max(np.abs(Ap[p])))


def test_wave_zero_param_reduction_spectrum(rng):
    # one step on the wave pair: FT1S with eigenvalues {+-1} and a 0-block
    red = reduce_once(wave_ft2s())
    assert red.sys.N == 1 and red.sys.dims == (5,)
    for _ in range(5):
        s = random_unit(rng)
        ev = np.sort(np.linalg.eigvals(principal_symbol(red.sys, s)).real)
        assert np.allclose(ev, [-1.0, 0.0, 0.0, 0.0, 1.0], atol=1e-12)


def test_zero_params_X_zero_first_column_from_B(rng):
    sys = random_system(rng, 3)
    red = reduce_once(sys)         # zero parameters
    s = random_unit(rng)
    dec = decompose_21(red, s)
    assert np.max(np.abs(dec.X)) <= 1e-14
    # the v^0 column of the rotated symbol carries the B^mu_{1,0} terms
    assert np.max(np.abs(dec.first_col)) > 1e-3


def test_partial_choice_values(rng):
    sys = random_system(rng, 3)
    params = partial_choice(sys)
    assert np.array_equal(params.D0.entries, -sys.A[(0, 0)].entries)
    B = sys.B[(0, 1, 0)]
    for i in range(3):
        for k in range(3):
            want = -B[()] if i == k else 0.0 * B[()]
            assert np.array_equal(params.D[(i, k)], want)
    for mu in (1, 2):
        assert np.array_equal(params.Dmu[mu].entries, -sys.B[(mu, 1, 0)].entries)
    assert params.Dbar0.norm() == 0.0 and params.Dbar.norm() == 0.0


def test_partial_choice_kills_first_row_and_column(rng):
    for N in (2, 3):
        sys = random_system(rng, N)
        params = partial_choice(sys)
        red = reduce_once(sys, params)
        for _ in range(10):
            s = random_unit(rng)
            dec = decompose_21(red, s)
            assert np.max(np.abs(dec.first_row)) <= 1e-14 * (1 + np.max(np.abs(dec.rotated_symbol)))
            assert np.max(np.abs(dec.first_col)) <= 1e-14 * (1 + np.max(np.abs(dec.rotated_symbol)))


def test_epsilon_choice_properties(rng):
    lam = 2.0
    t = epsilon_choice(lam, n0=1, D=3)
    assert t.is_antisymmetric_in(1, 2)
    sys = wave_ft2s()
    params = partial_choice(sys)
    params.Dbar = t
    red = reduce_once(sys, params)
    for _ in range(10):
        s = random_unit(rng)
        dec = decompose_21(red, s)
        ev = np.sort(np.linalg.eigvals(dec.X).real)
        assert np.allclose(ev, [-lam, lam], atol=1e-12)
        assert np.max(np.abs(np.linalg.eigvals(dec.X).imag)) < 1e-12
    assert epsilon_choice(0.0).norm() == 0.0


def test_q_projector_identities(rng):
    sys = wave_ft2s()
    red = reduce_once(sys, partial_choice(sys))
    for _ in range(5):
        s = random_unit(rng)
        dec = decompose_21(red, s)
        assert np.max(np.abs(dec.q @ s)) <= 1e-14
        assert np.max(np.abs(dec.q @ dec.q - dec.q)) <= 1e-14


def test_choose_lambda(rng, small_sample):
    from ftns.catalog import zero_system
    assert choose_lambda(zero_system(3), small_sample) == 1.0
    lam = choose_lambda(wave_ft2s(), small_sample)
    assert abs(lam - 2.0) < 1e-9
    sys = random_system(rng, 2)
    lam1 = choose_lambda(sys, small_sample)
    A10 = {k: 10.0 * t for k, t in sys.A.items()}
    lam10 = choose_lambda(sys.copy_with(A=A10), small_sample)
    assert abs((lam10 - 1.0) - 10.0 * (lam1 - 1.0)) < 1e-8 * lam10


def test_spectrum_union(rng):
    for N in (2, 3):
        sys = random_strong_system(rng, N, slots_per_level=1)
        lam = choose_lambda(sys, fibonacci_sphere(24))
        params = partial_choice(sys)
        params.Dbar = epsilon_choice(lam, sys.dims[0], 3)
        red = reduce_once(sys, params)
        red.lam = lam
        n0 = sys.dims[0]
        for _ in range(10):
            s = random_unit(rng)
            got = np.sort_complex(np.linalg.eigvals(principal_symbol(red.sys, s)))
            want = np.concatenate([
                np.zeros(n0),
                np.full(n0, lam), np.full(n0, -lam),
                np.linalg.eigvals(principal_symbol(sys, s)),
            ])
            want = np.sort_complex(want)
            assert np.max(np.abs(got - want)) <= 1e-9 * (1.0 + lam)


def test_lift_diagonalizer_wave(rng):
    sys = wave_ft2s()
    lam = 2.0
    params = partial_choice(sys)
    params.Dbar = epsilon_choice(lam, 1, 3)
    red = reduce_once(sys, params)
    s = random_unit(rng)
    dec = decompose_21(red, s)
    es = eigenstructure(principal_symbol(sys, s))
    T, T_inv, diag = lift_diagonalizer(es.T, es.eigenvalues, dec.X, dec.Y, lam, 1)
    resid = np.max(np.abs(T_inv @ dec.rotated_symbol @ T - np.diag(diag)))
    assert resid <= 1e-10
    assert np.allclose(sorted(diag.real), [-2, -1, 0, 1, 2], atol=1e-12)
    assert np.max(np.abs(T @ T_inv - np.eye(5))) <= 1e-12


def test_lift_diagonalizer_decoupled_case():
    # diagonal parent, Y = 0: the coupling block Z vanishes and T is block
    # diagonal, so kappa(T) = max(kappa(W), kappa(T_N)) = 1 here
    T_N = np.eye(2)
    lam_N = np.array([1.0, -1.0])
    X = np.diag([3.0, -3.0]).astype(complex)
    Y = np.zeros((2, 2))
    T, T_inv, diag = lift_diagonalizer(T_N, lam_N, X, Y, 3.0, 1)
    assert np.max(np.abs(T[3:, 1:3])) == 0.0          # Z block
    assert np.max(np.abs(T[1:3, 3:])) == 0.0
    sv = np.linalg.svd(T, compute_uv=False)
    assert abs(sv[0] / sv[-1] - 1.0) < 1e-12
    assert sorted(np.round(diag.real, 12)) == [-3.0, -1.0, 0.0, 1.0, 3.0]


def test_lift_resonance_detected():
    T_N = np.eye(2)
    lam_N = np.array([2.0, -1.0])
    X = np.diag([2.0, -2.0]).astype(complex)   # +2 collides with the parent
    Y = np.ones((2, 2))
    with pytest.raises(ResonantLambda):
        lift_diagonalizer(T_N, lam_N, X, Y, 2.0, 1)


def test_iterate_to_first_order_dims(rng):
    sys = wave_ft2s()
    levels = iterate_to_first_order(sys, sample=fibonacci_sphere(16))
    assert len(levels) == 1
    assert levels[0].sys.N == 1
    assert levels[0].sys.dims == (5,)

    sys3 = companion_ft3s()
    levels = iterate_to_first_order(sys3, strategy="zero")
    assert [l.sys.N for l in levels] == [2, 1]
    assert levels[0].sys.dims == (1 + 3 + 1, 1)
    m0 = 5
    assert levels[1].sys.dims == (m0 + 3 * m0 + 1,)


def test_iterate_preserves_strong(rng):
    sample = fibonacci_sphere(30)
    sys = random_strong_system(rng, 3, slots_per_level=1)
    assert classify_strong(sys, sample).verdict == "strong"
    for level in iterate_to_first_order(sys, sample=sample):
        rep = classify_strong(level.sys, sample)
        assert rep.verdict == "strong"
        assert np.isfinite(rep.K_estimate)


def test_constraint_evolution_zero_params(rng):
    sys = random_system(rng, 3)
    red = reduce_once(sys)
    rep = constraint_evolution(red)
    assert rep.residual <= 1e-12


def test_constraint_evolution_random_params(rng):
    for N in (2, 3, 4):
        sys = random_system(rng, N)
        red = reduce_once(sys, IterativeReductionParams.random(rng, sys))
        rep = constraint_evolution(red)
        assert rep.residual <= 1e-12


def test_redundancy_identity(rng):
    sys = random_system(rng, 3)
    red = reduce_once(sys, IterativeReductionParams.random(rng, sys))
    assert redundancy_residual(red, 3) <= 1e-13
    sys4 = random_system(rng, 4)
    red4 = reduce_once(sys4)
    assert redundancy_residual(red4, 4) <= 1e-13


def test_extract_parent_symmetrizer(rng):
    from ftns.hyperbolicity import build_Hs
    sys = random_strong_system(rng, 3, slots_per_level=1)
    sample = fibonacci_sphere(16)
    levels = iterate_to_first_order(sys, sample=sample)
    red = levels[0]
    for s in sample.directions[:6]:
        P_child = principal_symbol(red.sys, s)
        H_child = build_Hs(P_child)
        H22, P_parent = extract_parent_symmetrizer(red, s, H_child)
        herm = np.linalg.norm(H22 @ P_parent - P_parent.conj().T @ H22, 2)
        assert herm <= 1e-10 * (1 + np.linalg.norm(H22, 2) * np.linalg.norm(P_parent, 2))
        assert np.min(np.linalg.eigvalsh(0.5 * (H22 + H22.conj().T))) > 0


def test_reduced_system_serialization_roundtrip(rng):
    from ftns.systemio import dumps_system, loads_system
    sys = random_system(rng, 3)
    red = reduce_once(sys, IterativeReductionParams.random(rng, sys))
    again = loads_system(dumps_system(red.sys))
    assert again.equal_coefficients(red.sys, tol=0.0)
