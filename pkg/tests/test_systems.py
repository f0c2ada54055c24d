import numpy as np
import pytest

from ftns.catalog import random_b_fuzz, random_system, zero_system
from ftns.systemio import SystemFormatError, dumps_system, loads_system
from ftns.systems import FTNSSystem, principal_matrix, principal_symbol, validate
from ftns.tensors import MultiIndexTensor, distinct_permutations, sym_index_basis

from conftest import random_unit


# -- validation ----------------------------------------------------------------


def test_validate_wave_clean(wave):
    assert validate(wave) == []


def test_validate_reports_bad_rank():
    bad = MultiIndexTensor.zeros(3, 2, (1, 1))     # rank 2 instead of 1
    sys = FTNSSystem(2, 3, (1, 1), {(0, 0): bad}, {})
    problems = validate(sys)
    assert len(problems) == 1 and "A[0][0]" in problems[0] and "rank" in problems[0]


def test_validate_reports_bad_block_shape():
    bad = MultiIndexTensor.zeros(3, 1, (2, 2))
    sys = FTNSSystem(2, 3, (1, 1), {}, {(1, 1, 0): bad})
    problems = validate(sys)
    assert len(problems) == 1
    assert "B[1][1][0]" in problems[0] and "block shape" in problems[0]


def test_validate_reports_inadmissible_slot():
    t = MultiIndexTensor.zeros(3, 0, (1, 1))
    sys = FTNSSystem(2, 3, (1, 1), {(0, 2): t}, {})
    assert any("slot" in p for p in validate(sys))


# -- hand-coded block-formula oracles -------------------------------------------


def ft2s_principal_matrix_oracle(sys, p):
    """The 2x2 displayed block form, assembled independently."""
    D = sys.spatial_dim
    n0, n1 = sys.dims
    Auu = sys.A.get((0, 0))
    Auv = sys.A.get((0, 1))
    Avu = sys.A.get((1, 0))
    Avv = sys.A.get((1, 1))
    size = D * n0 + n1
    M = np.zeros((size, size), dtype=complex)
    for i in range(D):
        for j in range(D):
            if Auu is not None and p == i:
                M[i * n0:(i + 1) * n0, j * n0:(j + 1) * n0] += Auu[(j,)]
        if Auv is not None and p == i:
            M[i * n0:(i + 1) * n0, D * n0:] += Auv[()]
    for j in range(D):
        if Avu is not None:
            M[D * n0:, j * n0:(j + 1) * n0] += Avu[(p, j)]
    if Avv is not None:
        M[D * n0:, D * n0:] += Avv[(p,)]
    return M


def ft3s_principal_matrix_oracle(sys, p):
    """The 3x3 third-order block form with explicit symmetrizations."""
    D = sys.spatial_dim
    n0, n1, n2 = sys.dims
    tups2 = sym_index_basis(D, 2)
    size = len(tups2) * n0 + D * n1 + n2
    M = np.zeros((size, size), dtype=complex)
    Auu, Auv = sys.A.get((0, 0)), sys.A.get((0, 1))
    Avu, Avv, Avw = sys.A.get((1, 0)), sys.A.get((1, 1)), sys.A.get((1, 2))
    Awu, Awv, Aww = sys.A.get((2, 0)), sys.A.get((2, 1)), sys.A.get((2, 2))

    def row0(tup):
        return tups2.index(tup) * n0

    o1 = len(tups2) * n0
    o2 = o1 + D * n1
    for (k, l) in tups2:
        r = row0((k, l))
        # delta^p_(k delta^(m_l) A^n): symmetrize (k,l) and (m,n)
        for mn in tups2:
            c = row0(mn)
            val = np.zeros((n0, n0), dtype=complex)
            for (m, n) in distinct_permutations(mn):
                for (kk, ll) in ((k, l), (l, k)):
                    if p == kk and m == ll and Auu is not None:
                        val += 0.5 * Auu[(n,)]
            M[r:r + n0, c:c + n0] += val
        # delta^p_(k delta_l)^m A^u_v
        for m in range(D):
            val = np.zeros((n0, n1), dtype=complex)
            for (kk, ll) in ((k, l), (l, k)):
                if p == kk and m == ll and Auv is not None:
                    val += 0.5 * Auv[()]
            M[r:r + n0, o1 + m * n1: o1 + (m + 1) * n1] += val
    for k in range(D):
        r = o1 + k * n1
        for mn in tups2:
            if Avu is not None and p == k:
                c = row0(mn)
                val = sum(Avu[(m, n)] for (m, n) in distinct_permutations(mn))
                M[r:r + n1, c:c + n0] += val
        for m in range(D):
            if Avv is not None and p == k:
                M[r:r + n1, o1 + m * n1: o1 + (m + 1) * n1] += Avv[(m,)]
        if Avw is not None and p == k:
            M[r:r + n1, o2:] += Avw[()]
    for mn in tups2:
        if Awu is not None:
            c = row0(mn)
            val = sum(Awu[(p, m, n)] for (m, n) in distinct_permutations(mn))
            M[o2:, c:c + n0] += val
    for m in range(D):
        if Awv is not None:
            M[o2:, o1 + m * n1: o1 + (m + 1) * n1] += Awv[(p, m)]
    if Aww is not None:
        M[o2:, o2:] += Aww[(p,)]
    return M


def test_ft2s_oracle_agreement(rng):
    for _ in range(8):
        sys = random_system(rng, 2, dims=(2, 1))
        po = principal_matrix(sys)
        for p in range(3):
            M = ft2s_principal_matrix_oracle(sys, p)
            assert np.max(np.abs(M - po.matrices[p])) <= 1e-13 * (1 + np.max(np.abs(M)))


def test_ft3s_oracle_agreement(rng):
    for _ in range(6):
        sys = random_system(rng, 3, dims=(1, 2, 1))
        po = principal_matrix(sys)
        for p in range(3):
            M = ft3s_principal_matrix_oracle(sys, p)
            assert np.max(np.abs(M - po.matrices[p])) <= 1e-13 * (1 + np.max(np.abs(M)))


def test_ft3s_single_block_population(rng):
    # only (A^w_u) nonzero: only the w-row against the u-columns populated
    arr = rng.standard_normal((3, 3, 3, 1, 1))
    sys = FTNSSystem(3, 3, (1, 1, 1),
                     {(2, 0): MultiIndexTensor(3, 3, (1, 1), arr.astype(complex))}, {})
    po = principal_matrix(sys)
    for p in range(3):
        M = po.matrices[p]
        assert np.max(np.abs(M[:-1, :])) == 0.0
        assert np.max(np.abs(M[-1, 6:])) == 0.0
        oracle = ft3s_principal_matrix_oracle(sys, p)
        assert np.allclose(M, oracle, atol=1e-14)


# -- principal symbol ------------------------------------------------------------


def test_wave_symbol(wave):
    for _ in range(5):
        s = random_unit(np.random.default_rng(3))
        P = principal_symbol(wave, s)
        assert np.allclose(P, [[0, 1], [1, 0]], atol=1e-14)


def test_companion_symbol(companion):
    P = principal_symbol(companion, [1.0, 0.0, 0.0])
    assert np.allclose(P, [[0, 1, 0], [0, 0, 1], [1, 0, 0]], atol=1e-15)


def test_zero_system_symbol():
    sys = zero_system(3)
    assert np.max(np.abs(principal_symbol(sys, [0, 0, 1.0]))) == 0.0


def test_symbol_routes_agree(rng):
    # S^N contraction of the principal matrix vs direct per-block formula
    for N in (2, 3, 4):
        for _ in range(8):
            dims = tuple(int(d) for d in rng.integers(1, 3, size=N))
            sys = random_system(rng, N, dims=dims)
            po = principal_matrix(sys)
            for _ in range(4):
                s = random_unit(rng)
                P1 = principal_symbol(sys, s)
                P2 = po.symbol_from_matrix(s)
                assert np.max(np.abs(P1 - P2)) <= 1e-13 * (1 + np.max(np.abs(P1)))


def test_b_terms_never_enter(rng):
    sys = random_system(rng, 3, with_b=False)
    fuzz = random_b_fuzz(rng, sys, scale=10.0)
    po1, po2 = principal_matrix(sys), principal_matrix(fuzz)
    for p in range(3):
        assert np.array_equal(po1.matrices[p], po2.matrices[p])
    s = random_unit(rng)
    assert np.array_equal(principal_symbol(sys, s), principal_symbol(fuzz, s))


def test_block_parity_under_direction_flip(rng):
    # block (mu, nu) is homogeneous of degree mu - nu + 1 in s
    sys = random_system(rng, 3)
    s = random_unit(rng)
    P1 = principal_symbol(sys, s)
    P2 = principal_symbol(sys, -s)
    offs = sys.field_offsets()
    for mu in range(3):
        for nu in range(min(mu + 1, 2) + 1):
            sign = (-1.0) ** (mu - nu + 1)
            a = P1[offs[mu]:offs[mu + 1], offs[nu]:offs[nu + 1]]
            b = P2[offs[mu]:offs[mu + 1], offs[nu]:offs[nu + 1]]
            assert np.allclose(b, sign * a, atol=1e-13)


def test_direction_type():
    from ftns.systems import Direction
    d = Direction(np.array([3.0, 0.0, 4.0]))
    assert abs(np.linalg.norm(d.s) - 1.0) < 1e-15
    assert np.allclose(d.s, [0.6, 0.0, 0.8])
    with pytest.raises(ValueError):
        Direction(np.zeros(3))
    # accepted wherever raw unit vectors are
    assert np.allclose(principal_symbol(wave_ft2s_local(), d), [[0, 1], [1, 0]])


def wave_ft2s_local():
    from ftns.catalog import wave_ft2s
    return wave_ft2s()


# -- serialization ----------------------------------------------------------------


def test_roundtrip_identity(rng, wave, companion):
    for sys in (wave, companion, random_system(rng, 3, dims=(2, 1, 1)),
                random_b_fuzz(rng, random_system(rng, 2))):
        text = dumps_system(sys)
        again = loads_system(text)
        assert again.equal_coefficients(sys, tol=0.0)
        assert dumps_system(again) == text


def test_complex_coefficients_roundtrip():
    t = MultiIndexTensor.from_index_dict(3, 1, (1, 1), {(0,): [[1.5 + 2.5j]]})
    sys = FTNSSystem(1, 3, (1,), {(0, 0): t}, {}, "cplx")
    again = loads_system(dumps_system(sys))
    assert again.A[(0, 0)][(0,)][0, 0] == 1.5 + 2.5j


def test_parse_error_reports_position():
    with pytest.raises(SystemFormatError, match="line"):
        loads_system("{ not json")


def test_parse_rejects_noncanonical_tuple():
    text = """{"N": 2, "D": 3, "dims": [1, 1],
               "A": {"1,0": {"2 1": [[1.0]]}}}"""
    with pytest.raises(SystemFormatError, match="canonical"):
        loads_system(text)


def test_parse_rejects_bad_slot():
    text = """{"N": 2, "D": 3, "dims": [1, 1], "A": {"0,2": {"": [[1.0]]}}}"""
    with pytest.raises(SystemFormatError, match="admissible"):
        loads_system(text)


def test_parse_rejects_wrong_matrix_shape():
    text = """{"N": 2, "D": 3, "dims": [1, 1], "A": {"0,1": {"": [[1.0, 2.0]]}}}"""
    with pytest.raises(SystemFormatError, match="shape"):
        loads_system(text)
