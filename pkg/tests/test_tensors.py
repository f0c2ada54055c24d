import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftns.tensors import (
    MultiIndexTensor,
    PermutationTable,
    alternate_part,
    contract_direction,
    distinct_permutations,
    levi_civita,
    sym_index_basis,
    symmetrize,
    tuple_multiplicity,
)


def rand_tensor(rng, D, rank, shape=(1, 1)):
    arr = rng.standard_normal((D,) * rank + shape) \
        + 1j * rng.standard_normal((D,) * rank + shape)
    return MultiIndexTensor(D, rank, shape, arr)


def test_sym_index_basis_counts():
    assert len(sym_index_basis(3, 1)) == 3
    assert len(sym_index_basis(3, 2)) == 6
    assert len(sym_index_basis(3, 3)) == 10
    for D in (1, 2, 3, 4):
        for k in range(5):
            assert len(sym_index_basis(D, k)) == math.comb(D + k - 1, k)
    assert sym_index_basis(2, 2) == [(0, 0), (0, 1), (1, 1)]
    assert sym_index_basis(3, 0) == [()]


def test_tuple_multiplicity():
    assert tuple_multiplicity(()) == 1
    assert tuple_multiplicity((0, 1)) == 2
    assert tuple_multiplicity((0, 0)) == 1
    assert tuple_multiplicity((0, 1, 2)) == 6
    assert tuple_multiplicity((0, 0, 1)) == 3
    assert sorted(distinct_permutations((0, 0, 1))) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def test_symmetrize_two_element_average():
    t = MultiIndexTensor.zeros(3, 2, (1, 1))
    arr = t.entries.copy()
    arr[0, 1] = 1.0
    t = MultiIndexTensor(3, 2, (1, 1), arr)
    s = symmetrize(t, [0, 1])
    assert s[(0, 1)][0, 0] == 0.5
    assert s[(1, 0)][0, 0] == 0.5
    assert s[(0, 0)][0, 0] == 0.0


def test_symmetrize_idempotent_and_fixed_point(rng):
    t = rand_tensor(rng, 3, 3)
    s = symmetrize(t)
    assert s.allclose(symmetrize(s), tol=1e-14)
    # fully symmetric input is untouched
    assert s.allclose(symmetrize(s, [0, 2]), tol=1e-14)


def test_symmetrize_matches_bruteforce_permutation_loop(rng):
    t = rand_tensor(rng, 3, 3, (2, 2))
    s = symmetrize(t)
    brute = np.zeros_like(t.entries)
    for perm in itertools.permutations(range(3)):
        for idx in np.ndindex(3, 3, 3):
            src = tuple(idx[p] for p in perm)
            brute[idx] += t.entries[src]
    brute /= 6.0
    assert np.allclose(s.entries, brute, atol=1e-14, rtol=0)


def test_alternate_part():
    arr = np.zeros((3, 3, 1, 1), dtype=complex)
    arr[0, 1] = 1.0
    t = MultiIndexTensor(3, 2, (1, 1), arr)
    a = alternate_part(t, [0, 1])
    assert a[(0, 1)][0, 0] == 0.5
    assert a[(1, 0)][0, 0] == -0.5
    # symmetric tensor has zero alternating part
    sym = symmetrize(t)
    assert alternate_part(sym).norm() <= 1e-15


def test_sym_alt_decomposition(rng):
    t = rand_tensor(rng, 3, 2, (2, 3))
    total = symmetrize(t) + alternate_part(t)
    assert total.allclose(t, tol=1e-14)


def test_contract_direction_basics(rng):
    # rank-1 pick of a component
    arr = np.zeros((3, 1, 1), dtype=complex)
    arr[0] = 5.0
    t = MultiIndexTensor(3, 1, (1, 1), arr)
    c = contract_direction(t, [1.0, 0.0, 0.0], [0])
    assert c.rank == 0 and c[()][0, 0] == 5.0

    # delta^{ij} s_i s_j = 1
    delta = MultiIndexTensor(3, 2, (1, 1), np.eye(3).reshape(3, 3, 1, 1))
    s = np.array([0.36, 0.48, 0.8]) / np.linalg.norm([0.36, 0.48, 0.8])
    c = contract_direction(delta, s, [0, 1])
    assert abs(c[()][0, 0] - 1.0) < 1e-14


def test_contract_direction_commutes(rng):
    t = rand_tensor(rng, 3, 3, (2, 2))
    s = rng.standard_normal(3)
    s /= np.linalg.norm(s)
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    a = contract_direction(contract_direction(t, s, [0]), u, [1])
    b = contract_direction(contract_direction(t, u, [2]), s, [0])
    assert a.allclose(b, tol=1e-13)


def test_contract_direction_rejects_non_unit():
    t = MultiIndexTensor.zeros(3, 1, (1, 1))
    with pytest.raises(ValueError):
        contract_direction(t, [1.0, 1.0, 0.0], [0])


def test_position_out_of_range():
    t = MultiIndexTensor.zeros(3, 2, (1, 1))
    with pytest.raises(ValueError):
        symmetrize(t, [0, 2])
    with pytest.raises(ValueError):
        alternate_part(t, [-1, 0])


def test_levi_civita():
    eps = levi_civita(3)
    assert eps[(0, 1, 2)][0, 0] == 1.0
    assert eps[(0, 0, 1)][0, 0] == 0.0
    assert eps[(1, 0, 2)][0, 0] == -1.0
    assert eps.is_antisymmetric_in(0, 1)
    assert eps.is_antisymmetric_in(1, 2)
    with pytest.raises(ValueError):
        levi_civita(2)


def test_levi_civita_annihilates_squares(rng):
    eps = levi_civita(3).entries[..., 0, 0]
    for _ in range(10):
        v = rng.standard_normal(3)
        out = np.einsum("ijk,j,k->i", eps, v, v)
        assert np.max(np.abs(out)) <= 1e-14 * max(1.0, np.dot(v, v))


def test_permutation_table():
    table = PermutationTable.full_group(4)
    assert len(table) == 24
    assert len(set(table)) == 24
    with pytest.raises(ValueError):
        PermutationTable(3, ((0, 1, 2), (0, 1, 2)))


@settings(max_examples=40, deadline=None)
@given(rank=st.integers(min_value=1, max_value=3),
       seed=st.integers(min_value=0, max_value=2 ** 31))
def test_symmetrize_projector_property(rank, seed):
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, 2, rank)
    s = symmetrize(t)
    assert symmetrize(s).allclose(s, tol=1e-13)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31))
def test_contraction_sees_only_symmetric_part(seed):
    # contracting all symmetrized positions with one direction cannot tell
    # the tensor from its symmetrization
    rng = np.random.default_rng(seed)
    t = rand_tensor(rng, 3, 2)
    s = rng.standard_normal(3)
    s /= np.linalg.norm(s)
    a = contract_direction(t, s, [0, 1])
    b = contract_direction(symmetrize(t), s, [0, 1])
    assert a.allclose(b, tol=1e-13)
