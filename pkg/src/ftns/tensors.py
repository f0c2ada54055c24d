"""Dense multi-index tensor algebra over a D-dimensional spatial index set.

A :class:`MultiIndexTensor` holds a rank-k array of matrix-valued entries,
one (rows, cols) complex block per index tuple in {0..D-1}^k.  All spatial
indices are 0-based in code; the on-disk format uses 1-based tuples.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MultiIndexTensor",
    "PermutationTable",
    "symmetrize",
    "alternate_part",
    "contract_direction",
    "levi_civita",
    "sym_index_basis",
    "tuple_multiplicity",
    "distinct_permutations",
    "check_unit",
]

#: tolerance for unit-vector checks (see contract_direction)
UNIT_TOL = 1e-12


def sym_index_basis(D, k):
    """Canonical basis of a rank-k symmetric index space: the sorted
    non-decreasing k-tuples over {0..D-1}.

    Returns C(D+k-1, k) tuples in lexicographic order; ``[()]`` for k = 0.
    """
    if D < 1 or k < 0:
        raise ValueError("need D >= 1 and k >= 0")
    return list(itertools.combinations_with_replacement(range(D), k))


def tuple_multiplicity(tup):
    """Number of distinct arrangements of the multiset ``tup``."""
    counts = {}
    for t in tup:
        counts[t] = counts.get(t, 0) + 1
    m = math.factorial(len(tup))
    for c in counts.values():
        m //= math.factorial(c)
    return m


def distinct_permutations(tup):
    """Yield every distinct arrangement of ``tup`` exactly once."""
    seen = set()
    for p in itertools.permutations(tup):
        if p not in seen:
            seen.add(p)
            yield p


def check_unit(s, tol=UNIT_TOL):
    """Return ``s`` as a float array after verifying it has unit length."""
    s = np.asarray(s, dtype=float)
    if abs(np.linalg.norm(s) - 1.0) > tol:
        raise ValueError(f"direction is not unit length within {tol}: |s| = {np.linalg.norm(s)}")
    return s


@dataclass(frozen=True)
class MultiIndexTensor:
    """Rank-k tensor of complex matrices over spatial indices {0..D-1}.

    entries has shape (D,)*rank + block_shape and is never mutated after
    construction; all operations return new tensors.
    """

    spatial_dim: int
    rank: int
    block_shape: tuple
    entries: np.ndarray

    def __post_init__(self):
        expected = (self.spatial_dim,) * self.rank + tuple(self.block_shape)
        if self.entries.shape != expected:
            raise ValueError(f"entries shape {self.entries.shape} != expected {expected}")
        self.entries.flags.writeable = False

    @classmethod
    def zeros(cls, D, rank, block_shape):
        shape = (D,) * rank + tuple(block_shape)
        return cls(D, rank, tuple(block_shape), np.zeros(shape, dtype=complex))

    @classmethod
    def from_entries(cls, D, rank, block_shape, entries):
        arr = np.asarray(entries, dtype=complex).copy()
        return cls(D, rank, tuple(block_shape), arr)

    @classmethod
    def from_index_dict(cls, D, rank, block_shape, index_map):
        """Build a symmetric tensor from {canonical tuple: matrix}.

        Keys must be non-decreasing 0-based tuples; the value is assigned to
        every arrangement of the tuple (the common value of the symmetric
        tensor there).
        """
        arr = np.zeros((D,) * rank + tuple(block_shape), dtype=complex)
        for tup, mat in index_map.items():
            tup = tuple(tup)
            if len(tup) != rank:
                raise ValueError(f"index tuple {tup} has wrong length for rank {rank}")
            if any(not (0 <= t < D) for t in tup):
                raise ValueError(f"index tuple {tup} out of range for D = {D}")
            if tuple(sorted(tup)) != tup:
                raise ValueError(f"index tuple {tup} is not canonical (non-decreasing)")
            for arrangement in distinct_permutations(tup):
                arr[arrangement] = np.asarray(mat, dtype=complex)
        return cls(D, rank, tuple(block_shape), arr)

    # -- small conveniences -------------------------------------------------

    def __getitem__(self, tup):
        if self.rank == 0:
            if tup not in ((), None):
                raise IndexError("rank-0 tensor takes the empty tuple")
            return self.entries
        return self.entries[tuple(tup)]

    def __add__(self, other):
        self._check_compatible(other)
        return MultiIndexTensor(self.spatial_dim, self.rank, self.block_shape,
                                self.entries + other.entries)

    def __sub__(self, other):
        self._check_compatible(other)
        return MultiIndexTensor(self.spatial_dim, self.rank, self.block_shape,
                                self.entries - other.entries)

    def __mul__(self, scalar):
        return MultiIndexTensor(self.spatial_dim, self.rank, self.block_shape,
                                self.entries * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def _check_compatible(self, other):
        if (self.spatial_dim, self.rank, self.block_shape) != \
                (other.spatial_dim, other.rank, other.block_shape):
            raise ValueError("incompatible tensor shapes")

    def norm(self):
        return float(np.max(np.abs(self.entries))) if self.entries.size else 0.0

    def allclose(self, other, tol=1e-13):
        self._check_compatible(other)
        return np.allclose(self.entries, other.entries, rtol=0, atol=tol)

    def is_antisymmetric_in(self, pos_a, pos_b, tol=1e-13):
        """True when swapping index positions pos_a, pos_b flips the sign."""
        swapped = np.swapaxes(self.entries, pos_a, pos_b)
        return np.max(np.abs(self.entries + swapped)) <= tol * (1.0 + np.max(np.abs(self.entries)))


def _validate_positions(t, positions):
    positions = sorted(set(positions))
    for p in positions:
        if not (0 <= p < t.rank):
            raise ValueError(f"index position {p} out of range for rank {t.rank}")
    return positions


def _permuted_axes(t, positions, perm):
    # axes order with `positions` rearranged by perm, block axes untouched
    axes = list(range(t.rank)) + [t.rank, t.rank + 1]
    for dst, src in zip(positions, perm):
        axes[dst] = src
    return axes


def is_symmetric_in(t, positions):
    """Exact invariance under permutations of the selected positions."""
    positions = _validate_positions(t, positions)
    for k in range(len(positions) - 1):
        perm = list(positions)
        perm[k], perm[k + 1] = perm[k + 1], perm[k]
        if not np.array_equal(t.entries,
                              np.transpose(t.entries, _permuted_axes(t, positions, perm))):
            return False
    return True


def symmetrize(t, positions=None):
    """Average ``t`` over all permutations of the selected index positions.

    Positions are 0-based; defaults to all of them.  The result is exactly
    symmetric (one averaged value per index orbit), so the operation is
    bit-level idempotent and a no-op on already symmetric input.
    """
    if positions is None:
        positions = range(t.rank)
    positions = _validate_positions(t, positions)
    if len(positions) < 2 or is_symmetric_in(t, positions):
        return t
    arr = t.entries
    out = np.empty_like(arr)
    acc = {}
    for idx in itertools.product(range(t.spatial_dim), repeat=t.rank):
        key = list(idx)
        for pos, val in zip(positions, sorted(idx[p] for p in positions)):
            key[pos] = val
        key = tuple(key)
        if key in acc:
            total, count = acc[key]
            acc[key] = (total + arr[idx], count + 1)
        else:
            acc[key] = (arr[idx].copy(), 1)
    for idx in itertools.product(range(t.spatial_dim), repeat=t.rank):
        key = list(idx)
        for pos, val in zip(positions, sorted(idx[p] for p in positions)):
            key[pos] = val
        total, count = acc[tuple(key)]
        out[idx] = total / count
    return MultiIndexTensor(t.spatial_dim, t.rank, t.block_shape, out)


def alternate_part(t, positions=None):
    """Signed average over permutations of the selected positions."""
    if positions is None:
        positions = range(t.rank)
    positions = _validate_positions(t, positions)
    if len(positions) < 2:
        return t
    acc = np.zeros_like(t.entries)
    perms = list(itertools.permutations(positions))
    for perm in perms:
        sign = _perm_sign(positions, perm)
        acc += sign * np.transpose(t.entries, _permuted_axes(t, positions, perm))
    return MultiIndexTensor(t.spatial_dim, t.rank, t.block_shape, acc / len(perms))


def _perm_sign(base, perm):
    # parity of the permutation taking base -> perm
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != base[i]:
            j = base.index(perm[i])
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def contract_direction(t, s, positions, tol=UNIT_TOL):
    """Contract the selected index positions of ``t`` with a unit vector.

    Rank drops by len(positions); multilinear in ``s``.
    """
    s = check_unit(s, tol)
    positions = _validate_positions(t, positions)
    arr = t.entries
    # contract from the highest axis down so earlier positions stay valid
    for p in sorted(positions, reverse=True):
        arr = np.tensordot(s, arr, axes=([0], [p]))
    return MultiIndexTensor(t.spatial_dim, t.rank - len(positions), t.block_shape, arr)


def levi_civita(D=3):
    """Totally antisymmetric rank-3 symbol with eps[0,1,2] = +1 (D = 3 only).

    The strong-hyperbolicity reduction construction relies on three spatial
    dimensions; other D are rejected rather than guessed at.
    """
    if D != 3:
        raise ValueError("Levi-Civita reduction parameters are only supported for D = 3")
    eps = np.zeros((3, 3, 3, 1, 1), dtype=complex)
    for perm in itertools.permutations(range(3)):
        eps[perm] = _perm_sign((0, 1, 2), perm)
    return MultiIndexTensor(3, 3, (1, 1), eps)


@dataclass(frozen=True)
class PermutationTable:
    """All m! permutations of {0..m-1}, for permutation-ansatz solvers."""

    m: int
    elements: tuple

    @classmethod
    def full_group(cls, m):
        return cls(m, tuple(itertools.permutations(range(m))))

    def __post_init__(self):
        if len(set(self.elements)) != math.factorial(self.m):
            raise ValueError("permutation table must contain exactly m! distinct elements")

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)
