"""First-order-in-time, N-th-order-in-space (FTNS) systems.

An FTNS system evolves field blocks v^0 .. v^{N-1}, where v^mu may appear
with at most mu - nu + 1 derivatives acting on v^nu in its equation:

    dt v^mu = sum_nu A^mu_nu . d^{mu-nu+1} v^nu        (principal part)
            + sum_{nu,rho} B^mu_{rho,nu} . d^{mu-nu-rho+1} v^nu + s^mu

The principal matrix acts on the derivative-augmented state
u = (d^{N-mu-1} v^mu)_mu, stored here over the compressed basis of
canonical non-decreasing index tuples.  The principal symbol P_N^s is the
direction-contracted, S^N-scaled principal matrix and lives on the much
smaller field-block space; both routes to it are implemented and must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import (
    MultiIndexTensor,
    check_unit,
    sym_index_basis,
    symmetrize,
    tuple_multiplicity,
)

__all__ = [
    "FTNSSystem",
    "Direction",
    "StateBasis",
    "PrincipalObjects",
    "validate",
    "principal_matrix",
    "principal_symbol",
]


@dataclass(frozen=True)
class Direction:
    """A unit spatial vector; normalized on ingestion."""

    s: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.s, dtype=float)
        n = np.linalg.norm(arr)
        if n == 0.0:
            raise ValueError("zero vector cannot be normalized to a direction")
        object.__setattr__(self, "s", arr / n)
        self.s.flags.writeable = False


def as_direction_array(s):
    if isinstance(s, Direction):
        return s.s
    return check_unit(s)


class FTNSSystem:
    """Constant-coefficient FTNS system.

    Parameters
    ----------
    N : int
        Spatial order (>= 1).
    spatial_dim : int
        Number of spatial dimensions D.
    dims : sequence of int
        Block sizes n_0 .. n_{N-1}.
    A : dict
        (mu, nu) -> MultiIndexTensor of rank mu - nu + 1 with block shape
        (n_mu, n_nu), for 0 <= nu <= min(mu + 1, N - 1).
    B : dict
        (mu, rho, nu) -> MultiIndexTensor of rank mu - nu - rho + 1 with
        block shape (n_mu, n_nu), for nu <= mu and 1 <= rho <= mu - nu + 1.
    label : str
        Name used in reports and file headers.

    Derivative indices of every coefficient are symmetrized on ingestion;
    partial derivatives commute, so this never changes the operator.
    """

    def __init__(self, N, spatial_dim, dims, A=None, B=None, label=""):
        if N < 1:
            raise ValueError("N must be >= 1")
        if len(dims) != N:
            raise ValueError(f"dims must have length N = {N}")
        self.N = int(N)
        self.spatial_dim = int(spatial_dim)
        self.dims = tuple(int(n) for n in dims)
        self.label = label
        self.A = {}
        self.B = {}
        for key, t in (A or {}).items():
            self.A[tuple(key)] = symmetrize(t) if t.rank >= 2 else t
        for key, t in (B or {}).items():
            self.B[tuple(key)] = symmetrize(t) if t.rank >= 2 else t
        self._basis = None

    # -- structural bookkeeping ---------------------------------------------

    def a_rank(self, mu, nu):
        return mu - nu + 1

    def b_rank(self, mu, rho, nu):
        return mu - nu - rho + 1

    def a_slots(self):
        """All admissible (mu, nu) coefficient slots."""
        slots = []
        for mu in range(self.N):
            for nu in range(0, min(mu + 1, self.N - 1) + 1):
                slots.append((mu, nu))
        return slots

    def b_slots(self):
        slots = []
        for mu in range(self.N):
            for nu in range(0, mu + 1):
                for rho in range(1, mu - nu + 2):
                    slots.append((mu, rho, nu))
        return slots

    def basis(self):
        if self._basis is None:
            self._basis = StateBasis(self.N, self.spatial_dim, self.dims)
        return self._basis

    def field_dim(self):
        return sum(self.dims)

    def field_offsets(self):
        offs = [0]
        for n in self.dims:
            offs.append(offs[-1] + n)
        return offs

    def copy_with(self, A=None, B=None, label=None):
        return FTNSSystem(self.N, self.spatial_dim, self.dims,
                          A if A is not None else self.A,
                          B if B is not None else self.B,
                          label if label is not None else self.label)

    def equal_coefficients(self, other, tol=0.0):
        if (self.N, self.spatial_dim, self.dims) != (other.N, other.spatial_dim, other.dims):
            return False
        for store_a, store_b in ((self.A, other.A), (self.B, other.B)):
            keys = set(store_a) | set(store_b)
            for k in keys:
                ta, tb = store_a.get(k), store_b.get(k)
                if ta is None or tb is None:
                    missing, present = (ta, tb) if ta is None else (tb, ta)
                    if present.norm() > tol:
                        return False
                elif np.max(np.abs(ta.entries - tb.entries)) > tol:
                    return False
        return True

    def __repr__(self):
        return (f"FTNSSystem(N={self.N}, D={self.spatial_dim}, dims={self.dims}, "
                f"label={self.label!r})")


def validate(sys):
    """Check every coefficient slot against the structural invariants.

    Returns a list of human-readable violations; empty means well-formed.
    Reports rather than raising so a CLI can print them all.
    """
    violations = []
    a_ok = set(sys.a_slots())
    b_ok = set(sys.b_slots())
    for (mu, nu), t in sys.A.items():
        if (mu, nu) not in a_ok:
            violations.append(f"A[{mu}][{nu}]: slot not admissible for N = {sys.N}")
            continue
        want_rank = sys.a_rank(mu, nu)
        if t.rank != want_rank:
            violations.append(f"A[{mu}][{nu}]: rank {t.rank}, expected {want_rank}")
        want_shape = (sys.dims[mu], sys.dims[nu])
        if tuple(t.block_shape) != want_shape:
            violations.append(f"A[{mu}][{nu}]: block shape {t.block_shape}, expected {want_shape}")
        if t.spatial_dim != sys.spatial_dim:
            violations.append(f"A[{mu}][{nu}]: spatial dim {t.spatial_dim} != {sys.spatial_dim}")
    for (mu, rho, nu), t in sys.B.items():
        if (mu, rho, nu) not in b_ok:
            violations.append(f"B[{mu}][{rho}][{nu}]: slot not admissible for N = {sys.N}")
            continue
        want_rank = sys.b_rank(mu, rho, nu)
        if t.rank != want_rank:
            violations.append(f"B[{mu}][{rho}][{nu}]: rank {t.rank}, expected {want_rank}")
        want_shape = (sys.dims[mu], sys.dims[nu])
        if tuple(t.block_shape) != want_shape:
            violations.append(f"B[{mu}][{rho}][{nu}]: block shape {t.block_shape}, "
                              f"expected {want_shape}")
        if t.spatial_dim != sys.spatial_dim:
            violations.append(f"B[{mu}][{rho}][{nu}]: spatial dim {t.spatial_dim} "
                              f"!= {sys.spatial_dim}")
    return violations


class StateBasis:
    """Compressed basis of the derivative-augmented state.

    Block mu carries the canonical non-decreasing tuples of length
    N - mu - 1 (sym_index_basis order), each with n_mu components.  The
    ordering is fixed: blocks by mu ascending, tuples lexicographic,
    components last, so report indices are stable.
    """

    def __init__(self, N, D, dims):
        self.N = N
        self.D = D
        self.dims = tuple(dims)
        self.block_tuples = [sym_index_basis(D, N - mu - 1) for mu in range(N)]
        self.entries = []          # (mu, tuple, component)
        self._offset = {}
        for mu in range(N):
            for tup in self.block_tuples[mu]:
                self._offset[(mu, tup)] = len(self.entries)
                for a in range(dims[mu]):
                    self.entries.append((mu, tup, a))
        self.size = len(self.entries)
        # multiplicity of each entry's tuple, used by the S^N contraction
        self.mults = np.array([tuple_multiplicity(tup) for (_, tup, _) in self.entries],
                              dtype=float)

    def offset(self, mu, tup):
        """Start of the n_mu-sized slot for (mu, canonical tuple)."""
        return self._offset[(mu, tuple(tup))]

    def block_slice(self, mu):
        start = self.offset(mu, self.block_tuples[mu][0])
        ntup = len(self.block_tuples[mu])
        return slice(start, start + ntup * self.dims[mu])

    def s_weights(self, s):
        """Per-entry products s_{i1}..s_{ik} of each entry's tuple."""
        w = np.empty(self.size)
        for idx, (_, tup, _) in enumerate(self.entries):
            w[idx] = np.prod([s[t] for t in tup]) if tup else 1.0
        return w

    def labels(self):
        return [f"v{mu}[{','.join(str(t + 1) for t in tup)}]#{a}"
                for (mu, tup, a) in self.entries]


@dataclass
class PrincipalObjects:
    """Principal matrix per coordinate direction plus the S^N machinery."""

    system: FTNSSystem
    basis: StateBasis
    matrices: list                      # D matrices, compressed operator form

    def symbol_from_matrix(self, s):
        """S^N-contract the principal matrix down to the field-block space.

        P[(mu,a), (nu,b)] = sum over row tuples (with multiplicities),
        column tuples and p of  s_i.. M^p .. s_j s_p.
        """
        s = as_direction_array(s)
        basis = self.basis
        M = sum(self.matrices[p] * s[p] for p in range(self.system.spatial_dim))
        w = basis.s_weights(s)
        # embed: field index (mu, a) spreads over the state entries of block mu
        E = _field_embedding(basis, self.system.dims)
        col = w[:, None] * E
        row = (basis.mults * w)[:, None] * E
        return row.T @ M @ col


def _field_embedding(basis, dims):
    """0/1 matrix mapping field components into their state entries."""
    offs = np.cumsum([0] + list(dims))
    E = np.zeros((basis.size, int(offs[-1])))
    for idx, (mu, _, a) in enumerate(basis.entries):
        E[idx, offs[mu] + a] = 1.0
    return E


def principal_matrix(sys):
    """Assemble the principal matrix over the compressed state basis.

    The Delta bookkeeping symbol is realized as an index-mapping loop: for
    each coefficient A^mu_nu, the upper index list (p, j1..j_{N-nu-1}) feeds
    the row tuple with its first N-mu-1 slots and the coefficient with the
    rest, then rows and columns are symmetrized and columns orbit-summed
    into the canonical basis.  B coefficients never enter.
    """
    problems = validate(sys)
    if problems:
        raise ValueError("system does not validate: " + "; ".join(problems))
    N, D = sys.N, sys.spatial_dim
    basis = sys.basis()
    mats = [np.zeros((basis.size, basis.size), dtype=complex) for _ in range(D)]
    for (mu, nu), coeff in sys.A.items():
        r_row = N - mu - 1
        r_col = N - nu - 1
        n_mu, n_nu = sys.dims[mu], sys.dims[nu]
        # dense unsymmetrized coefficient of dp u^nu_(cols) in dt u^mu_(rows)
        G = np.zeros((D,) * (1 + r_row + r_col) + (n_mu, n_nu), dtype=complex)
        for p in range(D):
            for jbar in _all_tuples(D, r_col):
                upper = (p,) + jbar
                ibar = upper[:r_row]
                contracted = upper[r_row:]
                G[(p,) + ibar + jbar] += coeff[contracted]
        t = MultiIndexTensor(D, 1 + r_row + r_col, (n_mu, n_nu), G)
        if r_row >= 2:
            t = symmetrize(t, range(1, 1 + r_row))
        if r_col >= 2:
            t = symmetrize(t, range(1 + r_row, 1 + r_row + r_col))
        G = t.entries
        for p in range(D):
            for itup in basis.block_tuples[mu]:
                ro = basis.offset(mu, itup)
                for jtup in basis.block_tuples[nu]:
                    co = basis.offset(nu, jtup)
                    val = tuple_multiplicity(jtup) * G[(p,) + itup + jtup]
                    mats[p][ro:ro + n_mu, co:co + n_nu] += val
    for m in mats:
        m.flags.writeable = False
    return PrincipalObjects(sys, basis, mats)


def _all_tuples(D, k):
    if k == 0:
        return [()]
    grids = np.indices((D,) * k).reshape(k, -1).T
    return [tuple(row) for row in grids]


def principal_symbol(sys, s):
    """Direct per-block principal symbol on the field-block space.

    Block (mu, nu) is the coefficient A^mu_nu contracted mu - nu + 1 times
    with the unit direction; B terms never appear.
    """
    s = as_direction_array(s)
    if len(s) != sys.spatial_dim:
        raise ValueError("direction has wrong dimension")
    nf = sys.field_dim()
    offs = sys.field_offsets()
    P = np.zeros((nf, nf), dtype=complex)
    for (mu, nu), coeff in sys.A.items():
        block = coeff.entries
        for _ in range(coeff.rank):
            block = np.tensordot(s, block, axes=([0], [0]))
        P[offs[mu]:offs[mu + 1], offs[nu]:offs[nu + 1]] += block
    return P


def system_rhs_ops(sys):
    """Right-hand sides as differential operators on the field blocks.

    One LinOp per block (sources dropped), used by the exact
    constraint-closure checks.
    """
    from .polyops import LinOp

    dims = sys.dims
    ops = [LinOp.zero(n, dims) for n in dims]
    for store in (sys.A, sys.B):
        for key, t in store.items():
            mu, nu = key[0], key[-1]
            for tup in sym_index_basis(sys.spatial_dim, t.rank):
                mat = t[tup]
                if not np.any(mat):
                    continue
                alpha = [0] * sys.spatial_dim
                for i in tup:
                    alpha[i] += 1
                ops[mu].add_term(tuple_multiplicity(tup) * mat, nu, tuple(alpha))
    return ops
