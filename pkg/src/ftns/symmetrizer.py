"""FTNS symmetric hyperbolicity.

A candidate symmetrizer is a Hermitian H over the compressed state basis
making S H (A . s) S Hermitian for every spatial vector s.  Contracting a
homogeneous tensor with s^k vanishes for all s exactly when its full
symmetrization does, so the check is an exact polynomial condition on the
conservation tensors T^p = H A^p: no direction sampling involved.

Conventions over the compressed basis (canonical non-decreasing tuples):

* principal matrices are operator matrices (column orbit-summed);
* symmetrizers are stored as weighted quadratic forms, H[i^, j^] =
  mult(i^) H_full mult(j^), so plain positive definiteness of the stored
  matrix is positivity on the space of symmetric tensors and the matrix
  product H @ A^p carries exactly the tensor contraction over the full
  middle index.

The converse direction constructs a symmetric hyperbolic direct first
order reduction: solve the linear system J - J^(dag,swapped) = -V under
the J symmetries, recover the constraint-addition parameters Dbar = H^-1 J
and verify that H1 = diag(Gamma, H) symmetrizes the assembled reduction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .polyops import LinOp
from .systems import FTNSSystem, StateBasis, principal_matrix, validate
from .tensors import (
    MultiIndexTensor,
    PermutationTable,
    sym_index_basis,
    tuple_multiplicity,
)

__all__ = [
    "SymCandidate",
    "TJTensors",
    "DirectReductionVars",
    "DirectReduction",
    "DirectLayout",
    "is_candidate",
    "candidate_defect",
    "solve_candidate",
    "SolveCandidateResult",
    "build_direct_ft1s",
    "partial_choice_direct",
    "solve_J",
    "SolveJResult",
    "extract_HN_from_H1",
    "energy_density",
    "weighted_identity",
]

CANDIDATE_TOL = 1e-12
HERM_FACTOR = 1e-10


@dataclass
class SymCandidate:
    """Hermitian H over the compressed state basis (weighted-form storage)."""

    order: int
    H: np.ndarray
    positivity: str = "unknown"     # positive_definite | indefinite | unknown

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if np.linalg.norm(H - H.conj().T, 2) > 1e-12 * (1.0 + np.linalg.norm(H, 2)):
            raise ValueError("candidate symmetrizer must be Hermitian")
        self.H = 0.5 * (H + H.conj().T)

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(self.H)))

    def classify_positivity(self, tol=1e-10):
        lo = self.min_eigenvalue()
        scale = float(np.linalg.norm(self.H, 2))
        self.positivity = "positive_definite" if lo > tol * (1.0 + scale) else "indefinite"
        return self.positivity


def weighted_identity(basis):
    """The Euclidean form on symmetric tensors: diag of tuple multiplicities."""
    return np.diag(basis.mults.astype(complex))


# -- exact candidate condition -------------------------------------------------


def _multiset_splits(mono, r):
    """Distinct (sub, rest) splits of the multiset ``mono`` with |sub| = r."""
    seen = set()
    idx = range(len(mono))
    for pick in itertools.combinations(idx, r):
        sub = tuple(sorted(mono[i] for i in pick))
        if sub in seen:
            continue
        seen.add(sub)
        rest = list(mono)
        for i in sorted(pick, reverse=True):
            rest.pop(i)
        yield sub, tuple(sorted(rest))


def _defect_structure(sys):
    """Index lists turning the full symmetrization into slot sums.

    For every block pair (mu, nu) and monomial of degree
    1 + (N-mu-1) + (N-nu-1): the list of (p, row offset, col offset)
    decompositions.  The defect at that monomial is the sum of
    V^p = T^p - T^p-dagger over those slots.
    """
    basis = sys.basis()
    N, D = sys.N, sys.spatial_dim
    structure = []
    for mu in range(N):
        for nu in range(N):
            r_mu, r_nu = N - mu - 1, N - nu - 1
            L = 1 + r_mu + r_nu
            rows = []
            for mono in itertools.combinations_with_replacement(range(D), L):
                slots = []
                for p in sorted(set(mono)):
                    rest = list(mono)
                    rest.remove(p)
                    for itup, jtup in _multiset_splits(tuple(rest), r_mu):
                        slots.append((p, basis.offset(mu, itup), basis.offset(nu, jtup)))
                rows.append((mono, slots))
            structure.append(((mu, nu), rows))
    return structure


def candidate_defect(sys, H):
    """Max (relative) fully-symmetrized Hermiticity defect of T = H A."""
    po = principal_matrix(sys)
    Vmats = [H @ po.matrices[p] - (H @ po.matrices[p]).conj().T
             for p in range(sys.spatial_dim)]
    scale = 1.0 + max(float(np.max(np.abs(H @ po.matrices[p])))
                      for p in range(sys.spatial_dim))
    worst = 0.0
    for (mu, nu), rows in _defect_structure(sys):
        n_mu, n_nu = sys.dims[mu], sys.dims[nu]
        for mono, slots in rows:
            acc = np.zeros((n_mu, n_nu), dtype=complex)
            for (p, ro, co) in slots:
                acc += Vmats[p][ro:ro + n_mu, co:co + n_nu]
            worst = max(worst, float(np.max(np.abs(acc))) / len(slots))
    return worst / scale


def is_candidate(sys, H, tol=CANDIDATE_TOL):
    """Exact polynomial test of the candidate-symmetrizer condition."""
    if isinstance(H, SymCandidate):
        H = H.H
    H = np.asarray(H, dtype=complex)
    if np.linalg.norm(H - H.conj().T, 2) > 1e-10 * (1.0 + np.linalg.norm(H, 2)):
        raise ValueError("H must be Hermitian")
    residual = candidate_defect(sys, H)
    return residual <= tol, residual


# -- candidate solving ---------------------------------------------------------


def _hermitian_basis(M):
    """Real basis of Hermitian M x M matrices (diag, sym, antisym-imag)."""
    out = []
    for i in range(M):
        E = np.zeros((M, M), dtype=complex)
        E[i, i] = 1.0
        out.append(E)
    for i in range(M):
        for j in range(i + 1, M):
            E = np.zeros((M, M), dtype=complex)
            E[i, j] = E[j, i] = 1.0
            out.append(E)
            E = np.zeros((M, M), dtype=complex)
            E[i, j] = 1.0j
            E[j, i] = -1.0j
            out.append(E)
    return out


def _defect_vector(sys, structure, Amats, H):
    rows = []
    Vmats = [H @ Amats[p] - (H @ Amats[p]).conj().T for p in range(sys.spatial_dim)]
    for (mu, nu), monos in structure:
        n_mu, n_nu = sys.dims[mu], sys.dims[nu]
        for mono, slots in monos:
            acc = np.zeros((n_mu, n_nu), dtype=complex)
            for (p, ro, co) in slots:
                acc += Vmats[p][ro:ro + n_mu, co:co + n_nu]
            rows.append(acc.ravel() / len(slots))
    v = np.concatenate(rows) if rows else np.zeros(0, dtype=complex)
    return np.concatenate([v.real, v.imag])


@dataclass
class SolveCandidateResult:
    status: str                   # symmetric_hyperbolic | candidate_only | infeasible
    candidate: SymCandidate | None
    nullspace_dim: int
    residual: float
    min_eigenvalue: float


def solve_candidate(sys, pd_tol=1e-9, rng=None):
    """Search for a positive definite candidate symmetrizer.

    Assembles the homogeneous linear system "fully symmetrized Hermiticity
    defect of H A = 0" over the real parameters of Hermitian H, takes its
    nullspace and then hunts for a positive definite element: projections
    of the weighted identity, the nullspace basis, and a concave
    max-min-eigenvalue polish.  Failure to find one yields candidate_only,
    which is explicitly not a proof of absence.
    """
    problems = validate(sys)
    if problems:
        raise ValueError("system does not validate: " + "; ".join(problems))
    po = principal_matrix(sys)
    M = po.basis.size
    structure = _defect_structure(sys)
    basis_elems = _hermitian_basis(M)
    cols = [_defect_vector(sys, structure, po.matrices, E) for E in basis_elems]
    A = np.stack(cols, axis=1) if cols else np.zeros((0, 0))
    # nullspace by SVD
    u, sv, vt = np.linalg.svd(A, full_matrices=True)
    if sv.size:
        cut = sv[0] * max(A.shape) * np.finfo(float).eps * 10
        rank = int(np.sum(sv > cut))
    else:
        rank = 0
    null = vt[rank:].T                    # (params, dim)
    dim = null.shape[1]
    if dim == 0:
        return SolveCandidateResult("infeasible", None, 0, np.inf, -np.inf)

    def assemble(x):
        H = np.zeros((M, M), dtype=complex)
        coef = null @ x
        for c, E in zip(coef, basis_elems):
            H += c * E
        return 0.5 * (H + H.conj().T)

    def min_eig(x):
        return float(np.min(np.linalg.eigvalsh(assemble(x))))

    def params_of(H):
        out = []
        for i in range(M):
            out.append(H[i, i].real)
        for i in range(M):
            for j in range(i + 1, M):
                out.append(H[i, j].real)
                out.append(H[i, j].imag)
        return np.array(out)

    seeds = []
    for target in (weighted_identity(po.basis), np.eye(M, dtype=complex)):
        x = null.T @ params_of(target)
        if np.linalg.norm(x) > 1e-12:
            seeds.append(x / np.linalg.norm(x))
    seeds.extend(np.eye(dim))
    rng = rng or np.random.default_rng(0)
    for _ in range(3):
        z = rng.standard_normal(dim)
        seeds.append(z / np.linalg.norm(z))

    best_x, best_val = None, -np.inf
    for x0 in seeds:
        val = min_eig(x0)
        if val > best_val:
            best_val, best_x = val, x0
    if best_val <= pd_tol:
        # concave maximization of the smallest eigenvalue over the unit ball
        from scipy.optimize import minimize
        cons = [{"type": "ineq", "fun": lambda x: 1.0 - np.dot(x, x)}]
        for x0 in seeds[: min(len(seeds), 6)]:
            try:
                res = minimize(lambda x: -min_eig(x), x0, method="SLSQP",
                               constraints=cons,
                               options={"maxiter": 120, "ftol": 1e-12})
            except Exception:
                continue
            if -res.fun > best_val:
                best_val, best_x = -res.fun, res.x

    H = assemble(best_x)
    scale = float(np.linalg.norm(H, 2)) or 1.0
    if best_val > pd_tol * scale:
        H = H / best_val            # normalize so min eigenvalue is 1
        cand = SymCandidate(sys.N, H, "positive_definite")
        _, residual = is_candidate(sys, cand.H, tol=np.inf)
        return SolveCandidateResult("symmetric_hyperbolic", cand, dim, residual,
                                    float(np.min(np.linalg.eigvalsh(H))))
    cand = SymCandidate(sys.N, H, "indefinite")
    _, residual = is_candidate(sys, cand.H, tol=np.inf)
    return SolveCandidateResult("candidate_only", cand, dim, residual, best_val)


# -- direct first order reduction ---------------------------------------------


class DirectLayout:
    """State layout (d^mu_sigma | v^mu | d^mu | v^{N-1}) of the direct FT1S.

    The trailing (d^mu, v^{N-1}) group is ordered exactly like the parent
    StateBasis, so the parent principal matrix embeds as the structural
    part of its diagonal block and symmetrizers align index for index.
    """

    def __init__(self, sys):
        self.parent = sys
        N, D = sys.N, sys.spatial_dim
        self.blocks = []                      # (kind, mu, sigma) with sigma=0 for v
        for mu in range(N - 2):
            for sigma in range(1, N - mu - 1):
                self.blocks.append(("d", mu, sigma))
        for mu in range(N - 1):
            self.blocks.append(("v", mu, 0))
        self.cut_block = len(self.blocks)     # start of the (d^mu, w) group
        for mu in range(N - 1):
            self.blocks.append(("d", mu, N - mu - 1))
        self.blocks.append(("v", N - 1, 0))
        self.tuples = {}
        self.offsets = {}
        off = 0
        for blk in self.blocks:
            kind, mu, sigma = blk
            tups = sym_index_basis(D, sigma)
            self.tuples[blk] = tups
            self.offsets[blk] = off
            off += len(tups) * sys.dims[mu]
        self.size = off
        self.cut = self.offsets[self.blocks[self.cut_block]]

    def block_of(self, mu, count):
        """Block holding d^mu_count (count = 0 means v^mu)."""
        if count == 0:
            return ("v", mu, 0)
        return ("d", mu, count)

    def slot(self, blk, tup, comp=0):
        kind, mu, sigma = blk
        n = self.parent.dims[mu]
        ti = self.tuples[blk].index(tuple(tup))
        return self.offsets[blk] + ti * n + comp

    def block_size(self, blk):
        kind, mu, sigma = blk
        return len(self.tuples[blk]) * self.parent.dims[mu]

    def gamma_matrix(self):
        """diag(Gamma_sigma, .., 1, ..) for the leading group, weighted form."""
        diag = []
        for blk in self.blocks[: self.cut_block]:
            kind, mu, sigma = blk
            n = self.parent.dims[mu]
            for tup in self.tuples[blk]:
                diag.extend([float(tuple_multiplicity(tup))] * n)
        return np.diag(np.array(diag, dtype=complex))


def _x_rows(layout, X):
    """Row block of an equation label X = ('v', mu) or ('d', mu, lam)."""
    if X[0] == "v":
        return ("v", X[1], 0)
    return ("d", X[1], X[2])


class DirectReductionVars:
    """Constraint-addition parameters of the direct FT1S reduction.

    D[(X, sigma, nu)]    (rows(X), cs(sigma), n_nu): symmetric upper block,
                         stored as full-tensor values at canonical tuples
    Dbar[(X, sigma, nu)] (rows(X), D, cs(sigma), n_nu): first upper index
                         explicit, trailing sigma canonical; the full
                         symmetrization over all sigma+1 upper indices
                         vanishes
    X is ("v", mu) for mu = 0..N-1 or ("d", mu, lam) for lam = 1..N-mu-1.
    """

    def __init__(self, sys):
        self.parent = sys
        N, D = sys.N, sys.spatial_dim
        self.layout = DirectLayout(sys)
        self.D = {}
        self.Dbar = {}
        for X in self.equation_labels(sys):
            rows = self.layout.block_size(_x_rows(self.layout, X))
            for nu in range(N - 1):
                for sigma in range(1, N - nu):
                    cs = len(sym_index_basis(D, sigma))
                    self.D[(X, sigma, nu)] = np.zeros((rows, cs, sys.dims[nu]),
                                                      dtype=complex)
                    self.Dbar[(X, sigma, nu)] = np.zeros((rows, D, cs, sys.dims[nu]),
                                                         dtype=complex)

    @staticmethod
    def equation_labels(sys):
        N = sys.N
        labels = [("v", mu) for mu in range(N)]
        labels += [("d", mu, lam) for mu in range(N - 1) for lam in range(1, N - mu)]
        return labels

    @classmethod
    def zero(cls, sys):
        return cls(sys)

    def validate(self, tol=1e-12):
        """Check the structural symmetry rules of the Dbar additions.

        The trailing indices are symmetric by storage; what can go wrong is
        a nonvanishing full symmetrization over all upper indices.
        """
        problems = []
        D = self.parent.spatial_dim
        for (X, sigma, nu), arr in self.Dbar.items():
            if not np.any(arr):
                continue
            rows = arr.shape[0]
            n = arr.shape[-1]
            tups = sym_index_basis(D, sigma)
            full = np.zeros((rows,) + (D,) * (sigma + 1) + (n,), dtype=complex)
            for p in range(D):
                for ti, tup in enumerate(tups):
                    for arrangement in _arrangements_of(tup):
                        full[(slice(None), p) + arrangement] = arr[:, p, ti]
            sym = _full_sym(full, 1, sigma + 1)
            if np.max(np.abs(sym)) > tol * (1.0 + np.max(np.abs(arr))):
                problems.append(f"Dbar[{X}, sigma={sigma}, nu={nu}]: "
                                "full symmetrization of the upper indices "
                                "does not vanish")
        return problems

    @classmethod
    def random(cls, rng, sys, scale=1.0):
        out = cls(sys)
        D = sys.spatial_dim
        for key, arr in out.D.items():
            _, sigma, nu = key
            rows = arr.shape[0]
            full = scale * (rng.standard_normal((rows,) + (D,) * sigma + (sys.dims[nu],))
                            + 1j * rng.standard_normal((rows,) + (D,) * sigma + (sys.dims[nu],)))
            out.D[key] = _compress_trailing(_sym_trailing(full, sigma), sigma, D)
        for key, arr in out.Dbar.items():
            _, sigma, nu = key
            rows = arr.shape[0]
            shp = (rows,) + (D,) * (sigma + 1) + (sys.dims[nu],)
            full = scale * (rng.standard_normal(shp) + 1j * rng.standard_normal(shp))
            full = _sym_trailing_from(full, 2, sigma)
            full = full - _full_sym(full, 1, sigma + 1)
            out.Dbar[key] = np.stack(
                [_compress_trailing(full[:, p], sigma, D) for p in range(D)], axis=1)
        return out


def _sym_trailing(full, sigma):
    # symmetrize axes 1..sigma of (rows, D^sigma.., n)
    return _sym_trailing_from(full, 1, sigma)


def _sym_trailing_from(full, start, count):
    if count < 2:
        return full
    axes = list(range(start, start + count))
    acc = np.zeros_like(full)
    perms = list(itertools.permutations(axes))
    for perm in perms:
        order = list(range(full.ndim))
        for dst, src in zip(axes, perm):
            order[dst] = src
        acc += np.transpose(full, order)
    return acc / len(perms)


def _full_sym(full, start, count):
    return _sym_trailing_from(full, start, count)


def _compress_trailing(full, sigma, D):
    # (rows, D^sigma, n) -> (rows, cs(sigma), n) at canonical tuples
    rows = full.shape[0]
    n = full.shape[-1]
    tups = sym_index_basis(D, sigma)
    out = np.zeros((rows, len(tups), n), dtype=complex)
    for ti, tup in enumerate(tups):
        out[:, ti] = full[(slice(None),) + tup]
    return out


def partial_choice_direct(sys):
    """All parameters zero; the only unknowns left are the highest-index
    Dbar additions on the d^mu and v^{N-1} equations, filled by solve_J."""
    return DirectReductionVars.zero(sys)


@dataclass
class DirectReduction:
    sys: FTNSSystem
    parent: FTNSSystem
    vars: DirectReductionVars
    layout: DirectLayout

    def constraint_ops(self):
        """c^mu_sigma and cbar^mu_sigma as operators on the FT1S state."""
        parent = self.parent
        N, D = parent.N, parent.spatial_dim
        lay = self.layout
        dims = self.sys.dims
        ops = {}
        for mu in range(N - 1):
            for sigma in range(1, N - mu):
                n = parent.dims[mu]
                tups = sym_index_basis(D, sigma)
                blk_hi = lay.block_of(mu, sigma)
                blk_lo = lay.block_of(mu, sigma - 1)
                c = LinOp.zero(len(tups) * n, dims)
                for ti, tup in enumerate(tups):
                    for p, jt in _decompositions(tup):
                        C = np.zeros((len(tups) * n, dims[0]), dtype=complex)
                        w = tuple_multiplicity(jt) / tuple_multiplicity(tup)
                        src = lay.slot(blk_lo, jt)
                        C[ti * n:(ti + 1) * n, src:src + n] = w * np.eye(n)
                        alpha = [0] * D
                        alpha[p] = 1
                        c.add_term(C, 0, alpha)
                    C = np.zeros((len(tups) * n, dims[0]), dtype=complex)
                    src = lay.slot(blk_hi, tup)
                    C[ti * n:(ti + 1) * n, src:src + n] = -np.eye(n)
                    c.add_term(C, 0, [0] * D)
                ops[("c", mu, sigma)] = c

                cbar = LinOp.zero(D * len(tups) * n, dims)
                for p in range(D):
                    for ti, tup in enumerate(tups):
                        row = (p * len(tups) + ti) * n
                        C = np.zeros((D * len(tups) * n, dims[0]), dtype=complex)
                        src = lay.slot(blk_hi, tup)
                        C[row:row + n, src:src + n] = np.eye(n)
                        alpha = [0] * D
                        alpha[p] = 1
                        cbar.add_term(C, 0, alpha)
                        combined = tuple(sorted((p,) + tup))
                        for q, kt in _decompositions(combined):
                            C = np.zeros((D * len(tups) * n, dims[0]), dtype=complex)
                            w = tuple_multiplicity(kt) / tuple_multiplicity(combined)
                            src = lay.slot(blk_hi, kt)
                            C[row:row + n, src:src + n] = -w * np.eye(n)
                            alpha = [0] * D
                            alpha[q] = 1
                            cbar.add_term(C, 0, alpha)
                ops[("cbar", mu, sigma)] = cbar
        return ops

    def closure_generators(self):
        ops = self.constraint_ops()
        D = self.parent.spatial_dim
        gens = list(ops.values())
        for op in ops.values():
            for axis in range(D):
                gens.append(op.spatial_derivative(axis))
        return gens

    def data_lift(self, parent_fields):
        """FT1S initial data by exact differentiation of the parent data."""
        out = []
        for blk in self.layout.blocks:
            kind, mu, sigma = blk
            for tup in self.layout.tuples[blk]:
                for comp in parent_fields[mu]:
                    f = comp
                    for axis in tup:
                        f = f.deriv(axis)
                    out.append(f)
        return [out]


def _arrangements_of(tup):
    from .tensors import distinct_permutations
    return list(distinct_permutations(tup))


def _decompositions(tup):
    """Distinct (first index, rest canonical) splits of a canonical tuple."""
    out = []
    seen = set()
    for k, p in enumerate(tup):
        rest = tup[:k] + tup[k + 1:]
        key = (p, rest)
        if key not in seen:
            seen.add(key)
            out.append((p, rest))
    return out


def build_direct_ft1s(sys, vars=None):
    """Assemble the direct FT1S reduction as a plain FTNS system (N = 1).

    The structural derivative couplings of the (d^mu, v^{N-1}) group are
    exactly the parent principal matrix; every lower group consists of
    undifferentiated replacements plus the constraint additions carried by
    ``vars``.
    """
    problems = validate(sys)
    if problems:
        raise ValueError("system does not validate: " + "; ".join(problems))
    vars = vars if vars is not None else DirectReductionVars.zero(sys)
    if vars.parent is not sys and vars.parent.dims != sys.dims:
        raise ValueError("parameter catalogue was built for a different system")
    problems = vars.validate()
    if problems:
        raise ValueError("bad reduction parameters: " + "; ".join(problems))
    N, D = sys.N, sys.spatial_dim
    lay = vars.layout if vars.parent is sys else DirectLayout(sys)
    total = lay.size
    A1 = np.zeros((D, total, total), dtype=complex)
    B1 = np.zeros((total, total), dtype=complex)

    # structural principal part: the parent principal matrix on the
    # trailing (d^mu, v^{N-1}) group
    po = principal_matrix(sys)
    cut = lay.cut
    for p in range(D):
        A1[p, cut:, cut:] += po.matrices[p]

    # constraint additions
    for (X, sigma, nu), Darr in vars.D.items():
        if not np.any(Darr):
            continue
        rows_blk = _x_rows(lay, X)
        r0 = lay.offsets[rows_blk]
        rsize = lay.block_size(rows_blk)
        col_lo = lay.block_of(nu, sigma - 1)
        col_hi = lay.block_of(nu, sigma)
        n_nu = sys.dims[nu]
        tups = sym_index_basis(D, sigma)
        for ti, tup in enumerate(tups):
            # principal part of the c addition: D hits the symmetrized
            # derivative of d^nu_{sigma-1}; mult(jt) counts the index
            # arrangements with first slot p and remainder jt
            for p, jt in _decompositions(tup):
                c0 = lay.slot(col_lo, jt)
                A1[p, r0:r0 + rsize, c0:c0 + n_nu] += \
                    tuple_multiplicity(jt) * Darr[:, ti, :]
            # non principal: -D (d^nu_sigma)
            c0 = lay.slot(col_hi, tup)
            B1[r0:r0 + rsize, c0:c0 + n_nu] += -tuple_multiplicity(tup) * Darr[:, ti, :]
    for (X, sigma, nu), Dbar in vars.Dbar.items():
        if not np.any(Dbar):
            continue
        rows_blk = _x_rows(lay, X)
        r0 = lay.offsets[rows_blk]
        rsize = lay.block_size(rows_blk)
        col_hi = lay.block_of(nu, sigma)
        n_nu = sys.dims[nu]
        tups = sym_index_basis(D, sigma)
        for p in range(D):
            for ti, tup in enumerate(tups):
                c0 = lay.slot(col_hi, tup)
                A1[p, r0:r0 + rsize, c0:c0 + n_nu] += \
                    tuple_multiplicity(tup) * Dbar[:, p, ti, :]

    # undifferentiated replacements of the lower-order derivative terms
    def add_replacement(rows_blk, row_tup, coeff, nu):
        # coeff: a parent A or B tensor; its contracted derivative indices
        # join the row tuple to address the replacement variable d^nu_count
        r0 = lay.slot(rows_blk, row_tup)
        n_row = sys.dims[rows_blk[1]]
        col_blk = lay.block_of(nu, len(row_tup) + coeff.rank)
        n_nu = sys.dims[nu]
        for jt_full in np.ndindex(*([D] * coeff.rank)):
            target = tuple(sorted(row_tup + jt_full))
            c0 = lay.slot(col_blk, target)
            B1[r0:r0 + n_row, c0:c0 + n_nu] += coeff[jt_full]

    for blk in lay.blocks[: lay.cut_block]:
        kind, mu, sigma = blk
        for tup in lay.tuples[blk]:
            for nu in range(0, min(mu + 1, N - 1) + 1):
                if (mu, nu) in sys.A:
                    add_replacement(blk, tup, sys.A[(mu, nu)], nu)
            for (bmu, rho, bnu), t in sys.B.items():
                if bmu == mu:
                    add_replacement(blk, tup, t, bnu)
    # B replacements on the d^mu and v^{N-1} rows
    for blk in lay.blocks[lay.cut_block:]:
        kind, mu, sigma = blk
        for tup in lay.tuples[blk]:
            for (bmu, rho, bnu), t in sys.B.items():
                if bmu == mu:
                    add_replacement(blk, tup, t, bnu)

    A_t = {(0, 0): MultiIndexTensor(D, 1, (total, total), A1)}
    B_t = {(0, 1, 0): MultiIndexTensor(D, 0, (total, total), B1)}
    child = FTNSSystem(1, D, (total,), A_t, B_t,
                       label=f"{sys.label}@direct1" if sys.label else "direct1")
    return DirectReduction(child, sys, vars, lay)


# -- conservation tensors and the J system -------------------------------------


@dataclass
class TJTensors:
    """T = H A (matrix form per coordinate) plus V and J accessors.

    Stored over the compressed basis; entries carry the multiplicity
    weights of both tuples, matching the SymCandidate storage.
    """

    basis: StateBasis
    Tmats: list

    def Vmats(self):
        return [T - T.conj().T for T in self.Tmats]

    def block(self, mats, p, mu, nu):
        b = self.basis
        return mats[p][b.block_slice(mu), b.block_slice(nu)]


def conservation_tensors(sys, H):
    if isinstance(H, SymCandidate):
        H = H.H
    po = principal_matrix(sys)
    return TJTensors(po.basis, [H @ po.matrices[p] for p in range(sys.spatial_dim)])


@dataclass
class SolveJResult:
    status: str
    J: dict                      # (mu, nu) -> (D, cs_mu, cs_nu, n_mu, n_nu) full values
    dbar_ops: list               # per-p operator matrices over the parent basis
    vars: DirectReductionVars
    reduction: DirectReduction
    H1: np.ndarray
    herm_residuals: list
    lstsq_residual: float
    rank: int
    equations: int
    unknowns: int


def solve_J(sys, H, mode="direct"):
    """Solve for the J tensors and build the symmetric hyperbolic reduction.

    Requires is_candidate(sys, H) and positive definiteness.  The direct
    mode solves the least-norm linear system for the independent J
    components under the J symmetries; mode="permutation" cross-validates
    at N <= 3 with the x_pi ansatz over signed index permutations of V.
    The N <= 4 direct solve is expected to succeed; beyond that the rank
    diagnostics are reported without claiming anything.
    """
    if isinstance(H, SymCandidate):
        Hm = H.H
    else:
        Hm = np.asarray(H, dtype=complex)
    ok, residual = is_candidate(sys, Hm, tol=1e-10)
    if not ok:
        raise ValueError(f"H is not a candidate symmetrizer (defect {residual:.3e})")
    lo = float(np.min(np.linalg.eigvalsh(Hm)))
    if lo <= 0:
        raise ValueError("H must be positive definite to recover Dbar = H^-1 J")

    N, D = sys.N, sys.spatial_dim
    basis = sys.basis()
    tj = conservation_tensors(sys, Hm)
    Vm = tj.Vmats()

    if mode == "permutation":
        J = _solve_J_permutation(sys, basis, Vm)
    else:
        J = _solve_J_direct(sys, basis, Vm)
    if J is None:
        return SolveJResult("infeasible", {}, [], None, None, None, [],
                            np.inf, 0, 0, 0)
    Jblocks, lstsq_residual, rank, eqs, unknowns = J

    # Dbar operator matrices: Dbar_op = H^-1 Jmat with Jmat m-weighted
    dbar_ops = []
    for p in range(D):
        Jmat = np.zeros((basis.size, basis.size), dtype=complex)
        for (mu, nu), arr in Jblocks.items():
            n_mu, n_nu = sys.dims[mu], sys.dims[nu]
            for ti, itup in enumerate(basis.block_tuples[mu]):
                for tj_, jtup in enumerate(basis.block_tuples[nu]):
                    w = tuple_multiplicity(itup) * tuple_multiplicity(jtup)
                    ro = basis.offset(mu, itup)
                    co = basis.offset(nu, jtup)
                    Jmat[ro:ro + n_mu, co:co + n_nu] = w * arr[p, ti, tj_]
        dbar_ops.append(np.linalg.solve(Hm, Jmat))

    # fill the top Dbar parameters and rebuild; dbar_ops live over the
    # parent state basis, whose block order matches the (d^mu, w) group
    vars = partial_choice_direct(sys)
    lay = vars.layout
    for mu in range(N):
        X = ("d", mu, N - mu - 1) if mu <= N - 2 else ("v", N - 1)
        rslice = basis.block_slice(mu)
        for nu in range(N - 1):
            sigma = N - nu - 1
            key = (X, sigma, nu)
            arr = vars.Dbar[key].copy()
            n_nu = sys.dims[nu]
            for p in range(D):
                for ti, jtup in enumerate(basis.block_tuples[nu]):
                    c0 = basis.offset(nu, jtup)
                    arr[:, p, ti, :] = dbar_ops[p][rslice, c0:c0 + n_nu] \
                        / tuple_multiplicity(jtup)
            vars.Dbar[key] = arr
    reduction = build_direct_ft1s(sys, vars)

    H1 = np.zeros((lay.size, lay.size), dtype=complex)
    H1[: lay.cut, : lay.cut] = lay.gamma_matrix()[: lay.cut, : lay.cut]
    H1[lay.cut:, lay.cut:] = Hm
    A1 = reduction.sys.A[(0, 0)]
    herm = []
    for p in range(D):
        M = H1 @ A1[(p,)]
        scale = (np.linalg.norm(H1, 2) * np.linalg.norm(A1[(p,)], 2)) or 1.0
        herm.append(float(np.linalg.norm(M - M.conj().T, 2)) / scale)
    status = "ok" if max(herm) <= HERM_FACTOR else "residual_exceeded"
    return SolveJResult(status, Jblocks, dbar_ops, vars, reduction, H1, herm,
                        lstsq_residual, rank, eqs, unknowns)


def _j_unknown_table(sys, basis):
    N, D = sys.N, sys.spatial_dim
    table = {}
    count = 0
    for mu in range(N):
        for nu in range(N - 1):
            cs_mu = len(basis.block_tuples[mu])
            cs_nu = len(basis.block_tuples[nu])
            shape = (D, cs_mu, cs_nu, sys.dims[mu], sys.dims[nu])
            table[(mu, nu)] = (count, shape)
            count += int(np.prod(shape))
    return table, count


def _solve_J_direct(sys, basis, Vm):
    """Least-norm solve of J - J^(dag,swap) = -V under the J symmetries."""
    N, D = sys.N, sys.spatial_dim
    table, ncplx = _j_unknown_table(sys, basis)

    def uidx(mu, nu, p, ti, tj, a, b):
        off, shape = table[(mu, nu)]
        return off + np.ravel_multi_index((p, ti, tj, a, b), shape)

    eqs = []                      # (coeff list (unknown, factor, conj?), rhs value)
    # (i) symmetrization constraints: full sym over (p, jbar) vanishes
    for (mu, nu), (off, shape) in table.items():
        r_nu = N - nu - 1
        cs_mu = len(basis.block_tuples[mu])
        for ti in range(cs_mu):
            for mono in itertools.combinations_with_replacement(range(D), 1 + r_nu):
                for a in range(sys.dims[mu]):
                    for b in range(sys.dims[nu]):
                        coeffs = []
                        for p, jt in _decompositions(mono):
                            tj_ = basis.block_tuples[nu].index(jt)
                            w = tuple_multiplicity(jt)
                            coeffs.append((uidx(mu, nu, p, ti, tj_, a, b), w, False))
                        eqs.append((coeffs, 0.0))
    # (ii) the conservation equations over every ordered block pair
    for mu in range(N):
        for nu in range(N):
            cs_mu = len(basis.block_tuples[mu])
            cs_nu = len(basis.block_tuples[nu])
            for p in range(D):
                for ti, itup in enumerate(basis.block_tuples[mu]):
                    for tj_, jtup in enumerate(basis.block_tuples[nu]):
                        w = tuple_multiplicity(itup) * tuple_multiplicity(jtup)
                        ro = basis.offset(mu, itup)
                        co = basis.offset(nu, jtup)
                        for a in range(sys.dims[mu]):
                            for b in range(sys.dims[nu]):
                                coeffs = []
                                if nu <= N - 2:
                                    coeffs.append((uidx(mu, nu, p, ti, tj_, a, b),
                                                   1.0, False))
                                if mu <= N - 2:
                                    coeffs.append((uidx(nu, mu, p, tj_, ti, b, a),
                                                   -1.0, True))
                                val = -Vm[p][ro + a, co + b] / w
                                eqs.append((coeffs, val))

    nreal = 2 * ncplx
    Arows = np.zeros((2 * len(eqs), nreal))
    bvec = np.zeros(2 * len(eqs))
    for k, (coeffs, val) in enumerate(eqs):
        for (u, f, cj) in coeffs:
            # complex unknown z = x + i y; conj flips the sign of y
            Arows[2 * k, 2 * u] += f
            Arows[2 * k + 1, 2 * u + 1] += -f if cj else f
        bvec[2 * k] = np.real(val)
        bvec[2 * k + 1] = np.imag(val)
    x, res, rank, sv = np.linalg.lstsq(Arows, bvec, rcond=None)
    resid = float(np.max(np.abs(Arows @ x - bvec))) / (1.0 + float(np.max(np.abs(bvec))))
    if resid > 1e-8:
        return None
    z = x[0::2] + 1j * x[1::2]
    Jblocks = {}
    for (mu, nu), (off, shape) in table.items():
        Jblocks[(mu, nu)] = z[off:off + int(np.prod(shape))].reshape(shape)
    return Jblocks, resid, int(rank), len(eqs), ncplx


def _solve_J_permutation(sys, basis, Vm):
    """x_pi ansatz: J = sum over index permutations of weighted V copies.

    Kept as an independent cross-check of the direct solver at N <= 3 (the
    group sizes grow factorially beyond that).
    """
    N, D = sys.N, sys.spatial_dim
    if N > 3:
        raise ValueError("permutation-ansatz mode is provided for N <= 3")
    # dense V over full tuples per block pair
    Vfull = {}
    for mu in range(N):
        for nu in range(N):
            r_mu, r_nu = N - mu - 1, N - nu - 1
            arr = np.zeros((D,) + (D,) * r_mu + (D,) * r_nu
                           + (sys.dims[mu], sys.dims[nu]), dtype=complex)
            for p in range(D):
                for itup_full in np.ndindex(*([D] * r_mu)):
                    ic = tuple(sorted(itup_full))
                    ro = basis.offset(mu, ic)
                    wi = tuple_multiplicity(ic)
                    for jtup_full in np.ndindex(*([D] * r_nu)):
                        jc = tuple(sorted(jtup_full))
                        co = basis.offset(nu, jc)
                        wj = tuple_multiplicity(jc)
                        arr[(p,) + itup_full + jtup_full] = \
                            Vm[p][ro:ro + sys.dims[mu], co:co + sys.dims[nu]] / (wi * wj)
            Vfull[(mu, nu)] = arr

    def permuted(arr, perm, r_mu, r_nu):
        order = list(perm) + [1 + r_mu + r_nu, 2 + r_mu + r_nu]
        return np.transpose(arr, order)

    Jblocks = {}
    total_rank = 0
    total_eqs = 0
    total_unknowns = 0
    worst = 0.0
    for mu in range(N):
        for nu in range(mu, N):
            r_mu, r_nu = N - mu - 1, N - nu - 1
            L = 1 + r_mu + r_nu
            group = PermutationTable.full_group(L)
            cand_mn = [permuted(Vfull[(mu, nu)], g, r_mu, r_nu) for g in group] \
                if nu <= N - 2 else []
            cand_nm = [permuted(Vfull[(nu, mu)], g, r_nu, r_mu) for g in group] \
                if (mu <= N - 2 and nu != mu) else []
            nmn, nnm = len(cand_mn), len(cand_nm)
            if nmn + nnm == 0:
                continue

            def J_of(x):
                Jmn = sum(x[k] * cand_mn[k] for k in range(nmn)) if nmn else None
                Jnm = sum(x[nmn + k] * cand_nm[k] for k in range(nnm)) if nnm else None
                return Jmn, Jnm

            def condition_vector(Jmn, Jnm):
                # stacked: main equations for (mu,nu) and (nu,mu) plus the
                # J symmetries; all must vanish.  On the diagonal the
                # conjugate-swapped block is the block itself.
                outs = []
                pairs = [(mu, nu, Jmn, Jnm if nu != mu else Jmn)]
                if nu != mu:
                    pairs.append((nu, mu, Jnm, Jmn))
                for (m1, n1, Jt, Jo) in pairs:
                    r1, r2 = N - m1 - 1, N - n1 - 1
                    Lx = 1 + r1 + r2
                    Jt_eff = Jt if n1 <= N - 2 else None
                    Jo_eff = Jo if m1 <= N - 2 else None
                    term = Vfull[(m1, n1)].copy()
                    if Jt_eff is not None:
                        term += Jt_eff
                    if Jo_eff is not None:
                        # conj(J_{n1 m1})^{p, jbar, ibar} with blocks swapped
                        axes = ([0] + list(range(1 + r2, Lx))
                                + list(range(1, 1 + r2)) + [Lx + 1, Lx])
                        term -= np.conj(np.transpose(Jo_eff, axes))
                    outs.append(term.ravel())
                    if Jt_eff is not None:
                        outs.append((_sym_trailing_from(Jt_eff, 1, r1) - Jt_eff).ravel())
                        outs.append((_sym_trailing_from(Jt_eff, 1 + r1, r2)
                                     - Jt_eff).ravel())
                        pj = _full_sym(np.moveaxis(Jt_eff, 0, r1), r1, r2 + 1)
                        outs.append(pj.ravel())
                return np.concatenate(outs)

            xlen = nmn + nnm
            zero = condition_vector(*J_of(np.zeros(xlen)))
            cols = []
            for k in range(xlen):
                e = np.zeros(xlen)
                e[k] = 1.0
                cols.append(condition_vector(*J_of(e)) - zero)
            Acol = np.stack([np.concatenate([c.real, c.imag]) for c in cols], axis=1)
            bcol = -np.concatenate([zero.real, zero.imag])
            x, res, rank, sv = np.linalg.lstsq(Acol, bcol, rcond=None)
            resid = float(np.max(np.abs(Acol @ x - bcol))) / (1.0 + float(np.max(np.abs(bcol))))
            worst = max(worst, resid)
            total_rank += int(rank)
            total_eqs += Acol.shape[0]
            total_unknowns += xlen
            Jmn, Jnm = J_of(x)
            if nmn:
                Jblocks[(mu, nu)] = _compress_J(Jmn, basis, sys, mu, nu)
            if nnm:
                Jblocks[(nu, mu)] = _compress_J(Jnm, basis, sys, nu, mu)
    if worst > 1e-8:
        return None
    # fill untouched blocks with zeros
    table, _ = _j_unknown_table(sys, basis)
    for key, (off, shape) in table.items():
        if key not in Jblocks:
            Jblocks[key] = np.zeros(shape, dtype=complex)
    return Jblocks, worst, total_rank, total_eqs, total_unknowns


def _compress_J(Jfull, basis, sys, mu, nu):
    N, D = sys.N, sys.spatial_dim
    r_mu, r_nu = N - mu - 1, N - nu - 1
    cs_mu = basis.block_tuples[mu]
    cs_nu = basis.block_tuples[nu]
    out = np.zeros((D, len(cs_mu), len(cs_nu), sys.dims[mu], sys.dims[nu]),
                   dtype=complex)
    for p in range(D):
        for ti, itup in enumerate(cs_mu):
            for tj_, jtup in enumerate(cs_nu):
                out[p, ti, tj_] = Jfull[(p,) + itup + jtup]
    return out


def extract_HN_from_H1(H1, partition):
    """Lower-right block of a first-order symmetrizer.

    partition: the split index (size of the leading (d^mu_sigma, v^mu)
    group) or a DirectLayout.  A Hermitian PD H1 yields a Hermitian PD
    block; when H1 symmetrizes a direct reduction, the block passes
    is_candidate for the parent.
    """
    cut = partition.cut if isinstance(partition, DirectLayout) else int(partition)
    H1 = np.asarray(H1, dtype=complex)
    if not (0 <= cut < H1.shape[0]):
        raise ValueError("partition index out of range")
    if np.linalg.norm(H1 - H1.conj().T, 2) > 1e-10 * (1.0 + np.linalg.norm(H1, 2)):
        raise ValueError("H1 must be Hermitian")
    return H1[cut:, cut:].copy()


def energy_density(state, H):
    """Quadratic form u^dag H u of a compressed state vector (real part)."""
    if isinstance(H, SymCandidate):
        H = H.H
    state = np.asarray(state, dtype=complex)
    if state.shape[0] != H.shape[0]:
        raise ValueError("state dimension does not match the symmetrizer")
    return float(np.real(state.conj() @ H @ state))
