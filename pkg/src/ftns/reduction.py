"""Order-lowering reductions of FTNS systems.

One reduction step promotes the gradient of v^0 to an independent field d
and rewrites the order-N system as an order-(N-1) system in the blocks
(v^0, d, v^1 | v^2, ..., v^{N-1}), the first three sharing the new level 0.
The rewrite is parametrized by constraint-addition tensors D (on the
auxiliary constraints c_i = grad_i v^0 - d_i) and Dbar (on the curl
constraints c_ij = (grad_i d_j - grad_j d_i)/2, antisymmetric in their
last two indices).

The partial choice of parameters kills the first row and column of the
2+1-decomposed reduced symbol; the Levi-Civita choice Dbar = i*lam*eps
gives the transverse block the spectrum {+lam, -lam} and lets an explicit
block-triangular diagonalizer be lifted from the parent one.  Iterating
ends in a fully first-order system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polyops import LinOp, PolySpace, operator_span_residual
from .systems import (
    FTNSSystem,
    as_direction_array,
    principal_matrix,
    principal_symbol,
    system_rhs_ops,
    validate,
)
from .tensors import MultiIndexTensor, levi_civita

__all__ = [
    "IterativeReductionParams",
    "ReducedSystem",
    "Decomposition21",
    "reduce_once",
    "partial_choice",
    "epsilon_choice",
    "choose_lambda",
    "decompose_21",
    "lift_diagonalizer",
    "iterate_to_first_order",
    "constraint_evolution",
    "redundancy_residual",
    "submatrix_embedding",
    "extract_parent_symmetrizer",
    "ResonantLambda",
]

ANTISYM_TOL = 1e-12


class ResonantLambda(RuntimeError):
    """The transverse eigenvalue collides with the parent spectrum."""


@dataclass
class IterativeReductionParams:
    """Reduction parameters of one FTNS -> FT(N-1)S step.

    D0      rank 1, (n0, n0): c additions to the v^0 equation
    D       rank 2 (i, k), (n0, n0): c additions to the d_i equation
    Dbar0   rank 2 (k, j), (n0, n0), antisymmetric: c_kj additions to v^0
    Dbar    rank 3 (i, k, j), (n0, n0), antisymmetric in (k, j)
    Dmu     {mu: rank-mu (k1..kmu), (n_mu, n0)} for mu = 1..N-1
    Dbarmu  {mu: rank-(mu+1), (n_mu, n0), antisymmetric in last two}
    """

    D0: MultiIndexTensor
    D: MultiIndexTensor
    Dbar0: MultiIndexTensor
    Dbar: MultiIndexTensor
    Dmu: dict
    Dbarmu: dict

    @classmethod
    def zero(cls, sys):
        D, n0 = sys.spatial_dim, sys.dims[0]
        return cls(
            D0=MultiIndexTensor.zeros(D, 1, (n0, n0)),
            D=MultiIndexTensor.zeros(D, 2, (n0, n0)),
            Dbar0=MultiIndexTensor.zeros(D, 2, (n0, n0)),
            Dbar=MultiIndexTensor.zeros(D, 3, (n0, n0)),
            Dmu={mu: MultiIndexTensor.zeros(D, mu, (sys.dims[mu], n0))
                 for mu in range(1, sys.N)},
            Dbarmu={mu: MultiIndexTensor.zeros(D, mu + 1, (sys.dims[mu], n0))
                    for mu in range(1, sys.N)},
        )

    @classmethod
    def random(cls, rng, sys, scale=1.0):
        """Random admissible parameters (antisymmetry imposed by projection)."""
        D, n0 = sys.spatial_dim, sys.dims[0]

        def rand(rank, shape):
            z = rng.standard_normal((D,) * rank + shape) \
                + 1j * rng.standard_normal((D,) * rank + shape)
            return MultiIndexTensor(D, rank, shape, scale * z)

        def antisym_last2(t):
            swapped = np.swapaxes(t.entries, t.rank - 2, t.rank - 1)
            return MultiIndexTensor(t.spatial_dim, t.rank, t.block_shape,
                                    0.5 * (t.entries - swapped))

        return cls(
            D0=rand(1, (n0, n0)),
            D=rand(2, (n0, n0)),
            Dbar0=antisym_last2(rand(2, (n0, n0))),
            Dbar=antisym_last2(rand(3, (n0, n0))),
            Dmu={mu: rand(mu, (sys.dims[mu], n0)) for mu in range(1, sys.N)},
            Dbarmu={mu: antisym_last2(rand(mu + 1, (sys.dims[mu], n0)))
                    for mu in range(1, sys.N)},
        )

    def validate_for(self, sys):
        D, n0 = sys.spatial_dim, sys.dims[0]
        problems = []

        def shape_check(name, t, rank, shape):
            if (t.spatial_dim, t.rank, tuple(t.block_shape)) != (D, rank, shape):
                problems.append(f"{name}: rank {t.rank} block {t.block_shape}, "
                                f"expected rank {rank} block {shape}")

        shape_check("D0", self.D0, 1, (n0, n0))
        shape_check("D", self.D, 2, (n0, n0))
        shape_check("Dbar0", self.Dbar0, 2, (n0, n0))
        shape_check("Dbar", self.Dbar, 3, (n0, n0))
        for mu in range(1, sys.N):
            if mu not in self.Dmu:
                problems.append(f"Dmu[{mu}] missing")
            else:
                shape_check(f"Dmu[{mu}]", self.Dmu[mu], mu, (sys.dims[mu], n0))
            if mu not in self.Dbarmu:
                problems.append(f"Dbarmu[{mu}] missing")
            else:
                shape_check(f"Dbarmu[{mu}]", self.Dbarmu[mu], mu + 1, (sys.dims[mu], n0))
        for name, t in [("Dbar0", self.Dbar0), ("Dbar", self.Dbar)] + \
                [(f"Dbarmu[{mu}]", t) for mu, t in sorted(self.Dbarmu.items())]:
            if t.rank >= 2 and not t.is_antisymmetric_in(t.rank - 2, t.rank - 1, ANTISYM_TOL):
                problems.append(f"{name}: not antisymmetric in its last two indices")
        return problems


def partial_choice(sys):
    """Parameters killing the first row and column of the 2+1 symbol.

    D0 = -A^0_0, D = -B^0_{1,0} delta, Dmu = -B^mu_{1,0}; every Dbar is
    zero except the d-equation one, which stays free for epsilon_choice.
    """
    params = IterativeReductionParams.zero(sys)
    D, n0 = sys.spatial_dim, sys.dims[0]
    if (0, 0) in sys.A:
        params.D0 = -sys.A[(0, 0)]
    if (0, 1, 0) in sys.B:
        arr = np.zeros((D, D, n0, n0), dtype=complex)
        for i in range(D):
            arr[i, i] = -sys.B[(0, 1, 0)].entries
        params.D = MultiIndexTensor(D, 2, (n0, n0), arr)
    for mu in range(1, sys.N):
        if (mu, 1, 0) in sys.B:
            params.Dmu[mu] = -sys.B[(mu, 1, 0)]
    return params


def epsilon_choice(lam, n0=1, D=3):
    """Dbar = i*lam*eps (tensored with the identity on the n0 components)."""
    eps = levi_civita(D)
    arr = np.zeros((D, D, D, n0, n0), dtype=complex)
    arr[..., :, :] = (1j * lam) * eps.entries[..., 0, 0][..., None, None] * np.eye(n0)
    return MultiIndexTensor(D, 3, (n0, n0), arr)


def choose_lambda(sys, sample=None, margin=1.0):
    """lam = margin + sampled sup of |P_N^s|, dominating every eigenvalue."""
    from .directions import default_sample
    if sample is None:
        sample = default_sample(sys.spatial_dim, dense=False)
    po = principal_matrix(sys)
    top = 0.0
    for s in sample:
        top = max(top, float(np.linalg.norm(po.symbol_from_matrix(s), 2)))
    return margin + top


@dataclass
class ReducedSystem:
    """An FT(N-1)S reduction together with its bookkeeping.

    sys is a plain FTNSSystem (serializable, re-analyzable, reducible
    again); level 0 concatenates (v^0, d, v^1) at the sub-offsets below.
    """

    sys: FTNSSystem
    parent: FTNSSystem
    params: IterativeReductionParams
    lam: float | None = None

    @property
    def n0(self):
        return self.parent.dims[0]

    def level0_offsets(self):
        """(v0, d, v1) sub-offsets inside the child's block 0."""
        n0 = self.parent.dims[0]
        D = self.parent.spatial_dim
        n1 = self.parent.dims[1]
        return {"v0": 0, "d": n0, "v1": n0 + D * n0, "size": n0 + D * n0 + n1}

    # -- auxiliary constraints as polynomial operators ----------------------

    def constraint_ops(self):
        """c_i = d_i v^0 - d_i and c_ij = (d_i d_j - d_j d_i)/2 (i < j)."""
        D = self.parent.spatial_dim
        n0 = self.parent.dims[0]
        dims = self.sys.dims
        offs = self.level0_offsets()

        c = LinOp.zero(D * n0, dims)
        for i in range(D):
            Cgrad = np.zeros((D * n0, dims[0]), dtype=complex)
            Cgrad[i * n0:(i + 1) * n0, offs["v0"]:offs["v0"] + n0] = np.eye(n0)
            alpha = [0] * D
            alpha[i] = 1
            c.add_term(Cgrad, 0, alpha)
        Cd = np.zeros((D * n0, dims[0]), dtype=complex)
        for i in range(D):
            Cd[i * n0:(i + 1) * n0, offs["d"] + i * n0: offs["d"] + (i + 1) * n0] = -np.eye(n0)
        c.add_term(Cd, 0, [0] * D)

        pairs = [(i, j) for i in range(D) for j in range(i + 1, D)]
        c2 = LinOp.zero(len(pairs) * n0, dims)
        for pi, (i, j) in enumerate(pairs):
            for axis, didx, sign in ((i, j, 0.5), (j, i, -0.5)):
                C = np.zeros((len(pairs) * n0, dims[0]), dtype=complex)
                C[pi * n0:(pi + 1) * n0,
                  offs["d"] + didx * n0: offs["d"] + (didx + 1) * n0] = sign * np.eye(n0)
                alpha = [0] * D
                alpha[axis] = 1
                c2.add_term(C, 0, alpha)
        return {"c": c, "c2": c2}

    def closure_generators(self):
        ops = self.constraint_ops()
        D = self.parent.spatial_dim
        gens = [ops["c"], ops["c2"]]
        for axis in range(D):
            gens.append(ops["c"].spatial_derivative(axis))
            gens.append(ops["c2"].spatial_derivative(axis))
        return gens

    def constraint_sigma_op(self, sigma):
        """Higher constraint: the (sigma-1)-th derivative chain of d minus
        its full symmetrization, on all index tuples."""
        import itertools
        D = self.parent.spatial_dim
        n0 = self.parent.dims[0]
        dims = self.sys.dims
        offs = self.level0_offsets()
        tuples = [tuple(t) for t in np.indices((D,) * sigma).reshape(sigma, -1).T]
        op = LinOp.zero(len(tuples) * n0, dims)
        for ti, tup in enumerate(tuples):
            perms = list(itertools.permutations(range(sigma)))
            contributions = {}

            def add(darg, alpha_idx, w):
                key = (darg, tuple(sorted(alpha_idx)))
                contributions[key] = contributions.get(key, 0.0) + w

            add(tup[-1], tup[:-1], 1.0)
            for perm in perms:
                pt = tuple(tup[k] for k in perm)
                add(pt[-1], pt[:-1], -1.0 / len(perms))
            for (didx, der_idx), w in contributions.items():
                if abs(w) < 1e-15:
                    continue
                C = np.zeros((len(tuples) * n0, dims[0]), dtype=complex)
                C[ti * n0:(ti + 1) * n0,
                  offs["d"] + didx * n0: offs["d"] + (didx + 1) * n0] = w * np.eye(n0)
                alpha = [0] * D
                for i in der_idx:
                    alpha[i] += 1
                op.add_term(C, 0, alpha)
        return op

    # -- initial data -------------------------------------------------------

    def data_lift(self, parent_fields):
        """Child initial data from parent data by exact differentiation.

        parent_fields: list over parent blocks of lists of scalar data
        objects exposing .deriv(axis).  Returns the child-block structure.
        """
        v0 = list(parent_fields[0])
        d = [comp.deriv(i) for i in range(self.parent.spatial_dim) for comp in v0]
        v1 = list(parent_fields[1])
        child = [v0 + d + v1]
        for mu in range(2, self.parent.N):
            child.append(list(parent_fields[mu]))
        return child


def reduce_once(sys, params=None):
    """Build the FT(N-1)S reduction of an order-N system.

    With zero parameters the child principal matrix contains the parent one
    as its lower-right submatrix; the child validates, serializes and feeds
    every downstream tool unchanged.
    """
    if sys.N < 2:
        raise ValueError("cannot reduce a first-order system")
    problems = validate(sys)
    if problems:
        raise ValueError("system does not validate: " + "; ".join(problems))
    params = params if params is not None else IterativeReductionParams.zero(sys)
    problems = params.validate_for(sys)
    if problems:
        raise ValueError("bad reduction parameters: " + "; ".join(problems))

    N, D = sys.N, sys.spatial_dim
    n = sys.dims
    n0, n1 = n[0], n[1]
    m0 = n0 + D * n0 + n1
    new_dims = (m0,) + tuple(n[2:])
    NN = N - 1
    ov0, od, ov1 = 0, n0, n0 + D * n0

    A_new = {}
    B_new = {}

    def a_arr(m, nu, rank, cols):
        key = (m, nu)
        if key not in A_new:
            A_new[key] = np.zeros((D,) * rank + (new_dims[m], cols), dtype=complex)
        return A_new[key]

    def b_arr(m, rho, nu, rank, cols):
        key = (m, rho, nu)
        if key not in B_new:
            B_new[key] = np.zeros((D,) * rank + (new_dims[m], cols), dtype=complex)
        return B_new[key]

    def get_a(mu, nu):
        return sys.A.get((mu, nu))

    def get_b(mu, rho, nu):
        return sys.B.get((mu, rho, nu))

    # ---- level-0 principal block A'[(0,0)], rank 1 -------------------------
    T = a_arr(0, 0, 1, m0)
    A00, A01, A11, A10 = get_a(0, 0), get_a(0, 1), get_a(1, 1), get_a(1, 0)
    B010, B110 = get_b(0, 1, 0), get_b(1, 1, 0)
    for k in range(D):
        # v^0 row: (A00 + D0) dk v0 + Dbar0 dk d
        if A00 is not None:
            T[k, ov0:ov0 + n0, ov0:ov0 + n0] += A00[(k,)]
        T[k, ov0:ov0 + n0, ov0:ov0 + n0] += params.D0[(k,)]
        for j in range(D):
            T[k, ov0:ov0 + n0, od + j * n0: od + (j + 1) * n0] += params.Dbar0[(k, j)]
        # d_i row: (B010 delta + D) dk v0 + (A00^j delta + Dbar) dk d_j + A01 dk v1
        for i in range(D):
            r = slice(od + i * n0, od + (i + 1) * n0)
            if i == k and B010 is not None:
                T[k, r, ov0:ov0 + n0] += B010[()]
            T[k, r, ov0:ov0 + n0] += params.D[(i, k)]
            for j in range(D):
                cj = slice(od + j * n0, od + (j + 1) * n0)
                if i == k and A00 is not None:
                    T[k, r, cj] += A00[(j,)]
                T[k, r, cj] += params.Dbar[(i, k, j)]
            if i == k and A01 is not None:
                T[k, r, ov1:ov1 + n1] += A01[()]
        # v^1 row: (B110 + Dmu[1]) dk v0 + (A10 + Dbarmu[1]) dk d + A11 dk v1
        rv1 = slice(ov1, ov1 + n1)
        if B110 is not None:
            T[k, rv1, ov0:ov0 + n0] += B110[(k,)]
        T[k, rv1, ov0:ov0 + n0] += params.Dmu[1][(k,)]
        for j in range(D):
            cj = slice(od + j * n0, od + (j + 1) * n0)
            if A10 is not None:
                T[k, rv1, cj] += A10[(k, j)]
            T[k, rv1, cj] += params.Dbarmu[1][(k, j)]
        if A11 is not None:
            T[k, rv1, rv1] += A11[(k,)]

    # ---- level-0 coupling to v^2 (child slot (0,1), rank 0) ----------------
    if N >= 3 and get_a(1, 2) is not None:
        T = a_arr(0, 1, 0, n[2])
        T[ov1:ov1 + n1, :] += get_a(1, 2)[()]

    # ---- rows v^mu for mu >= 2 (child level m = mu - 1) ---------------------
    for mu in range(2, N):
        m = mu - 1
        T = a_arr(m, 0, mu, m0)
        Bm10 = get_b(mu, 1, 0)
        Amu0, Amu1 = get_a(mu, 0), get_a(mu, 1)
        for kbar in np.ndindex(*([D] * mu)):
            blk = T[kbar]
            if Bm10 is not None:
                blk[:, ov0:ov0 + n0] += Bm10[kbar]
            blk[:, ov0:ov0 + n0] += params.Dmu[mu][kbar]
            for j in range(D):
                cj = slice(od + j * n0, od + (j + 1) * n0)
                if Amu0 is not None:
                    blk[:, cj] += Amu0[kbar + (j,)]
                blk[:, cj] += params.Dbarmu[mu][kbar + (j,)]
            if Amu1 is not None:
                blk[:, ov1:ov1 + n1] += Amu1[kbar]
        for nu in range(2, min(mu + 1, N - 1) + 1):
            if get_a(mu, nu) is not None:
                A_new[(m, nu - 1)] = get_a(mu, nu).entries.copy()

    # ---- non-principal B' terms --------------------------------------------
    # level 0 rows
    T = b_arr(0, 1, 0, 0, m0)
    if B010 is not None:
        T[ov0:ov0 + n0, ov0:ov0 + n0] += B010[()]
    for k in range(D):
        T[ov0:ov0 + n0, od + k * n0: od + (k + 1) * n0] -= params.D0[(k,)]
        for i in range(D):
            T[od + i * n0: od + (i + 1) * n0,
              od + k * n0: od + (k + 1) * n0] -= params.D[(i, k)]
        T[ov1:ov1 + n1, od + k * n0: od + (k + 1) * n0] -= params.Dmu[1][(k,)]
    if A01 is not None:
        T[ov0:ov0 + n0, ov1:ov1 + n1] += A01[()]
    if get_b(1, 2, 0) is not None:
        T[ov1:ov1 + n1, ov0:ov0 + n0] += get_b(1, 2, 0)[()]
    if get_b(1, 1, 1) is not None:
        T[ov1:ov1 + n1, ov1:ov1 + n1] += get_b(1, 1, 1)[()]

    # rows v^mu, mu >= 2
    for mu in range(2, N):
        m = mu - 1
        # -Dmu d: rank mu-1 on the d columns
        T = b_arr(m, 1, 0, mu - 1, m0)
        for kbar in np.ndindex(*([D] * (mu - 1))):
            for j in range(D):
                T[kbar][:, od + j * n0: od + (j + 1) * n0] -= params.Dmu[mu][kbar + (j,)]
        for rho in range(2, mu + 2):
            if get_b(mu, rho, 0) is not None:
                t = get_b(mu, rho, 0)
                T = b_arr(m, rho - 1, 0, t.rank, m0)
                T[..., :, ov0:ov0 + n0] += t.entries
        for rho in range(1, mu + 1):
            if get_b(mu, rho, 1) is not None:
                t = get_b(mu, rho, 1)
                T = b_arr(m, rho, 0, t.rank, m0)
                T[..., :, ov1:ov1 + n1] += t.entries
        for nu in range(2, mu + 1):
            for rho in range(1, mu - nu + 2):
                if get_b(mu, rho, nu) is not None:
                    t = get_b(mu, rho, nu)
                    B_new[(m, rho, nu - 1)] = t.entries.copy()

    A_t = {key: MultiIndexTensor(D, arr.ndim - 2, arr.shape[-2:], arr)
           for key, arr in A_new.items()}
    B_t = {key: MultiIndexTensor(D, arr.ndim - 2, arr.shape[-2:], arr)
           for key, arr in B_new.items()}
    child = FTNSSystem(NN, D, new_dims, A_t, B_t,
                       label=f"{sys.label}@N{NN}" if sys.label else f"reduced@N{NN}")
    return ReducedSystem(child, sys, params)


# -- 2+1 decomposition -------------------------------------------------------

@dataclass
class Decomposition21:
    s: np.ndarray
    frame: np.ndarray            # rows e_1 .. e_{D-1}, s
    q: np.ndarray                # orthogonal projector I - s s^T
    rotation: np.ndarray         # orthogonal map to the (v0, d_A, d_s, ...) order
    rotated_symbol: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    P_parent: np.ndarray
    first_row: np.ndarray
    first_col: np.ndarray


def orthogonal_frame(s):
    """Deterministic orthonormal frame (e_1, .., e_{D-1}, s).

    e_1 comes from Gram-Schmidt on the coordinate axis least aligned with
    s; in D = 3 the second leg is the cross product.
    """
    s = as_direction_array(s)
    D = len(s)
    if D == 1:
        return s.reshape(1, 1)
    axis = np.zeros(D)
    axis[int(np.argmin(np.abs(s)))] = 1.0
    e1 = axis - np.dot(axis, s) * s
    e1 /= np.linalg.norm(e1)
    if D == 2:
        return np.vstack([e1, s])
    if D == 3:
        e2 = np.cross(s, e1)
        return np.vstack([e1, e2, s])
    # higher D: complete by QR against the remaining axes
    basis = [e1]
    for k in range(D):
        cand = np.zeros(D)
        cand[k] = 1.0
        for b in basis + [s]:
            cand = cand - np.dot(cand, b) * b
        norm = np.linalg.norm(cand)
        if norm > 1e-8 and len(basis) < D - 1:
            basis.append(cand / norm)
    return np.vstack(basis + [s])


def decompose_21(reduced, s):
    """Split the reduced symbol along (v^0, d_A, d_s, v^1, .., v^{N-1}).

    Under the partial choice the rotated symbol is block lower triangular
    with diagonal blocks (0, X, P_N^s); the embedded parent symbol sits in
    the lower right either way.
    """
    s = as_direction_array(s)
    parent = reduced.parent
    D = parent.spatial_dim
    n0 = parent.dims[0]
    offs = reduced.level0_offsets()
    child = reduced.sys
    P = principal_symbol(child, s)
    nf = child.field_dim()

    frame = orthogonal_frame(s)
    qvecs = frame[:-1]
    U = np.zeros((nf, nf))
    # v0 rows stay first
    U[0:n0, offs["v0"]:offs["v0"] + n0] = np.eye(n0)
    # d_A = e_A . d, then d_s = s . d
    for A in range(D - 1):
        for j in range(D):
            U[n0 + A * n0: n0 + (A + 1) * n0,
              offs["d"] + j * n0: offs["d"] + (j + 1) * n0] = qvecs[A][j] * np.eye(n0)
    ds_row = n0 + (D - 1) * n0
    for j in range(D):
        U[ds_row:ds_row + n0,
          offs["d"] + j * n0: offs["d"] + (j + 1) * n0] = s[j] * np.eye(n0)
    # v1 and the higher blocks keep their order
    tail_src = offs["v1"]
    tail = nf - tail_src
    U[ds_row + n0:, tail_src:] = np.eye(tail)

    Prot = U @ P @ U.T
    a = n0                      # end of the v0 rows
    b = a + (D - 1) * n0        # end of the d_A rows
    dec = Decomposition21(
        s=s,
        frame=frame,
        q=np.eye(D) - np.outer(s, s),
        rotation=U,
        rotated_symbol=Prot,
        X=Prot[a:b, a:b],
        Y=Prot[b:, a:b],
        P_parent=Prot[b:, b:],
        first_row=Prot[0:a, :],
        first_col=Prot[:, 0:a],
    )
    return dec


def lift_diagonalizer(T_N, lam_N, X, Y, lam, n0, resonance_tol=1e-8):
    """Diagonalizer of the reduced symbol from the parent one.

    Works in the rotated (v^0, d_A | d_s, v^1..) ordering: the v^0 block is
    zero and decoupled, X is diagonalized by W, and each X eigenpair
    (x, w) lifts to (w, (x - P_N)^{-1} Y w).  Raises ResonantLambda when an
    X eigenvalue collides with the parent spectrum (caller re-chooses lam).
    Returns (T, T_inv, Lambda_diag).
    """
    T_N = np.asarray(T_N, dtype=complex)
    lam_N = np.asarray(lam_N, dtype=complex)
    X = np.asarray(X, dtype=complex)
    Y = np.asarray(Y, dtype=complex)
    herm = np.linalg.norm(X - X.conj().T, 2) <= 1e-12 * (1.0 + np.linalg.norm(X, 2))
    if herm:
        xeig, W = np.linalg.eigh(X)
    else:
        xeig, W = np.linalg.eig(X)
    nx = X.shape[0]
    npar = T_N.shape[0]
    for x in xeig:
        if np.min(np.abs(x - lam_N)) <= resonance_tol * (1.0 + abs(lam)):
            raise ResonantLambda(
                f"transverse eigenvalue {x} collides with the parent spectrum")
    Z = np.zeros((npar, nx), dtype=complex)
    P_N = T_N @ np.diag(lam_N) @ np.linalg.inv(T_N)
    for k in range(nx):
        Z[:, k] = np.linalg.solve(xeig[k] * np.eye(npar) - P_N, Y @ W[:, k])
    dim = n0 + nx + npar
    T = np.zeros((dim, dim), dtype=complex)
    T[0:n0, 0:n0] = np.eye(n0)
    T[n0:n0 + nx, n0:n0 + nx] = W
    T[n0 + nx:, n0:n0 + nx] = Z
    T[n0 + nx:, n0 + nx:] = T_N
    W_inv = W.conj().T if herm else np.linalg.inv(W)
    T_N_inv = np.linalg.inv(T_N)
    T_inv = np.zeros((dim, dim), dtype=complex)
    T_inv[0:n0, 0:n0] = np.eye(n0)
    T_inv[n0:n0 + nx, n0:n0 + nx] = W_inv
    T_inv[n0 + nx:, n0:n0 + nx] = -T_N_inv @ Z @ W_inv
    T_inv[n0 + nx:, n0 + nx:] = T_N_inv
    diag = np.concatenate([np.zeros(n0), xeig, lam_N])
    return T, T_inv, diag


def iterate_to_first_order(sys, strategy="partial-epsilon", sample=None,
                           max_retries=5):
    """Reduce N-1 times, returning the list of levels (last one is FT1S).

    strategy: "partial-epsilon" (default; lam re-chosen per level, retried
    as lam <- 2 lam + 1 on resonance), "zero", or an explicit list of
    IterativeReductionParams per level.
    """
    levels = []
    cur = sys
    k = 0
    while cur.N > 1:
        if isinstance(strategy, (list, tuple)):
            params = strategy[k]
            lam = None
            red = reduce_once(cur, params)
        elif strategy == "zero":
            red = reduce_once(cur, IterativeReductionParams.zero(cur))
        elif strategy == "partial-epsilon":
            lam = choose_lambda(cur, sample)
            for attempt in range(max_retries + 1):
                params = partial_choice(cur)
                params.Dbar = epsilon_choice(lam, cur.dims[0], cur.spatial_dim)
                red = reduce_once(cur, params)
                if not _lift_is_resonant(red, sample):
                    break
                lam = 2.0 * lam + 1.0
            red.lam = lam
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        levels.append(red)
        cur = red.sys
        k += 1
    return levels


def _lift_is_resonant(reduced, sample, probes=8):
    """Probe a few directions for transverse/parent eigenvalue collisions."""
    from .directions import default_sample
    if sample is None:
        sample = default_sample(reduced.parent.spatial_dim, dense=False)
    dirs = sample.directions[:: max(1, len(sample) // probes)]
    po = principal_matrix(reduced.parent)
    for s in dirs:
        P = po.symbol_from_matrix(s)
        lam_N = np.linalg.eigvals(P)
        dec = decompose_21(reduced, s)
        xeig = np.linalg.eigvals(dec.X)
        for x in xeig:
            if lam_N.size and np.min(np.abs(x - lam_N)) <= 1e-8 * (1.0 + abs(x)):
                return True
    return False


# -- constraint evolution -----------------------------------------------------

@dataclass
class ClosureReport:
    residual: float
    per_constraint: dict
    degree: int


def constraint_evolution(reduced, deg=None):
    """Exact closure check of the auxiliary-constraint evolution.

    Substitutes the reduced right-hand sides into dt(c) on the monomial
    basis and measures the least-squares distance of the resulting operator
    from the span {c, dc, c2, dc2}.  Residual at rounding level means the
    constraint evolution system is closed.
    """
    child = reduced.sys
    deg = deg if deg is not None else reduced.parent.N + 1
    space = PolySpace(child.spatial_dim, deg)
    rhs = system_rhs_ops(child)
    ops = reduced.constraint_ops()
    gens = reduced.closure_generators()
    per = {}
    worst = 0.0
    for name, op in ops.items():
        target = op.time_derivative(rhs)
        residual, _ = operator_span_residual(target, gens, space)
        per[name] = residual
        worst = max(worst, residual)
    return ClosureReport(worst, per, deg)


def redundancy_residual(reduced, sigma, deg=None):
    """Distance of c_{i1..is} (s > 2) from the span of derivatives of c_ij."""
    if sigma <= 2:
        raise ValueError("redundancy starts at sigma = 3")
    child = reduced.sys
    D = child.spatial_dim
    deg = deg if deg is not None else sigma + 1
    space = PolySpace(D, deg)
    target = reduced.constraint_sigma_op(sigma)
    c2 = reduced.constraint_ops()["c2"]
    gens = [c2]
    frontier = [c2]
    for _ in range(sigma - 2):
        frontier = [g.spatial_derivative(ax) for g in frontier for ax in range(D)]
        gens.extend(frontier)
    residual, _ = operator_span_residual(target, gens, space)
    return residual


def submatrix_embedding(reduced):
    """Maps realizing the parent principal matrix inside the child one.

    E embeds a parent state into the child state (every derivative slot
    of d reads the matching parent derivative of v^0); R reads parent rows
    back, averaging over the distinct index splits with their arrangement
    weights.  For zero reduction parameters, R @ A_child^p @ E equals the
    parent principal matrix exactly.
    """
    from .tensors import tuple_multiplicity
    psys = reduced.parent
    pb = psys.basis()
    cb = reduced.sys.basis()
    offs = reduced.level0_offsets()
    n0 = psys.dims[0]
    E = np.zeros((cb.size, pb.size))
    R = np.zeros((pb.size, cb.size))
    pidx = {(mu, tup, a): k for k, (mu, tup, a) in enumerate(pb.entries)}
    for cidx, (lvl, tup, c) in enumerate(cb.entries):
        if lvl == 0:
            if c < offs["d"]:
                continue                      # child v^0 states are lower order
            if c < offs["v1"]:
                i, a = divmod(c - offs["d"], n0)
                E[cidx, pidx[(0, tuple(sorted(tup + (i,))), a)]] = 1.0
            else:
                E[cidx, pidx[(1, tup, c - offs["v1"])]] = 1.0
        else:
            E[cidx, pidx[(lvl + 1, tup, c)]] = 1.0
    for k, (mu, tup, a) in enumerate(pb.entries):
        if mu == 0:
            seen = set()
            for j in range(len(tup)):
                i, rest = tup[j], tup[:j] + tup[j + 1:]
                if (i, rest) in seen:
                    continue
                seen.add((i, rest))
                w = tuple_multiplicity(rest) / tuple_multiplicity(tup)
                R[k, cb.offset(0, rest) + offs["d"] + i * n0 + a] += w
        elif mu == 1:
            R[k, cb.offset(0, tup) + offs["v1"] + a] = 1.0
        else:
            R[k, cb.offset(mu - 1, tup) + a] = 1.0
    return E, R


def extract_parent_symmetrizer(reduced, s, H_child):
    """Lower-right block of the child symmetrizer in the rotated basis.

    If H_child symmetrizes the reduced symbol at s, the returned block is a
    Hermitian positive definite symmetrizer of the embedded parent symbol.
    Returns (H22, P_parent).
    """
    dec = decompose_21(reduced, s)
    U = dec.rotation
    H_rot = U @ H_child @ U.T
    cut = reduced.parent.dims[0] * (1 + (reduced.parent.spatial_dim - 1))
    return H_rot[cut:, cut:], dec.P_parent
