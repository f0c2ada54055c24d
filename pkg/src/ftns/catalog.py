"""Prebuilt systems and random system generators used by tests and the CLI."""

from __future__ import annotations

import numpy as np

from .systems import FTNSSystem
from .tensors import MultiIndexTensor, sym_index_basis

__all__ = [
    "wave_ft2s",
    "companion_ft3s",
    "advection_chain",
    "zero_system",
    "random_system",
    "random_strong_system",
]


def wave_ft2s(D=3, label="wave"):
    """Second-order wave equation as the pair dt u = v, dt v = Lap u."""
    A = {
        (0, 1): MultiIndexTensor.from_entries(D, 0, (1, 1), [[1.0]]),
        (1, 0): MultiIndexTensor.from_entries(
            D, 2, (1, 1), np.eye(D).reshape(D, D, 1, 1)),
    }
    return FTNSSystem(2, D, (1, 1), A, {}, label)


def companion_ft3s(D=3, axis=0, amplitude=1.0, label="companion-chain"):
    """Scalar third-order chain dt u = v, dt v = w, dt w = a (e.d)^3 u.

    Its symbol is the companion matrix [[0,1,0],[0,0,1],[alpha,0,0]] with
    alpha = a (e.s)^3, whose cube-root spectrum has a complex pair whenever
    alpha != 0: the stock non-hyperbolic example.
    """
    e = np.zeros(D)
    e[axis] = 1.0
    a3 = amplitude * np.einsum("i,j,k->ijk", e, e, e).reshape((D,) * 3 + (1, 1))
    A = {
        (0, 1): MultiIndexTensor.from_entries(D, 0, (1, 1), [[1.0]]),
        (1, 2): MultiIndexTensor.from_entries(D, 0, (1, 1), [[1.0]]),
        (2, 0): MultiIndexTensor.from_entries(D, 3, (1, 1), a3),
    }
    return FTNSSystem(3, D, (1, 1, 1), A, {}, label)


def advection_chain(N, D=3, speeds=None, axes=None, label="advection"):
    """Decoupled scalar advection at every level: dt v^mu = c_mu e_mu . grad v^mu."""
    speeds = speeds if speeds is not None else [1.0 + mu for mu in range(N)]
    axes = axes if axes is not None else [mu % D for mu in range(N)]
    A = {}
    for mu in range(N):
        e = np.zeros(D)
        e[axes[mu]] = 1.0
        A[(mu, mu)] = MultiIndexTensor.from_entries(
            D, 1, (1, 1), (speeds[mu] * e).reshape(D, 1, 1))
    return FTNSSystem(N, D, tuple([1] * N), A, {}, label)


def zero_system(N, D=3, dims=None, label="zero"):
    return FTNSSystem(N, D, dims or tuple([1] * N), {}, {}, label)


def random_system(rng, N, D=3, dims=None, scale=1.0, with_b=True, complex_coeffs=True,
                  label="random"):
    """Dense random coefficients in every admissible slot (no structure)."""
    dims = tuple(dims) if dims is not None else tuple([1] * N)
    sys0 = FTNSSystem(N, D, dims, {}, {}, label)

    def rand(shape):
        z = rng.standard_normal(shape)
        if complex_coeffs:
            z = z + 1j * rng.standard_normal(shape)
        return scale * z

    A = {}
    for (mu, nu) in sys0.a_slots():
        rank = mu - nu + 1
        shape = (D,) * rank + (dims[mu], dims[nu])
        A[(mu, nu)] = MultiIndexTensor(D, rank, (dims[mu], dims[nu]), rand(shape))
    B = {}
    if with_b:
        for (mu, rho, nu) in sys0.b_slots():
            rank = mu - nu - rho + 1
            shape = (D,) * rank + (dims[mu], dims[nu])
            B[(mu, rho, nu)] = MultiIndexTensor(D, rank, (dims[mu], dims[nu]), rand(shape))
    return FTNSSystem(N, D, dims, A, B, label)


def random_b_fuzz(rng, sys, scale=1.0):
    """Return a copy of ``sys`` with random non-principal B terms added."""
    B = dict(sys.B)
    for (mu, rho, nu) in sys.b_slots():
        rank = mu - nu - rho + 1
        shape = (sys.spatial_dim,) * rank + (sys.dims[mu], sys.dims[nu])
        extra = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        t = MultiIndexTensor(sys.spatial_dim, rank, (sys.dims[mu], sys.dims[nu]), extra)
        B[(mu, rho, nu)] = (B[(mu, rho, nu)] + t) if (mu, rho, nu) in B else t
    return sys.copy_with(B=B, label=sys.label + "+Bfuzz")


def random_strong_system(rng, N, D=3, slots_per_level=2, with_b=True, label=None):
    """Random strongly hyperbolic system, strong by construction.

    Slot k runs through all levels; adjacent levels are either wave-coupled
    (A^{mu}_{mu+1} = 1, A^{mu+1}_{mu} = c^2 delta^{ij}) or left decoupled,
    and every slot may pick up advection on its diagonal.  Per slot the
    symbol is tridiagonal with constant positive off-diagonal products and a
    real diagonal, hence symmetrizable by one constant diagonal scaling for
    every direction: real spectrum with uniformly conditioned eigenvectors.
    A random block-diagonal conjugation then mixes the slots without
    breaking the FTNS block structure, and random non-principal B terms are
    layered on top (they must not change any verdict).
    """
    dims = tuple([slots_per_level] * N)
    A = {}
    for mu in range(N):
        A[(mu, mu)] = np.zeros((D, dims[mu], dims[mu]), dtype=complex)
        if mu + 1 <= N - 1:
            A[(mu, mu + 1)] = np.zeros((dims[mu], dims[mu + 1]), dtype=complex)
            A[(mu + 1, mu)] = np.zeros((D, D, dims[mu + 1], dims[mu]), dtype=complex)
    for k in range(slots_per_level):
        for mu in range(N - 1):
            if rng.random() < 0.5:
                c = 0.5 + 1.5 * rng.random()
                A[(mu, mu + 1)][k, k] += 1.0
                A[(mu + 1, mu)][:, :, k, k] += c ** 2 * np.eye(D)
        for mu in range(N):
            if rng.random() < 0.7:
                e = np.zeros(D)
                e[rng.integers(0, D)] = 1.0
                c = -2.0 + 4.0 * rng.random()
                A[(mu, mu)][:, k, k] += c * e
    tensors = {}
    for (mu, nu), arr in A.items():
        if np.max(np.abs(arr)) == 0.0:
            continue
        rank = mu - nu + 1
        tensors[(mu, nu)] = MultiIndexTensor(D, rank, (dims[mu], dims[nu]), arr)
    sys = FTNSSystem(N, D, dims, tensors, {}, label or f"random-strong-N{N}")
    sys = _conjugate_blocks(rng, sys)
    if with_b:
        sys = random_b_fuzz(rng, sys, scale=0.5)
    return sys


def _conjugate_blocks(rng, sys):
    """Apply v^mu -> U_mu v^mu with random well-conditioned U_mu."""
    us = []
    for n in sys.dims:
        G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        U = np.eye(n) + 0.35 * G / max(1.0, np.linalg.norm(G, 2))
        us.append(U)
    A = {}
    for (mu, nu), t in sys.A.items():
        arr = np.einsum("...ab,ca,bd->...cd", t.entries, us[mu], np.linalg.inv(us[nu]))
        A[(mu, nu)] = MultiIndexTensor(sys.spatial_dim, t.rank, t.block_shape, arr)
    return sys.copy_with(A=A)


# -- reverse-engineered symmetric hyperbolic instances ------------------------


def _a_parameter_basis(sys0):
    """Hermitian-friendly real basis of the A-coefficient space.

    One system per canonical index tuple, block entry and real/imag part;
    the coefficient value is shared by every arrangement of the tuple.
    """
    D = sys0.spatial_dim
    elems = []
    for (mu, nu) in sys0.a_slots():
        rank = mu - nu + 1
        shape = (sys0.dims[mu], sys0.dims[nu])
        for tup in sym_index_basis(D, rank):
            for a in range(shape[0]):
                for b in range(shape[1]):
                    for val in (1.0, 1.0j):
                        mat = np.zeros(shape, dtype=complex)
                        mat[a, b] = val
                        t = MultiIndexTensor.from_index_dict(D, rank, shape, {tup: mat})
                        elems.append(((mu, nu), t))
    return elems


def _assemble_system(sys0, elems, coefs, label):
    A = {}
    for ((mu, nu), t), c in zip(elems, coefs):
        if abs(c) < 1e-14:
            continue
        A[(mu, nu)] = (A[(mu, nu)] + c * t) if (mu, nu) in A else c * t
    return FTNSSystem(sys0.N, sys0.spatial_dim, sys0.dims, A, {}, label)


def random_pd_form(rng, basis, spread=0.4):
    """Random Hermitian positive definite form over a compressed basis."""
    from .symmetrizer import weighted_identity
    M = basis.size
    G = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    U = 0.5 * (G + G.conj().T)
    U /= max(1.0, np.linalg.norm(U, 2))
    W = weighted_identity(basis)
    Wh = np.diag(np.sqrt(np.diag(W).real)).astype(complex)
    H = Wh @ (np.eye(M) + spread * U) @ Wh
    return 0.5 * (H + H.conj().T)


def random_symmetrizable_pair(rng, N, D=3, dims=None, max_tries=6):
    """(system, H) with H a known PD candidate symmetrizer.

    Picks a random positive definite H, assembles the linear condition
    "fully symmetrized Hermiticity defect of H A = 0" over the
    A-coefficients and samples a random nullspace element.  When a drawn H
    leaves no nonzero solutions it is blended toward the Euclidean form,
    whose nullspace is rich.
    """
    from .symmetrizer import _defect_structure, _defect_vector, weighted_identity
    from .systems import principal_matrix
    dims = tuple(dims) if dims is not None else tuple([1] * N)
    sys0 = FTNSSystem(N, D, dims, {}, {}, "seed")
    basis = sys0.basis()
    structure = _defect_structure(sys0)
    elems = _a_parameter_basis(sys0)
    mats = [principal_matrix(_assemble_system(sys0, elems, e, "basis")).matrices
            for e in np.eye(len(elems))]
    H0 = random_pd_form(rng, basis)
    W = weighted_identity(basis)
    for t in np.linspace(0.0, 1.0, max_tries):
        H = (1.0 - t) * H0 + t * W
        cols = [_defect_vector(sys0, structure, m, H) for m in mats]
        A = np.stack(cols, axis=1)
        u, sv, vt = np.linalg.svd(A, full_matrices=True)
        cut = (sv[0] if sv.size else 0.0) * max(A.shape) * np.finfo(float).eps * 10
        rank = int(np.sum(sv > cut))
        null = vt[rank:].T
        if null.shape[1] == 0:
            continue
        x = null @ rng.standard_normal(null.shape[1])
        if np.linalg.norm(x) < 1e-9:
            continue
        x /= np.linalg.norm(x)
        sys = _assemble_system(sys0, elems, x, f"symhyp-N{N}")
        if max(t.norm() for t in sys.A.values()) > 1e-6:
            return sys, H
    raise RuntimeError("could not sample a symmetrizable system")


def random_first_order_symmetrizable(rng, N, D=3, dims=None, max_tries=4):
    """(parent system, vars, H1): a direct FT1S reduction with a known
    first-order symmetrizer, built by symmetrizing a random PD form
    against the reduction class.

    Unknowns are the parent A coefficients plus the highest-index Dbar
    additions; the Hermiticity of H1 A1^p for every coordinate p is a
    linear condition on them, and a random nullspace element provides the
    instance.
    """
    from .symmetrizer import (DirectLayout, DirectReductionVars,
                              build_direct_ft1s, weighted_identity)
    dims = tuple(dims) if dims is not None else tuple([1] * N)
    sys0 = FTNSSystem(N, D, dims, {}, {}, "seed")
    lay = DirectLayout(sys0)
    basis = sys0.basis()

    a_elems = _a_parameter_basis(sys0)
    dbar_keys = []
    d_keys = []
    vars0 = DirectReductionVars.zero(sys0)
    for X in DirectReductionVars.equation_labels(sys0):
        for nu in range(N - 1):
            key = (X, N - nu - 1, nu)
            arr = vars0.Dbar[key]
            for idx in np.ndindex(arr.shape):
                for val in (1.0, 1.0j):
                    dbar_keys.append((key, idx, val))
            if X[0] == "v":
                key1 = (X, 1, nu)
                for idx in np.ndindex(vars0.D[key1].shape):
                    for val in (1.0, 1.0j):
                        d_keys.append((key1, idx, val))

    def build(coefs):
        na, nd = len(a_elems), len(dbar_keys)
        sys = _assemble_system(sys0, a_elems, coefs[:na], "fo-symhyp")
        vars = DirectReductionVars.zero(sys0)
        touched = set()
        for (key, idx, val), c in zip(dbar_keys, coefs[na:na + nd]):
            if abs(c) > 1e-14:
                vars.Dbar[key][idx] += c * val
                touched.add(key)
        # project the Dbar additions onto the admissible symmetry class
        for key in touched:
            vars.Dbar[key] = _project_dbar(vars.Dbar[key], D)
        for (key, idx, val), c in zip(d_keys, coefs[na + nd:]):
            if abs(c) > 1e-14:
                vars.D[key][idx] += c * val
        vars.parent = sys
        vars.layout = lay
        return sys, vars

    nunknown = len(a_elems) + len(dbar_keys) + len(d_keys)

    def herm_defect(coefs, H1):
        sys, vars = build(coefs)
        red = build_direct_ft1s(sys, vars)
        A1 = red.sys.A[(0, 0)]
        rows = []
        for p in range(D):
            M = H1 @ A1[(p,)]
            rows.append((M - M.conj().T).ravel())
        v = np.concatenate(rows)
        return np.concatenate([v.real, v.imag])

    gamma = lay.gamma_matrix()
    M1 = lay.size
    G = rng.standard_normal((M1, M1)) + 1j * rng.standard_normal((M1, M1))
    U = 0.5 * (G + G.conj().T)
    U /= max(1.0, np.linalg.norm(U, 2))
    base = np.zeros((M1, M1), dtype=complex)
    base[: lay.cut, : lay.cut] = gamma[: lay.cut, : lay.cut]
    base[lay.cut:, lay.cut:] = random_pd_form(rng, basis)
    for t in np.linspace(0.0, 1.0, max_tries):
        H1 = base + (1.0 - t) * 0.3 * np.diag(np.sqrt(np.diag(base).real)) @ U \
            @ np.diag(np.sqrt(np.diag(base).real))
        H1 = 0.5 * (H1 + H1.conj().T)
        if np.min(np.linalg.eigvalsh(H1)) <= 1e-8:
            continue
        cols = [herm_defect(e, H1) for e in np.eye(nunknown)]
        A = np.stack(cols, axis=1)
        u, sv, vt = np.linalg.svd(A, full_matrices=True)
        cut = (sv[0] if sv.size else 0.0) * max(A.shape) * np.finfo(float).eps * 10
        rank = int(np.sum(sv > cut))
        null = vt[rank:].T
        if null.shape[1] == 0:
            continue
        x = null @ rng.standard_normal(null.shape[1])
        if np.linalg.norm(x) < 1e-9:
            continue
        x /= np.linalg.norm(x)
        sys, vars = build(x)
        if any(t.norm() > 1e-8 for t in sys.A.values()):
            return sys, vars, H1
    raise RuntimeError("could not sample a symmetric hyperbolic reduction")


def _project_dbar(arr, D):
    """Project onto the Dbar symmetry class (trailing sym, full sym zero)."""
    from .symmetrizer import _compress_trailing, _full_sym, _sym_trailing_from
    rows, Dax, cs, n = arr.shape
    sigma = _sigma_of_csize(cs, D)
    tups = sym_index_basis(D, sigma)
    full = np.zeros((rows,) + (D,) * (sigma + 1) + (n,), dtype=complex)
    for p in range(Dax):
        for ti, tup in enumerate(tups):
            for arrangement in _arrangements(tup):
                full[(slice(None), p) + arrangement] = arr[:, p, ti]
    full = _sym_trailing_from(full, 2, sigma)
    full = full - _full_sym(full, 1, sigma + 1)
    return np.stack([_compress_trailing(full[:, p], sigma, D) for p in range(D)],
                    axis=1)


def _sigma_of_csize(cs, D):
    sigma = 0
    while len(sym_index_basis(D, sigma)) != cs:
        sigma += 1
        if sigma > 12:
            raise ValueError("cannot infer tuple length")
    return sigma


def _arrangements(tup):
    from .tensors import distinct_permutations
    return list(distinct_permutations(tup))
