"""Linear constant-coefficient differential operators on a polynomial basis.

A constant-coefficient operator is determined by its action on monomials of
bounded degree, so operator identities (constraint-evolution closure,
redundancy of higher constraints) become finite linear-algebra statements.
This keeps the closure checks exact without a computer-algebra dependency.

Fields are a list of vector-valued blocks; a :class:`LinOp` maps the tuple
of fields to one vector-valued polynomial via terms (C, block, alpha)
meaning  C . d^alpha (field_block).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = ["PolySpace", "LinOp", "operator_span_residual"]


class PolySpace:
    """Monomial basis x^alpha, |alpha| <= deg, over D variables."""

    def __init__(self, D, deg):
        self.D = D
        self.deg = deg
        self.monomials = [tuple(m) for m in _exponents_upto(D, deg)]
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.size = len(self.monomials)

    def deriv_factor(self, alpha, beta):
        """d^alpha x^beta = factor * x^(beta-alpha), or (0, None)."""
        target = []
        factor = 1.0
        for a, b in zip(alpha, beta):
            if b < a:
                return 0.0, None
            for r in range(a):
                factor *= (b - r)
            target.append(b - a)
        return factor, tuple(target)


def _exponents_upto(D, deg):
    for total in range(deg + 1):
        for cuts in itertools.combinations(range(total + D - 1), D - 1):
            alpha = []
            prev = -1
            for c in cuts:
                alpha.append(c - prev - 1)
                prev = c
            alpha.append(total + D - 2 - prev)
            yield alpha


@dataclass
class LinOp:
    """sum over terms of  C . d^alpha (field_block)."""

    out_dim: int
    field_dims: tuple
    terms: list                      # (C ndarray, block index, alpha tuple)

    @classmethod
    def zero(cls, out_dim, field_dims):
        return cls(out_dim, tuple(field_dims), [])

    def add_term(self, C, block, alpha):
        C = np.asarray(C, dtype=complex)
        if C.shape != (self.out_dim, self.field_dims[block]):
            raise ValueError(f"coefficient shape {C.shape} does not match "
                             f"({self.out_dim}, {self.field_dims[block]})")
        self.terms.append((C, block, tuple(alpha)))
        return self

    def __add__(self, other):
        if (self.out_dim, self.field_dims) != (other.out_dim, other.field_dims):
            raise ValueError("incompatible operators")
        return LinOp(self.out_dim, self.field_dims, self.terms + other.terms)

    def spatial_derivative(self, axis):
        out = []
        for (C, b, a) in self.terms:
            a2 = list(a)
            a2[axis] += 1
            out.append((C, b, tuple(a2)))
        return LinOp(self.out_dim, self.field_dims, out)

    def time_derivative(self, rhs_ops):
        """Substitute dt(field_b) = rhs_ops[b] into every term."""
        out = LinOp.zero(self.out_dim, self.field_dims)
        for (C, b, alpha) in self.terms:
            for (C2, b2, alpha2) in rhs_ops[b].terms:
                out.add_term(C @ C2, b2, tuple(x + y for x, y in zip(alpha, alpha2)))
        return out

    def matrix(self, space):
        """Dense map from stacked field coefficients to output coefficients.

        Field block b is laid out as (component, monomial); the output as
        (out component, monomial).
        """
        M = space.size
        F = sum(self.field_dims) * M
        offsets = np.cumsum([0] + [n * M for n in self.field_dims])
        out = np.zeros((self.out_dim * M, F), dtype=complex)
        for (C, b, alpha) in self.terms:
            for mi, beta in enumerate(space.monomials):
                factor, target = space.deriv_factor(alpha, beta)
                if target is None:
                    continue
                ti = space.index[target]
                for o in range(self.out_dim):
                    for c in range(self.field_dims[b]):
                        if C[o, c] != 0.0:
                            out[o * M + ti, offsets[b] + c * M + mi] += factor * C[o, c]
        return out


def operator_span_residual(target, generators, space):
    """Least-squares distance of ``target`` from constant mixes of generators.

    Solves target = sum_g K_g . generator_g for constant matrices K_g and
    returns (max relative residual over output components, solution list).
    """
    tmat = target.matrix(space)
    M = space.size
    rows = []
    meta = []
    for gi, g in enumerate(generators):
        gmat = g.matrix(space)
        for r in range(g.out_dim):
            rows.append(gmat[r * M:(r + 1) * M, :].ravel())
            meta.append((gi, r))
    if not rows:
        resid = np.linalg.norm(tmat)
        return float(resid), []
    A = np.array(rows).T                                  # (M*F, R)
    B = np.stack([tmat[o * M:(o + 1) * M, :].ravel()
                  for o in range(target.out_dim)], axis=1)
    X, *_ = np.linalg.lstsq(A, B, rcond=None)
    R = A @ X - B
    scale = 1.0 + np.max(np.abs(B))
    residual = float(np.max(np.abs(R))) / scale
    mixes = []
    for gi, g in enumerate(generators):
        K = np.zeros((target.out_dim, g.out_dim), dtype=complex)
        for ri, (gj, r) in enumerate(meta):
            if gj == gi:
                K[:, r] = X[ri, :]
        mixes.append(K)
    return residual, mixes
