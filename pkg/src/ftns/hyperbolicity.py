"""Strong-hyperbolicity classification of a principal symbol family.

For each sampled direction the symbol is eigendecomposed; the verdict is

    strong          real spectrum and kappa(T) <= kappa_max everywhere
    weak            real spectrum everywhere, but some direction defective
                    or with unbounded eigenvectors
    not_hyperbolic  some direction has eigenvalues off the real axis
    inconclusive    an eigensolver failure prevented a verdict

together with sampled estimates of the symmetrizer bound M_N (built from
H(s) = (T T^dag)^{-1}) and the diagonalizer bound K_N.  Both are lower
bounds of the true suprema; the report says "sampled" explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directions import default_sample
from .systems import principal_matrix, validate

__all__ = [
    "EigenStructure",
    "DirectionRecord",
    "StrongHypReport",
    "eigenstructure",
    "build_Hs",
    "classify_strong",
    "REALNESS_TOL",
    "KAPPA_MAX",
]

REALNESS_TOL = 1e-9
KAPPA_MAX = 1e8


class EigenFailure(Exception):
    """Numerical eigensolver failure; surfaces as an inconclusive verdict."""


class NotDiagonalizable(ValueError):
    """Raised by build_Hs on defective or complex-spectrum input."""


@dataclass
class EigenStructure:
    eigenvalues: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray           # None when defective
    kappa: float                # inf when defective
    defect_flag: bool


def eigenstructure(P, tol=1e-12):
    """Eigendecomposition with a numerical-defect diagnosis.

    T columns are unit eigenvectors; defect_flag is set when the smallest
    singular value of T falls below tol times the largest, in which case
    kappa is inf and T_inv is None.
    """
    P = np.asarray(P, dtype=complex)
    if P.shape[0] != P.shape[1]:
        raise ValueError("symbol must be square")
    try:
        lam, T = np.linalg.eig(P)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    norms = np.linalg.norm(T, axis=0)
    norms[norms == 0.0] = 1.0
    T = T / norms
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] < tol * sv[0]:
        return EigenStructure(lam, T, None, np.inf, True)
    T_inv = np.linalg.inv(T)
    kappa = float(sv[0] / sv[-1])
    return EigenStructure(lam, T, T_inv, kappa, False)


def build_Hs(P, T=None, tol=REALNESS_TOL):
    """Symmetrizer H(s) = (T T^dag)^{-1} from a real-diagonalizable symbol.

    H is Hermitian positive definite and satisfies H P = P^dag H up to
    rounding (exactly, in exact arithmetic, whenever the spectrum is real).
    """
    P = np.asarray(P, dtype=complex)
    if T is None:
        es = eigenstructure(P)
        if es.defect_flag:
            raise NotDiagonalizable("defective symbol")
        lam, T = es.eigenvalues, es.T
    else:
        lam = np.diag(np.linalg.solve(T, P @ T))
    if np.any(np.abs(lam.imag) > tol * (1.0 + np.abs(lam))):
        raise NotDiagonalizable("spectrum is not real")
    H = np.linalg.inv(T @ T.conj().T)
    return 0.5 * (H + H.conj().T)


def hermiticity_residual(H, P):
    return float(np.linalg.norm(H @ P - P.conj().T @ H, 2))


@dataclass
class DirectionRecord:
    s: np.ndarray
    eigenvalues: np.ndarray
    max_imag: float
    kappa: float
    defect: bool
    herm_residual: float        # nan when H was not built
    H_norm: float
    H_inv_norm: float
    T_norm: float
    T_inv_norm: float
    failed: bool = False


@dataclass
class StrongHypReport:
    verdict: str
    records: list
    M_estimate: float
    K_estimate: float
    worst_direction: np.ndarray
    tol: float
    kappa_max: float
    sample_scheme: str
    label: str = ""

    def direction_count(self):
        return len(self.records)

    def summary_lines(self):
        lines = [
            f"system: {self.label}",
            f"verdict: {self.verdict}",
            f"directions sampled: {self.direction_count()} ({self.sample_scheme})",
            f"realness tol: {self.tol:.3g}   kappa_max: {self.kappa_max:.3g}",
            f"M estimate (sampled sup of max(|H|,|H^-1|)): {self.M_estimate:.17g}",
            f"K estimate (sampled sup of max(|T|,|T^-1|)): {self.K_estimate:.17g}",
            "worst direction: [" + ", ".join(f"{x:.17g}" for x in self.worst_direction) + "]",
        ]
        return lines


def classify_strong(sys, sample=None, tol=REALNESS_TOL, kappa_max=KAPPA_MAX, dense=False):
    """Classify an FTNS system over a direction sample.

    The verdict is computed from the principal symbol only; non-principal
    B terms cannot change it.
    """
    problems = validate(sys)
    if problems:
        raise ValueError("system does not validate: " + "; ".join(problems))
    if sample is None:
        sample = default_sample(sys.spatial_dim, dense=dense)
    po = principal_matrix(sys)

    records = []
    any_complex = any_weak = any_failed = False
    M_est = K_est = 0.0
    worst = sample.directions[0]
    worst_score = -1.0
    for s in sample:
        P = po.symbol_from_matrix(s)
        try:
            es = eigenstructure(P)
        except EigenFailure:
            records.append(DirectionRecord(s, np.array([]), np.nan, np.nan, False,
                                           np.nan, np.nan, np.nan, np.nan, np.nan,
                                           failed=True))
            any_failed = True
            continue
        lam = es.eigenvalues
        max_im = float(np.max(np.abs(lam.imag))) if lam.size else 0.0
        complex_here = bool(np.any(np.abs(lam.imag) > tol * (1.0 + np.abs(lam))))
        weak_here = es.defect_flag or es.kappa > kappa_max
        herm = H_norm = H_inv_norm = np.nan
        if not complex_here and not es.defect_flag:
            H = np.linalg.inv(es.T @ es.T.conj().T)
            H = 0.5 * (H + H.conj().T)
            herm = hermiticity_residual(H, P)
            H_norm = float(np.linalg.norm(H, 2))
            H_inv_norm = float(np.linalg.norm(es.T @ es.T.conj().T, 2))
            M_est = max(M_est, H_norm, H_inv_norm)
        T_norm = float(np.linalg.norm(es.T, 2))
        T_inv_norm = float(np.linalg.norm(es.T_inv, 2)) if es.T_inv is not None else np.inf
        if np.isfinite(es.kappa):
            K_est = max(K_est, T_norm, T_inv_norm)
        records.append(DirectionRecord(s, lam, max_im, es.kappa, es.defect_flag,
                                       herm, H_norm, H_inv_norm, T_norm, T_inv_norm))
        any_complex |= complex_here
        any_weak |= weak_here
        score = max_im if complex_here else (es.kappa if np.isfinite(es.kappa) else 1e300)
        if score > worst_score:
            worst_score, worst = score, s

    if any_complex:
        verdict = "not_hyperbolic"
    elif any_weak:
        verdict = "weak"
    elif any_failed:
        verdict = "inconclusive"
    else:
        verdict = "strong"
    return StrongHypReport(verdict, records, M_est, K_est, np.asarray(worst),
                           tol, kappa_max, sample.scheme, sys.label)
