"""Desk-scale empirical validation of hyperbolicity verdicts.

Two probes:

* Fourier-mode evolution: for a single wave vector omega = |omega| s the
  scaled mode obeys  u' = i |omega| P_N^s u, the pseudo-differential
  reduction made executable.  Growth factors uniform in |omega| go with
  strong hyperbolicity; log-growth proportional to |omega| exposes
  complex spectrum.

* Method-of-lines grid evolution: periodic domain, centered differences
  of configurable order, classic RK4, with energy (against a given
  symmetrizer) and auxiliary-constraint tracking.

Initial data come with exact derivatives so reduced systems can be fed
constraint-satisfying data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import as_direction_array, principal_matrix

__all__ = [
    "SineMode",
    "Constant",
    "PeriodizedGaussian",
    "band_limited_data",
    "FourierModeRun",
    "fourier_evolve",
    "fit_growth_slope",
    "GridSpec",
    "GridRun",
    "grid_evolve",
    "compare_parent_child",
    "fd_weights",
]


# -- initial data with exact derivatives ---------------------------------------


class Constant:
    def __init__(self, value=0.0):
        self.value = value

    def __call__(self, *coords):
        return self.value * np.ones_like(coords[0])

    def deriv(self, axis):
        return Constant(0.0)


class SineMode:
    """amp * sin(k . x + phase); closed under differentiation."""

    def __init__(self, k, amp=1.0, phase=0.0):
        self.k = np.asarray(k, dtype=float)
        self.amp = float(amp)
        self.phase = float(phase)

    def __call__(self, *coords):
        arg = self.phase
        for ki, x in zip(self.k, coords):
            arg = arg + ki * x
        return self.amp * np.sin(arg)

    def deriv(self, axis):
        return SineMode(self.k, self.amp * self.k[axis], self.phase + 0.5 * np.pi)


class _Sum:
    def __init__(self, parts):
        self.parts = parts

    def __call__(self, *coords):
        out = self.parts[0](*coords)
        for p in self.parts[1:]:
            out = out + p(*coords)
        return out

    def deriv(self, axis):
        return _Sum([p.deriv(axis) for p in self.parts])


def band_limited_data(rng, D=1, kmax=3, amp=1.0, terms=6):
    """Random trigonometric polynomial with a fixed seed: smooth, periodic,
    exactly differentiable."""
    parts = []
    for _ in range(terms):
        k = rng.integers(-kmax, kmax + 1, size=D)
        if not np.any(k):
            k[0] = 1
        parts.append(SineMode(k, amp * rng.standard_normal(),
                              2.0 * np.pi * rng.random()))
    return _Sum(parts)


class PeriodizedGaussian:
    """Product of per-axis image sums  poly(u) exp(-u^2 / 2 w^2).

    Differentiation stays in the class: the polynomial factor picks up
    -u/w^2 times the old one plus its own derivative.
    """

    def __init__(self, center, width=0.5, length=2.0 * np.pi, images=3, polys=None):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.width = float(width)
        self.length = float(length)
        self.images = int(images)
        D = self.center.shape[0]
        self.polys = polys if polys is not None else [np.array([1.0]) for _ in range(D)]

    def _axis_eval(self, axis, x):
        out = np.zeros_like(x, dtype=float)
        w2 = self.width ** 2
        for m in range(-self.images, self.images + 1):
            u = x - self.center[axis] - m * self.length
            out += np.polyval(self.polys[axis][::-1], u) * np.exp(-u * u / (2 * w2))
        return out

    def __call__(self, *coords):
        out = self._axis_eval(0, coords[0])
        for axis in range(1, len(self.center)):
            out = out * self._axis_eval(axis, coords[axis])
        return out

    def deriv(self, axis):
        # d/du [p(u) e^{-u^2/2w^2}] = (p'(u) - u p(u)/w^2) e^{-u^2/2w^2};
        # axes beyond the data's own dimensionality are constant directions
        if axis >= len(self.center):
            return Constant(0.0)
        p = self.polys[axis]
        dp = np.arange(1, len(p)) * p[1:] if len(p) > 1 else np.zeros(0)
        shifted = np.zeros(len(p) + 1)
        shifted[1:] = -p / self.width ** 2
        new = np.zeros(max(len(dp), len(shifted)))
        new[: len(dp)] += dp
        new[: len(shifted)] += shifted
        polys = [q.copy() for q in self.polys]
        polys[axis] = new
        return PeriodizedGaussian(self.center, self.width, self.length,
                                  self.images, polys)


# -- Fourier-mode evolution -----------------------------------------------------


@dataclass
class FourierModeRun:
    system: object
    s: np.ndarray
    omegas: tuple = (1.0, 10.0, 100.0, 1000.0)
    t_final: float = 1.0
    method: str = "auto"          # auto | eig | ode


@dataclass
class FourierGrowthTable:
    s: np.ndarray
    t_final: float
    rows: list                    # (omega, growth factor)

    def slope(self):
        return fit_growth_slope(self.rows)


def fourier_evolve(run):
    """Growth factor |exp(i |omega| t P)| per |omega|.

    The factor is the operator 2-norm of the propagator of the scaled mode
    (worst case over initial data).  Diagonalizable symbols use the exact
    eigendecomposition; defective ones fall back to high-accuracy ODE
    stepping of the propagator.
    """
    sys = run.system
    s = as_direction_array(run.s)
    P = principal_matrix(sys).symbol_from_matrix(s)
    rows = []
    for omega in run.omegas:
        rows.append((float(omega), _propagator_norm(P, omega * run.t_final, run.method)))
    return FourierGrowthTable(s, run.t_final, rows)


def _propagator_norm(P, tau, method="auto"):
    n = P.shape[0]
    if n == 0:
        return 1.0
    use_eig = method in ("auto", "eig")
    if use_eig:
        lam, T = np.linalg.eig(P)
        sv = np.linalg.svd(T, compute_uv=False)
        if sv[-1] > 1e-10 * sv[0]:
            U = T @ np.diag(np.exp(1j * tau * lam)) @ np.linalg.inv(T)
            return float(np.linalg.norm(U, 2))
        if method == "eig":
            raise ValueError("symbol is numerically defective")
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        U = y.reshape(n, n)
        return (1j * P @ U).ravel()

    y0 = np.eye(n, dtype=complex).ravel()
    sol = solve_ivp(rhs, (0.0, tau), y0, method="DOP853", rtol=1e-12, atol=1e-12)
    U = sol.y[:, -1].reshape(n, n)
    return float(np.linalg.norm(U, 2))


def fit_growth_slope(rows):
    """Least-squares slope b of log(growth) ~ a + b |omega|."""
    om = np.array([r[0] for r in rows])
    lg = np.log(np.maximum(1e-300, [r[1] for r in rows]))
    A = np.stack([np.ones_like(om), om], axis=1)
    coef, *_ = np.linalg.lstsq(A, lg, rcond=None)
    return float(coef[1])


# -- finite differences ----------------------------------------------------------


def fd_weights(m, acc=4):
    """Centered finite-difference offsets and weights for the m-th
    derivative at the given accuracy order (Fornberg's algorithm)."""
    r = (m + acc - 1) // 2
    x = np.arange(-r, r + 1, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i]
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return x.astype(int), c[:, m]


class _Differ:
    """Periodic centered differences on a uniform grid, via np.roll."""

    def __init__(self, h, acc=4, max_order=6):
        self.h = h
        self.acc = acc
        self.tables = {m: fd_weights(m, acc) for m in range(1, max_order + 1)}

    def axis_deriv(self, f, axis, m):
        if m == 0:
            return f
        offs, w = self.tables[m]
        out = np.zeros_like(f)
        for o, c in zip(offs, w):
            out += c * np.roll(f, -o, axis=axis)
        return out / self.h ** m


@dataclass
class GridSpec:
    dim: int = 1
    points: int = 128
    length: float = 2.0 * np.pi
    axes: np.ndarray = None        # (dim, D) frame; default coordinate axes

    def frame(self, D):
        if self.axes is not None:
            return np.asarray(self.axes, dtype=float)
        f = np.zeros((self.dim, D))
        for g in range(self.dim):
            f[g, g % D] = 1.0
        return f

    def spacing(self):
        return self.length / self.points

    def coords(self):
        x = np.arange(self.points) * self.spacing()
        return np.meshgrid(*([x] * self.dim), indexing="ij")


def _grid_deriv(differ, frame, f, alpha):
    """Apply the D-space derivative multi-index alpha on the grid.

    Each d_i expands along the frame as sum_g frame[g, i] d_g; the product
    is expanded into grid-axis monomials first so every axis applies its
    m-th-derivative compact stencil exactly once.
    """
    G = frame.shape[0]
    terms = {tuple([0] * G): 1.0}
    for i, count in enumerate(alpha):
        for _ in range(count):
            new = {}
            for beta, c in terms.items():
                for g in range(G):
                    if frame[g, i] != 0.0:
                        nb = list(beta)
                        nb[g] += 1
                        nb = tuple(nb)
                        new[nb] = new.get(nb, 0.0) + c * frame[g, i]
            terms = new
    out = None
    for beta, c in terms.items():
        df = f
        for g, m in enumerate(beta):
            if m:
                df = differ.axis_deriv(df, g, m)
        out = c * df if out is None else out + c * df
    return out if out is not None else np.zeros_like(f)


def _tensor_term(differ, frame, coeff, field, extra=0):
    """coeff (multi-index tensor) applied to derivatives of field.

    field: (n_in,) + grid; returns (n_out,) + grid.  ``extra`` reserved.
    """
    D = coeff.spatial_dim
    out = None
    for tup in np.ndindex(*([D] * coeff.rank)):
        alpha = [0] * D
        for i in tup:
            alpha[i] += 1
        mat = coeff[tup]
        if not np.any(mat):
            continue
        df = np.stack([_grid_deriv(differ, frame, field[c], alpha)
                       for c in range(field.shape[0])])
        term = np.tensordot(mat, df, axes=([1], [0]))
        out = term if out is None else out + term
    if out is None:
        out = np.zeros((coeff.block_shape[0],) + field.shape[1:], dtype=complex)
    return out


@dataclass
class GridRun:
    system: object                 # FTNSSystem
    grid: GridSpec
    initial_data: list             # per block: list of data objects
    t_final: float = 2.0 * np.pi
    cfl: float = 0.25
    fd_order: int = 4
    sym_candidate: object = None   # SymCandidate or matrix over the state basis
    constraint_ops: dict = None    # name -> LinOp over the field blocks
    n_samples: int = 65
    lambda_max: float = None       # spectral-radius estimate; sampled when None


@dataclass
class GridSeries:
    times: np.ndarray
    solution_norm: np.ndarray
    energy: np.ndarray             # empty when no symmetrizer given
    constraint_norms: dict
    final_fields: list
    status: str
    dt: float
    steps: int


def _lambda_estimate(sys, samples=24):
    po = principal_matrix(sys)
    rng = np.random.default_rng(0)
    top = 0.0
    for _ in range(samples):
        s = rng.standard_normal(sys.spatial_dim)
        s /= np.linalg.norm(s)
        top = max(top, float(np.max(np.abs(np.linalg.eigvals(
            po.symbol_from_matrix(s))))))
    return max(1.0, top)


def grid_evolve(run):
    """Method-of-lines evolution; returns tracked time series.

    Norm blowup past 1e10 terminates the run with status "unstable".
    """
    sys = run.system
    grid = run.grid
    D = sys.spatial_dim
    frame = grid.frame(D)
    h = grid.spacing()
    differ = _Differ(h, acc=run.fd_order, max_order=sys.N + 1)
    coords = grid.coords()
    fields = []
    for mu, block in enumerate(run.initial_data):
        if len(block) != sys.dims[mu]:
            raise ValueError(f"initial data block {mu} has {len(block)} components, "
                             f"expected {sys.dims[mu]}")
        fields.append(np.stack([np.asarray(f(*coords), dtype=complex)
                                for f in block]))

    lam_max = run.lambda_max if run.lambda_max is not None else _lambda_estimate(sys)
    dt = run.cfl * h / lam_max
    steps = max(1, int(np.ceil(run.t_final / dt)))
    dt = run.t_final / steps

    terms = []
    for store in (sys.A, sys.B):
        for key, t in store.items():
            mu, nu = key[0], key[-1]
            terms.append((mu, nu, t))

    def rhs(flds):
        out = [np.zeros_like(f) for f in flds]
        for mu, nu, t in terms:
            out[mu] += _tensor_term(differ, frame, t, flds[nu])
        return out

    sample_every = max(1, steps // max(1, run.n_samples - 1))
    times, norms, energies = [], [], []
    cnames = list(run.constraint_ops or {})
    cnorms = {name: [] for name in cnames}
    dV = h ** grid.dim
    status = "ok"

    def record(t, flds):
        times.append(t)
        norms.append(float(np.sqrt(sum(np.sum(np.abs(f) ** 2) for f in flds) * dV)))
        if run.sym_candidate is not None:
            energies.append(_grid_energy(sys, differ, frame, flds,
                                         run.sym_candidate, dV))
        for name in cnames:
            cnorms[name].append(_constraint_norm(run.constraint_ops[name],
                                                 differ, frame, flds, dV))

    record(0.0, fields)
    t = 0.0
    for step in range(steps):
        k1 = rhs(fields)
        k2 = rhs([f + 0.5 * dt * k for f, k in zip(fields, k1)])
        k3 = rhs([f + 0.5 * dt * k for f, k in zip(fields, k2)])
        k4 = rhs([f + dt * k for f, k in zip(fields, k3)])
        fields = [f + dt / 6.0 * (a + 2 * b + 2 * c + d)
                  for f, a, b, c, d in zip(fields, k1, k2, k3, k4)]
        t += dt
        if (step + 1) % sample_every == 0 or step == steps - 1:
            record(t, fields)
            if norms[-1] > 1e10 or not np.isfinite(norms[-1]):
                status = "unstable"
                break

    return GridSeries(np.array(times), np.array(norms), np.array(energies),
                      {k: np.array(v) for k, v in cnorms.items()},
                      fields, status, dt, steps)


def _grid_energy(sys, differ, frame, fields, H, dV):
    from .symmetrizer import SymCandidate
    if isinstance(H, SymCandidate):
        H = H.H
    basis = sys.basis()
    U = []
    for (mu, tup, a) in basis.entries:
        alpha = [0] * sys.spatial_dim
        for i in tup:
            alpha[i] += 1
        U.append(_grid_deriv(differ, frame, fields[mu][a], alpha))
    U = np.stack([u.ravel() for u in U])
    return float(np.real(np.einsum("ic,ij,jc->", U.conj(), H, U)) * dV)


def _constraint_norm(op, differ, frame, fields, dV):
    vals = None
    for (C, b, alpha) in op.terms:
        df = np.stack([_grid_deriv(differ, frame, fields[b][c], list(alpha))
                       for c in range(fields[b].shape[0])])
        term = np.tensordot(C, df, axes=([1], [0]))
        vals = term if vals is None else vals + term
    if vals is None:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(vals) ** 2) * dV))


def compare_parent_child(parent_run, reduced, child_data=None):
    """Evolve a system against its reduction on consistent initial data.

    child data defaults to the exact derivative lift of the parent data;
    returns (parent series, child series, discrepancy array over the
    common sample times) where the discrepancy is the L2 distance of the
    child's embedded v-components from the parent fields.
    """
    parent_series = grid_evolve(parent_run)
    data = child_data if child_data is not None else \
        reduced.data_lift(parent_run.initial_data)
    child_run = GridRun(system=reduced.sys, grid=parent_run.grid,
                        initial_data=data, t_final=parent_run.t_final,
                        cfl=parent_run.cfl, fd_order=parent_run.fd_order,
                        n_samples=parent_run.n_samples,
                        lambda_max=parent_run.lambda_max)
    child_series = grid_evolve(child_run)
    offs = reduced.level0_offsets()
    parent = reduced.parent
    h = parent_run.grid.spacing()
    dV = h ** parent_run.grid.dim

    # re-evolve storing only endpoints is enough for the discrepancy at the end
    diff = 0.0
    pf = parent_series.final_fields
    cf = child_series.final_fields
    child0 = cf[0]
    v_parts = [child0[offs["v0"]:offs["v0"] + parent.dims[0]],
               child0[offs["v1"]:offs["v1"] + parent.dims[1]]]
    v_parts += [cf[m] for m in range(1, len(cf))]
    parent_parts = [pf[0], pf[1]] + [pf[m] for m in range(2, len(pf))]
    acc = 0.0
    for got, want in zip(v_parts, parent_parts):
        acc += float(np.sum(np.abs(got - want) ** 2))
    return parent_series, child_series, float(np.sqrt(acc * dV))
