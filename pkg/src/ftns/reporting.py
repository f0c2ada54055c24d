"""Report emission: delimited output plus rendered figures.

Every float prints with 17 significant digits so repeated runs with the
same seed produce byte-identical text and CSV; figures are rendered to
PNG next to them.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def fmt(x):
    return f"{x:.17g}"


# -- strong-hyperbolicity reports -----------------------------------------------


def analysis_csv_text(report):
    n_eig = max((len(r.eigenvalues) for r in report.records), default=0)
    D = len(report.records[0].s) if report.records else 0
    cols = [f"s{i + 1}" for i in range(D)]
    cols += ["max_imag", "kappa", "defect", "herm_residual",
             "H_norm", "H_inv_norm", "T_norm", "T_inv_norm"]
    for k in range(n_eig):
        cols += [f"eig{k}_re", f"eig{k}_im"]
    lines = [",".join(cols)]
    for r in report.records:
        vals = [fmt(x) for x in r.s]
        vals += [fmt(r.max_imag), fmt(r.kappa), str(int(r.defect)),
                 fmt(r.herm_residual), fmt(r.H_norm), fmt(r.H_inv_norm),
                 fmt(r.T_norm), fmt(r.T_inv_norm)]
        lam = sorted(r.eigenvalues, key=lambda z: (z.real, z.imag))
        for k in range(n_eig):
            if k < len(lam):
                vals += [fmt(lam[k].real), fmt(lam[k].imag)]
            else:
                vals += ["nan", "nan"]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def analysis_text(report):
    return "\n".join(report.summary_lines()) + "\n"


def render_analysis_figures(report, outdir, stem):
    paths = []
    fig, ax = plt.subplots(figsize=(5.2, 4.0), dpi=110)
    re = np.concatenate([r.eigenvalues.real for r in report.records if len(r.eigenvalues)])
    im = np.concatenate([r.eigenvalues.imag for r in report.records if len(r.eigenvalues)])
    ax.scatter(re, im, s=4, alpha=0.35, linewidths=0)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("Re eigenvalue")
    ax.set_ylabel("Im eigenvalue")
    ax.set_title(f"{report.label or 'system'}: symbol spectrum over {len(report.records)} directions")
    fig.tight_layout()
    p = f"{outdir}/{stem}_spectrum.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5.2, 4.0), dpi=110)
    kappas = np.array([r.kappa for r in report.records])
    finite = np.isfinite(kappas)
    ax.plot(np.arange(len(kappas))[finite], kappas[finite], ".", ms=3)
    if np.any(~finite):
        ax.plot(np.arange(len(kappas))[~finite],
                np.full(np.sum(~finite), np.nanmax(kappas[finite]) if finite.any() else 1.0),
                "rx", ms=4, label="defective")
        ax.legend(loc="best", fontsize=8)
    ax.axhline(report.kappa_max, color="r", lw=0.8, ls="--")
    ax.set_yscale("log")
    ax.set_xlabel("direction index")
    ax.set_ylabel("kappa(T)")
    ax.set_title(f"verdict: {report.verdict}   M~{report.M_estimate:.3g} K~{report.K_estimate:.3g}")
    fig.tight_layout()
    p = f"{outdir}/{stem}_conditioning.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)
    return paths


# -- growth tables ----------------------------------------------------------------


def growth_csv_text(table):
    slope = table.slope()
    lines = ["omega,growth,fitted_slope"]
    for omega, growth in table.rows:
        lines.append(f"{fmt(omega)},{fmt(growth)},{fmt(slope)}")
    return "\n".join(lines) + "\n"


def render_growth_figure(table, outdir, stem):
    fig, ax = plt.subplots(figsize=(5.2, 4.0), dpi=110)
    om = [r[0] for r in table.rows]
    gr = [r[1] for r in table.rows]
    ax.loglog(om, gr, "o-", ms=4)
    ax.set_xlabel("|omega|")
    ax.set_ylabel("growth factor")
    ax.set_title(f"Fourier-mode growth, slope of log-growth: {table.slope():.4g}")
    fig.tight_layout()
    p = f"{outdir}/{stem}_growth.png"
    fig.savefig(p)
    plt.close(fig)
    return [p]


# -- grid time series --------------------------------------------------------------


def series_csv_text(series):
    cols = ["t", "solution_norm"]
    has_E = series.energy.size > 0
    if has_E:
        cols.append("energy")
    cnames = sorted(series.constraint_norms)
    cols += [f"constraint_{name}" for name in cnames]
    lines = [",".join(cols)]
    for k, t in enumerate(series.times):
        vals = [fmt(t), fmt(series.solution_norm[k])]
        if has_E:
            vals.append(fmt(series.energy[k]))
        for name in cnames:
            vals.append(fmt(series.constraint_norms[name][k]))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def render_series_figures(series, outdir, stem):
    paths = []
    fig, ax = plt.subplots(figsize=(5.2, 4.0), dpi=110)
    ax.plot(series.times, series.solution_norm, label="|u|")
    if series.energy.size:
        ax.plot(series.times, series.energy, label="E")
    ax.set_xlabel("t")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"grid run ({series.status}), dt={series.dt:.3g}, {series.steps} steps")
    fig.tight_layout()
    p = f"{outdir}/{stem}_series.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)
    if series.constraint_norms:
        fig, ax = plt.subplots(figsize=(5.2, 4.0), dpi=110)
        for name, vals in sorted(series.constraint_norms.items()):
            ax.semilogy(series.times, np.maximum(vals, 1e-300), label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("constraint L2 norm")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        p = f"{outdir}/{stem}_constraints.png"
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths


# -- symmetrizer reports ------------------------------------------------------------


def symmetrize_text(sys, cand_result, jres=None):
    lines = [f"system: {sys.label}", f"order N: {sys.N}",
             f"candidate search: {cand_result.status}",
             f"candidate nullspace dimension: {cand_result.nullspace_dim}",
             f"candidate defect residual: {fmt(cand_result.residual)}",
             f"min eigenvalue of returned H: {fmt(cand_result.min_eigenvalue)}"]
    if jres is not None:
        lines += [f"J solve: {jres.status}",
                  f"J unknowns: {jres.unknowns}   equations: {jres.equations}   "
                  f"rank: {jres.rank}",
                  f"J least-squares residual: {fmt(jres.lstsq_residual)}",
                  "first-order Hermiticity residuals per coordinate: "
                  + " ".join(fmt(h) for h in jres.herm_residuals)]
        if sys.N > 4 and jres.status == "ok":
            lines.append("note: order N > 4 lies beyond the verified range of this "
                         "construction; the solve above is an empirical feasibility "
                         "report, not a general-order statement")
    return "\n".join(lines) + "\n"
