"""Acceptance criteria, one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion (failures raise with details).
"""

import math
import time

import numpy as np

from ftns.catalog import (
    companion_ft3s,
    random_first_order_symmetrizable,
    random_symmetrizable_pair,
    random_strong_system,
    random_system,
    wave_ft2s,
)
from ftns.directions import DirectionSample, fibonacci_sphere
from ftns.evolution import (
    Constant,
    FourierModeRun,
    GridRun,
    GridSpec,
    PeriodizedGaussian,
    fourier_evolve,
    grid_evolve,
)
from ftns.hyperbolicity import build_Hs, classify_strong, eigenstructure
from ftns.polyops import PolySpace, operator_span_residual
from ftns.reduction import (
    IterativeReductionParams,
    constraint_evolution,
    decompose_21,
    extract_parent_symmetrizer,
    iterate_to_first_order,
    lift_diagonalizer,
    reduce_once,
)
from ftns.symmetrizer import (
    DirectReductionVars,
    build_direct_ft1s,
    extract_HN_from_H1,
    is_candidate,
    solve_candidate,
    solve_J,
    weighted_identity,
)
from ftns.systems import principal_matrix, principal_symbol, system_rhs_ops

from test_systems import ft2s_principal_matrix_oracle, ft3s_principal_matrix_oracle


def _report(num, detail):
    print(f"\nACCEPTANCE {num}: PASS - {detail}")


def _directions(rng, count=50):
    pts = rng.standard_normal((count, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return DirectionSample(pts, f"random-{count}")


def test_acceptance_1_specialization_agreement():
    """Generic principal matrix/symbol builders vs the hand-written second-
    and third-order block matrices, 50 systems x 50 directions, 1e-13."""
    t0 = time.time()
    rng = np.random.default_rng(101)
    dirs = _directions(rng, 50)
    worst = 0.0
    for k in range(50):
        N = 2 if k % 2 == 0 else 3
        dims = (2, 1) if N == 2 else (1, 2, 1)
        sys = random_system(rng, N, dims=dims)
        po = principal_matrix(sys)
        oracle = ft2s_principal_matrix_oracle if N == 2 else ft3s_principal_matrix_oracle
        oracles = [oracle(sys, p) for p in range(3)]
        scale = 1.0 + max(np.max(np.abs(M)) for M in oracles)
        for p in range(3):
            worst = max(worst, np.max(np.abs(oracles[p] - po.matrices[p])) / scale)
        for s in dirs.directions[k::10]:
            P = principal_symbol(sys, s)
            P2 = po.symbol_from_matrix(s)
            worst = max(worst, np.max(np.abs(P - P2)) / (1.0 + np.max(np.abs(P))))
    elapsed = time.time() - t0
    assert worst <= 1e-13, worst
    assert elapsed < 1.0, f"runtime {elapsed:.2f}s exceeds 1 s"
    _report(1, f"max relative deviation {worst:.2e}, runtime {elapsed:.2f}s")


def _strong_suite(seed=202):
    rng = np.random.default_rng(seed)
    systems = []
    for N, count in ((2, 7), (3, 7), (4, 6)):
        for _ in range(count):
            systems.append(random_strong_system(rng, N, slots_per_level=1))
    return rng, systems


def test_acceptance_2_spectrum_union():
    """Under partial + epsilon choice the reduced spectrum is the parent
    spectrum plus {+-lambda} plus the zero block, at 50 directions, 1e-9."""
    t0 = time.time()
    rng, systems = _strong_suite()
    dirs = _directions(rng, 50)
    worst = 0.0
    for sys in systems:
        from ftns.reduction import choose_lambda, epsilon_choice, partial_choice
        lam = choose_lambda(sys, fibonacci_sphere(24))
        params = partial_choice(sys)
        params.Dbar = epsilon_choice(lam, sys.dims[0], 3)
        red = reduce_once(sys, params)
        n0 = sys.dims[0]
        po_parent = principal_matrix(sys)
        po_child = principal_matrix(red.sys)
        for s in dirs:
            got = np.sort_complex(np.linalg.eigvals(po_child.symbol_from_matrix(s)))
            want = np.concatenate([
                np.zeros(n0), np.full(n0, lam), np.full(n0, -lam),
                np.linalg.eigvals(po_parent.symbol_from_matrix(s))])
            want = np.sort_complex(want)
            worst = max(worst, float(np.max(np.abs(got - want))) / (1.0 + lam))
    elapsed = time.time() - t0
    assert worst <= 1e-9, worst
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeds 30 s"
    _report(2, f"20 systems, worst multiset deviation {worst:.2e}, "
               f"runtime {elapsed:.1f}s")


def test_acceptance_3_strong_equivalence_both_directions():
    """Iterating to first order preserves the strong verdict with finite K
    and lift residual <= 1e-10; extracting the lower-right H block of each
    level symmetrizes the parent to 1e-10."""
    rng, systems = _strong_suite(seed=303)
    sample = _directions(rng, 50)
    probe = sample.directions[::10]
    worst_lift = worst_supply = 0.0
    for sys in systems:
        levels = iterate_to_first_order(sys, sample=fibonacci_sphere(24))
        parent = sys
        for red in levels:
            rep = classify_strong(red.sys, sample)
            assert rep.verdict == "strong", (sys.label, red.sys.N, rep.verdict)
            assert np.isfinite(rep.K_estimate)
            po_parent = principal_matrix(parent)
            for s in probe:
                P_par = po_parent.symbol_from_matrix(s)
                es = eigenstructure(P_par)
                dec = decompose_21(red, s)
                T, T_inv, diag = lift_diagonalizer(
                    es.T, es.eigenvalues, dec.X, dec.Y, red.lam, parent.dims[0])
                resid = np.max(np.abs(T_inv @ dec.rotated_symbol @ T - np.diag(diag)))
                resid /= (1.0 + np.max(np.abs(dec.rotated_symbol)))
                worst_lift = max(worst_lift, float(resid))
                assert np.all(np.isfinite(T)) and np.all(np.isfinite(T_inv))
                # converse: child H(s) supplies a parent symmetrizer
                P_child = principal_symbol(red.sys, s)
                H_child = build_Hs(P_child)
                H22, P_embed = extract_parent_symmetrizer(red, s, H_child)
                comm = np.linalg.norm(H22 @ P_embed - P_embed.conj().T @ H22, 2)
                comm /= (1.0 + np.linalg.norm(H22, 2) * np.linalg.norm(P_embed, 2))
                worst_supply = max(worst_supply, float(comm))
            parent = red.sys
    assert worst_lift <= 1e-10, worst_lift
    assert worst_supply <= 1e-10, worst_supply
    _report(3, f"lift residual {worst_lift:.2e}, extracted-H commutator "
               f"{worst_supply:.2e} over all levels of 20 systems")


def test_acceptance_4_constraint_closure():
    """dt(c) lies in the constraint span to 1e-12 for 20 random reductions,
    iterative and direct, with random nonzero parameters."""
    rng = np.random.default_rng(404)
    worst = 0.0
    for k in range(10):
        N = (2, 3, 4)[k % 3]
        sys = random_system(rng, N)
        params = IterativeReductionParams.random(rng, sys) if k % 2 else None
        red = reduce_once(sys, params)
        worst = max(worst, constraint_evolution(red).residual)
    for k in range(10):
        N = (2, 3)[k % 2]
        sys = random_system(rng, N)
        vars = DirectReductionVars.random(rng, sys) if k % 2 else None
        red = build_direct_ft1s(sys, vars)
        space = PolySpace(3, N + 1)
        rhs = system_rhs_ops(red.sys)
        gens = red.closure_generators()
        for name, op in red.constraint_ops().items():
            residual, _ = operator_span_residual(op.time_derivative(rhs), gens, space)
            worst = max(worst, residual)
    assert worst <= 1e-12, worst
    _report(4, f"worst closure residual {worst:.2e} over 20 reductions")


def test_acceptance_5_symmetric_hyperbolicity_constructive():
    """solve_J succeeds on 10 reverse-engineered systems per N in {2,3,4};
    the rebuilt H1 symmetrizes the direct reduction to 1e-10 per coordinate
    and the round-trip extraction returns H exactly."""
    t0 = time.time()
    rng = np.random.default_rng(505)
    worst = 0.0
    for N in (2, 3, 4):
        for _ in range(10):
            sys, H = random_symmetrizable_pair(rng, N)
            res = solve_J(sys, H)
            assert res.status == "ok", (N, res.status)
            worst = max(worst, max(res.herm_residuals))
            H22 = extract_HN_from_H1(res.H1, res.reduction.layout)
            assert np.array_equal(H22, H), "round trip is not exact"
    elapsed = time.time() - t0
    assert worst <= 1e-10, worst
    assert elapsed < 120.0, f"runtime {elapsed:.1f}s exceeds 2 min"
    _report(5, f"30 constructions, worst Hermiticity residual {worst:.2e}, "
               f"runtime {elapsed:.1f}s")


def test_acceptance_6_converse_symmetric_direction():
    """Extractions from random symmetric hyperbolic first-order reductions
    pass the N-th order candidate check to 1e-12."""
    rng = np.random.default_rng(606)
    worst = 0.0
    for k in range(10):
        N = 2 if k < 6 else 3
        sys, vars, H1 = random_first_order_symmetrizable(rng, N)
        red = build_direct_ft1s(sys, vars)
        H22 = extract_HN_from_H1(H1, red.layout)
        ok, residual = is_candidate(sys, H22, tol=1e-12)
        assert ok, (N, residual)
        worst = max(worst, residual)
    _report(6, f"10 extractions, worst candidate defect {worst:.2e}")


def test_acceptance_7_negative_control():
    """The third-order scalar companion chain: not hyperbolic against the
    cube-root oracle, no positive definite candidate, and Fourier-mode
    log-growth slope matching max Im eigenvalue within 5 percent."""
    sys = companion_ft3s()
    sample = DirectionSample.merged(
        DirectionSample.explicit([[1.0, 0, 0]]), fibonacci_sphere(40))
    rep = classify_strong(sys, sample)
    assert rep.verdict == "not_hyperbolic"
    P = principal_symbol(sys, [1.0, 0.0, 0.0])
    lam = np.sort_complex(np.linalg.eigvals(P))
    roots = np.sort_complex(np.exp(2j * np.pi * np.arange(3) / 3))
    assert np.max(np.abs(lam - roots)) <= 1e-12
    cand = solve_candidate(sys)
    assert cand.status in ("candidate_only", "infeasible")
    t_final = 0.01
    table = fourier_evolve(FourierModeRun(sys, [1.0, 0.0, 0.0],
                                          (1.0, 10.0, 100.0, 1000.0), t_final))
    want = np.sqrt(3.0) / 2.0 * t_final
    ratio = table.slope() / want
    assert abs(ratio - 1.0) <= 0.05, ratio
    _report(7, f"verdict not_hyperbolic, cube roots to 1e-12, "
               f"candidate search: {cand.status}, slope ratio {ratio:.4f}")


def test_acceptance_8_well_posedness_probe():
    """Wave system: unit Fourier growth to 1e-9; grid energy drift <= 1e-6
    at 256 points converging at 4th order under one refinement."""
    t0 = time.time()
    sys = wave_ft2s()
    rng = np.random.default_rng(808)
    for _ in range(3):
        s = rng.standard_normal(3)
        s /= np.linalg.norm(s)
        table = fourier_evolve(FourierModeRun(sys, s, (1.0, 10.0, 100.0, 1000.0), 1.0))
        for _, g in table.rows:
            assert abs(g - 1.0) <= 1e-9
    H = weighted_identity(principal_matrix(sys).basis)
    drift = {}
    for pts in (256, 512):
        run = GridRun(sys, GridSpec(dim=1, points=pts),
                      [[PeriodizedGaussian([np.pi], width=0.6)], [Constant(0.0)]],
                      t_final=2.0, sym_candidate=H, n_samples=17)
        series = grid_evolve(run)
        assert series.status == "ok"
        E = series.energy
        drift[pts] = float(np.max(np.abs(E - E[0])) / E[0])
    assert drift[256] <= 1e-6, drift
    order = math.log2(drift[256] / drift[512])
    assert 3.5 <= order <= 4.5, order
    elapsed = time.time() - t0
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeds 30 s"
    _report(8, f"growth 1 +- 1e-9, drift(256) = {drift[256]:.2e}, "
               f"refinement order {order:.2f}, runtime {elapsed:.1f}s")


def test_acceptance_9_cli_determinism(tmp_path):
    """Identical seeds give byte-identical CSV and text reports."""
    from ftns.cli import main
    from ftns.systemio import dump_system
    src = tmp_path / "wave.json"
    dump_system(wave_ft2s(), src)
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        main(["analyze", str(src), "--samples", "default", "--seed", "11",
              "--out", str(out)])
        main(["evolve", str(src), "--mode", "fourier", "--seed", "11",
              "--out", str(out)])
        main(["evolve", str(src), "--mode", "grid", "--data", "random",
              "--points", "64", "--t-final", "0.5", "--seed", "11",
              "--out", str(out)])
        outs.append(out)
    names = ["wave_analysis.csv", "wave_analysis.txt", "wave_growth.csv",
             "wave_series.csv"]
    for name in names:
        b1 = (outs[0] / name).read_bytes()
        b2 = (outs[1] / name).read_bytes()
        assert b1 == b2, f"{name} differs between identical runs"
    _report(9, f"{len(names)} report files byte-identical across runs")
