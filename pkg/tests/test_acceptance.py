"""End-to-end acceptance criteria on the reference configuration.

Each test prints one ``ACCEPTANCE <k> PASS|FAIL`` line with the measured
quantities, then asserts. Run with ``pytest tests/test_acceptance.py -s`` to
see the lines inline; they are also repeated in the terminal summary.
"""
import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from invlab import diagnostics as dg
from invlab.cli import main
from invlab.experiments import _probe_pairs
from invlab.model import ModelParams, check_soft_unimodality, make_demand, mixture, triangular, uniform
from invlab.simulate import PolicySpec, horizon_sweep, simulate_batch
from invlab.solver import solve, structure_report

from test_solver import _enumerate_two_periods

RESULTS: list[str] = []
REF = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=50, x0=0.0)
SEED = 20240611
HORIZONS = (25, 50, 100, 200)


def record(k: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS.append(line)
    print(line)


@pytest.fixture(scope="module")
def ref():
    t = time.perf_counter()
    sol = solve(REF, uniform())
    return sol, time.perf_counter() - t


def test_1_solver_matches_enumeration():
    t = time.perf_counter()
    p = dataclasses.replace(REF, n=2)
    d = make_demand({"family": "uniform", "support": [0.0, 1.0], "M": 16}, min_M=2)
    sol = solve(p, d)
    elapsed = time.perf_counter() - t
    expect = _enumerate_two_periods(p, d, sol.policy.levels[2], sol.policy.levels[1])
    rel = abs(sol.expected_cost - expect) / expect
    ok = rel <= 1e-3 and elapsed < 1.0
    record(1, ok, f"v_2(0)={sol.expected_cost:.10g} enumeration={expect:.10g} rel={rel:.2e} time={elapsed:.3f}s")
    assert ok


def test_2_base_stock_structure(ref):
    sol, elapsed = ref
    rep = structure_report(sol)
    h = sol.grid.h
    pol = sol.policy
    active = pol.active_stages
    levels = np.array([pol.levels[k] for k in active])
    upper = oracles.UPPER_LEVEL_BOUND + 2 * h
    lower = oracles.LOWER_LEVEL_BOUND - 2 * h
    form_ok = rep["base_stock_form"]["passed"]
    mono_ok = rep["monotone_levels"]["passed"]
    upper_ok = bool(levels.max() <= upper)
    lower_ok = bool(levels.min() >= lower)
    principal = levels[np.array(active) >= pol.n0 + 2]
    ok = form_ok and mono_ok and upper_ok and lower_ok and elapsed < 30
    record(
        2, ok,
        f"form_dev={rep['base_stock_form']['max_deviation']:.2e} monotone={mono_ok} "
        f"max_s={levels.max():.6f} vs upper {upper:.6f} ({'ok' if upper_ok else 'exceeded'}) "
        f"min_s={levels.min():.6f} (k={active[int(np.argmin(levels))]}) vs lower {lower:.6f} "
        f"min_s over k>=n0+2={principal.min():.6f} stationary={pol.bounds['stationary_level']:.6f} "
        f"time={elapsed:.2f}s",
    )
    assert ok


def test_3_constant_slope_identity(ref):
    sol, _ = ref
    xs = sol.grid.abscissae
    h = sol.grid.h
    tol = 5 * h * (REF.c + REF.c_p)
    mask = (xs >= -0.9 - 1e-12) & (xs <= 0)
    x = xs[mask]
    worst = 0.0
    stages = range(REF.n // 4, 3 * REF.n // 4 + 1)
    for k in stages:
        v = sol.values[k][mask]
        dev = np.abs((v[:, None] - v[None, :]) - oracles.SLOPE_IDENTITY * (x[None, :] - x[:, None]))
        worst = max(worst, float(dev.max()))
    ok = worst <= tol
    record(3, ok, f"max |v_k(x)-v_k(x')-1.9(x'-x)| = {worst:.2e} over k={stages.start}..{stages.stop - 1}, tol {tol:.4f}")
    assert ok


def test_4_martingale_suite(ref):
    sol, _ = ref
    b = simulate_batch(PolicySpec("optimal", table=sol.policy), REF, uniform(), 1000, SEED, full=True)
    M = dg.martingale_paths(b.paths["X"], b.paths["C"], sol)
    d = np.diff(M, axis=1)
    exact_zero = all(dg.martingale_decompose(tr, sol).residual == 0.0 for tr in _paths(b))
    tol = 1e-3 * sol.expected_cost
    residuals = [dg.conditional_mean_check(x, i, sol) for x, i in _probe_pairs(sol, 20)]
    book = dg.variance_bookkeeping(b.costs, d)
    ok = exact_zero and max(residuals) <= tol and book["passed"]
    record(
        4, ok,
        f"telescoping exact zero on 1000 paths={exact_zero} max cond-mean residual={max(residuals):.2e} "
        f"(tol {tol:.4f}, 20 probes) Var={book['variance']:.4f} sumEd2={book['sum_E_d2']:.4f} "
        f"|diff|={book['difference']:.4f} <= 4*SE={4 * book['combined_se']:.4f}",
    )
    assert ok


def _paths(batch):
    from invlab.simulate import Trajectory

    p = batch.paths
    for r in range(len(batch.costs)):
        yield Trajectory(p["X"][r], p["target"][r], p["Y"][r], p["D"][r], p["P"][r], p["C"][r])


def test_5_ergodicity(ref):
    sol, _ = ref
    kappa = dg.kappa_bound(REF, sol.policy.n0)
    rep = dg.ergodicity_report(sol)
    deltas = {int(i): v for i, v in rep["delta_by_period"].items()}
    aug = {int(i): v for i, v in rep["augmented_delta_by_period"].items()}
    delta_ok = all(v <= 0.75 + 1e-6 for v in deltas.values())
    aug_ok = all(aug[i] <= deltas[i] + 1e-12 for i in deltas)
    eps = np.linspace(0.0, 1.0, 33)
    uni = check_soft_unimodality(uniform(), eps).passed
    tri = check_soft_unimodality(triangular(0.0, 0.5, 1.0), eps).passed
    two = mixture([{"family": "uniform", "support": [0.0, 0.2]}, {"family": "uniform", "support": [0.8, 1.0]}],
                  [0.5, 0.5])
    mix_fails = not check_soft_unimodality(two, eps).passed
    ok = kappa == 0.75 and delta_ok and aug_ok and uni and tri and mix_fails
    record(
        5, ok,
        f"kappa={kappa!r} alpha_lower={1 - kappa} max delta={max(deltas.values()):.6f} over {len(deltas)} "
        f"active periods; delta_Z<=delta_X={aug_ok}; unimodal uniform={uni} triangular={tri} "
        f"two-bump rejected={mix_fails}",
    )
    assert ok


@pytest.fixture(scope="module")
def sweep():
    t = time.perf_counter()
    out = horizon_sweep("optimal", REF, uniform(), HORIZONS, 10_000, SEED, workers=4)
    return out, time.perf_counter() - t


def test_6_variance_growth(sweep):
    out, elapsed = sweep
    fit = dg.variance_growth({n: b.costs for n, b in out.items()})
    ok = fit.slope > 0 and fit.r2 >= 0.95 and elapsed < 300
    pts = ", ".join(f"n={n}:{v:.3f}" for n, v in fit.points)
    record(6, ok, f"slope={fit.slope:.4f} R2={fit.r2:.6f} beta_hat={fit.beta_hat:.4f} [{pts}] time={elapsed:.1f}s")
    assert ok


def test_7_clt():
    t = time.perf_counter()
    p = dataclasses.replace(REF, n=200)
    sol = solve(p, uniform())
    b = simulate_batch(PolicySpec("optimal", table=sol.policy), p, uniform(), 20_000, SEED, workers=4)
    rep = dg.clt_test(b.costs)
    elapsed = time.perf_counter() - t
    control = dg.clt_test(np.random.default_rng(SEED).exponential(size=10_000)).ks
    ok = (rep.ks <= 0.02 and abs(rep.skewness) <= 0.1 and abs(rep.excess_kurtosis) <= 0.25
          and control >= 0.05 and elapsed < 300)
    record(
        7, ok,
        f"KS={rep.ks:.4f} (<=0.02) skewness={rep.skewness:.4f} (|.|<=0.1) excess kurtosis={rep.excess_kurtosis:.4f} "
        f"(|.|<=0.25) exponential control KS={control:.4f} (>=0.05) time={elapsed:.1f}s",
    )
    assert ok


def test_8_concentration():
    p = dataclasses.replace(REF, n=100)
    sol = solve(p, uniform())
    b = simulate_batch(PolicySpec("optimal", table=sol.policy), p, uniform(), 10_000, SEED, full=True, workers=4)
    d = dg.martingale_differences(b.paths["X"], b.paths["C"], sol)
    B_hat = float(np.abs(d).max())
    lambdas = [m * math.sqrt(p.n) * B_hat / 4 for m in (2, 4, 8)]
    rep = dg.hoeffding_check(b.costs, 1.25 * B_hat, p.n, lambdas)
    rng = np.random.default_rng(SEED)
    coins = rng.choice([-1.0, 1.0], size=(10_000, 100)).sum(axis=1)
    coin = dg.hoeffding_check(coins, 1.0, 100, [10.0, 20.0, 30.0], center=0.0)
    ok = rep["passed"] and coin["passed"]
    rows = "; ".join(f"lambda={r['lambda']:.2f} emp={r['empirical']:.4f} bound={r['bound']:.4f}" for r in rep["rows"])
    record(8, ok, f"B_hat={B_hat:.4f} B=1.25*B_hat: {rows}; coin-flip control passed={coin['passed']}")
    assert ok


def test_9_stochastic_order(ref):
    sol, _ = ref
    opt = simulate_batch(PolicySpec("optimal", table=sol.policy), REF, uniform(), 10_000, SEED).costs
    lines, ok = [], True
    for label in ("never_order", "fixed_base_stock:0.9"):
        other = simulate_batch(PolicySpec.parse(label), REF, uniform(), 10_000, SEED).costs
        rep = dg.stochastic_order_compare(opt, other)
        reported = rep["verdict"] == "CONSISTENT" or (rep["V"] > 0 and rep["location"] is not None)
        ok &= reported
        where = "" if rep["location"] is None else f" at t={rep['location']:.4f}"
        lines.append(f"vs {label}: {rep['verdict']} V={rep['V']:.4f}{where}")
    same = dg.stochastic_order_compare(opt, opt)
    shifted = dg.stochastic_order_compare(opt, opt + 1.0)
    controls = (same["V"] == 0 and same["verdict"] == "CONSISTENT"
                and shifted["V"] == 0 and shifted["verdict"] == "CONSISTENT")
    ok &= controls
    record(9, ok, "; ".join(lines) + f"; identical/shifted controls={controls}")
    assert ok


def test_10_determinism(tmp_path):
    cfg = Path(__file__).parents[1] / "configs" / "ref.toml"
    mismatched = []
    for sub in ("solve", "simulate", "diagnose", "clt", "compare", "report"):
        dirs = [tmp_path / sub / "a", tmp_path / sub / "b"]
        codes = [main([sub, "--config", str(cfg), "--out", str(d), "--workers", w]) for d, w in zip(dirs, ("1", "4"))]
        assert codes[0] == codes[1] and codes[0] in (0, 2)
        files_a = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
        if files_a != files_b:
            mismatched.append(f"{sub}: file sets differ")
            continue
        for rel in files_a:
            if (dirs[0] / rel).read_bytes() != (dirs[1] / rel).read_bytes():
                mismatched.append(f"{sub}/{rel}")
    ok = not mismatched
    record(10, ok, "all six subcommands byte-identical across two runs (workers 1 vs 4)" if ok
           else f"differences: {mismatched}")
    assert ok
