import dataclasses
import itertools

import numpy as np
import pytest

import oracles
from invlab.model import DomainError, ModelParams, ParameterError, make_demand, triangular, uniform
from invlab.solver import (
    bellman_step,
    load_solution,
    lower_level_bound,
    make_grid,
    order_up_to,
    save_solution,
    solution_text,
    solve,
    stationary_level,
    structure_report,
    upper_level_bound,
)


def _enumerate_two_periods(params, demand, s2, s1):
    """Exact expectation over every (Y1, D1, Y2, D2) quadrature outcome."""
    L = lambda z: params.c_h * z if z >= 0 else -params.c_p * z  # noqa: E731
    atoms = list(zip(demand.grid.tolist(), demand.weights.tolist()))
    total = 0.0
    for (d1, w1), f1, (d2, w2), f2 in itertools.product(atoms, (0, 1), atoms, (0, 1)):
        pr = w1 * w2 * (params.q if f1 else 1 - params.q) * (params.q if f2 else 1 - params.q)
        x1 = params.x0
        y1 = max(x1, s2)
        c1 = params.c * (y1 - x1) + L((y1 if f1 else x1) - d1)
        x2 = y1 - d1
        y2 = max(x2, s1)
        c2 = params.c * (y2 - x2) + L((y2 if f2 else x2) - d2)
        total += pr * (c1 + c2)
    return total


def test_two_period_value_matches_enumeration():
    p = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=2)
    d = make_demand({"family": "uniform", "support": [0.0, 1.0], "M": 16}, min_M=2)
    sol = solve(p, d)
    expect = _enumerate_two_periods(p, d, sol.policy.levels[2], sol.policy.levels[1])
    assert sol.expected_cost == pytest.approx(expect, rel=1e-3)


def test_last_stage_level_and_value():
    p = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=1)
    d = uniform()
    grid = make_grid(p, d)
    v, ystar, _ = bellman_step(np.zeros(grid.count), p, d, grid)
    assert ystar[0] == pytest.approx(oracles.S1, abs=2 * grid.h)
    assert np.interp(0.0, grid.abscissae, v) == pytest.approx(oracles.V1_AT_0, abs=5e-3)


def test_minimizer_never_below_state(ref_solution):
    xs = ref_solution.grid.abscissae
    for k in range(1, ref_solution.params.n + 1):
        assert np.all(ref_solution.minimizers[k] >= xs - 1e-12)


def test_value_rows_are_finite_and_increasing_in_stage(ref_solution):
    v = ref_solution.values
    assert np.all(np.isfinite(v))
    assert np.all(np.diff(v[:, 0]) > 0)


def test_ref_levels_monotone_and_converge_to_stationary_level(ref_solution):
    lv = ref_solution.policy.levels[1:]
    h = ref_solution.grid.h
    assert np.all(np.diff(lv) >= -2 * h)
    assert lv[-1] == pytest.approx(oracles.STATIONARY_LEVEL, abs=2 * h)


def test_bound_formulas(ref_params, ref_demand):
    assert upper_level_bound(ref_params, ref_demand) == pytest.approx(oracles.UPPER_LEVEL_BOUND, abs=1e-12)
    assert lower_level_bound(ref_params, ref_demand) == pytest.approx(oracles.LOWER_LEVEL_BOUND, abs=1e-12)
    assert stationary_level(ref_params, ref_demand) == pytest.approx(oracles.STATIONARY_LEVEL, abs=1e-6)


def test_structure_report_records_every_check(ref_solution):
    rep = structure_report(ref_solution)
    assert rep["base_stock_form"]["passed"]
    assert rep["monotone_levels"]["passed"]
    assert rep["slope_identity"]["passed"]
    assert rep["level_bounds"]["lower_passed"]
    assert rep["level_bounds"]["stationary_passed"]
    # the quantile upper bound is below the optimal levels of this recursion
    assert not rep["level_bounds"]["upper_passed"]
    assert rep["residual_range"]["N_from_0"]["status"] == "MISMATCH"
    assert rep["residual_range"]["N_from_1"]["status"] == "MISMATCH"


def test_slope_identity_identity_on_negative_states(ref_solution):
    xs = ref_solution.grid.abscissae
    h = ref_solution.grid.h
    mask = (xs >= -0.9) & (xs <= 0)
    for k in (10, 25, 40):
        v = ref_solution.values[k][mask]
        x = xs[mask]
        dev = np.abs((v[:, None] - v[None, :]) - oracles.SLOPE_IDENTITY * (x[None, :] - x[:, None]))
        assert dev.max() <= 5 * h * 4.0


def test_order_up_to(ref_solution):
    pol = ref_solution.policy
    s = pol.level_for_period(25)
    assert order_up_to(pol, 25, -0.3) == s
    assert order_up_to(pol, 25, s + 0.01) == s + 0.01
    with pytest.raises(DomainError):
        order_up_to(pol, 0, 0.0)


def test_period_levels_reverse_stage_order(ref_solution):
    pol = ref_solution.policy
    per = pol.period_levels()
    assert per[-1] == pol.levels[1]
    assert per[0] == pol.levels[pol.n]


def test_expensive_ordering_gives_passive_last_stages():
    # c = 2.5 > q c_p = 2.1: ordering in the last period never pays
    p = ModelParams(c=2.5, c_h=1.0, c_p=3.0, q=0.7, n=6)
    sol = solve(p, uniform())
    assert sol.policy.modes[1] == "passive"
    assert "active" in sol.policy.modes[2:]


def test_x0_above_cap_is_rejected():
    with pytest.raises(ParameterError):
        solve(ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=3, x0=5.0), uniform())


def test_round_trip_is_lossless(tmp_path, ref_solution):
    path = save_solution(ref_solution, tmp_path / "policy.txt")
    back = load_solution(path)
    np.testing.assert_array_equal(back.values, ref_solution.values)
    np.testing.assert_array_equal(back.policy.levels, ref_solution.policy.levels)
    assert back.policy.modes == ref_solution.policy.modes
    assert back.params == ref_solution.params
    assert solution_text(back) == path.read_text()


def test_policy_file_has_one_row_per_stage(ref_solution):
    text = solution_text(ref_solution).splitlines()
    start = text.index("k,mode,level") + 1
    end = text.index("[values]")
    assert end - start == 50


def test_load_rejects_corrupt_file(tmp_path, ref_solution):
    text = solution_text(ref_solution).replace("[values]", "[vals]")
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ValueError, match="expected"):
        load_solution(path)


def test_loaded_solution_skips_minimizer_check(tmp_path, ref_solution):
    back = load_solution(save_solution(ref_solution, tmp_path / "p.txt"))
    assert structure_report(back)["base_stock_form"]["available"] is False


def test_triangular_demand_solves_with_base_stock_form():
    p = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.9, n=8)
    sol = solve(p, triangular(0.0, 0.3, 1.0))
    assert structure_report(sol)["base_stock_form"]["passed"]


def test_horizon_change_via_replace(ref_params, ref_demand):
    short = solve(dataclasses.replace(ref_params, n=3), ref_demand)
    assert short.values.shape[0] == 4
