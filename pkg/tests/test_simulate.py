import math

import numpy as np
import pytest

import oracles
from invlab.model import ModelParams, ParameterError, uniform
from invlab.simulate import (
    TRAJECTORY_HEADER,
    PolicySpec,
    StreamSpec,
    costs_csv,
    horizon_seed,
    horizon_sweep,
    recompute_costs,
    replication_seed,
    simulate_batch,
    simulate_path,
    summarize,
)
from invlab.solver import solve


@pytest.fixture(scope="module")
def two_period():
    p = ModelParams(c=1.0, c_h=1.0, c_p=3.0, q=0.7, n=2)
    return p, uniform(), solve(p, uniform())


def _injected_table(two_period, s2, s1):
    _, _, sol = two_period
    levels = sol.policy.levels.copy()
    levels[2], levels[1] = s2, s1
    modes = ["none", "active", "active"]
    return PolicySpec("optimal", table=type(sol.policy)(**{**sol.policy.__dict__, "levels": levels, "modes": modes}))


def test_injected_hand_trace(two_period):
    p, d, _ = two_period
    spec = _injected_table(two_period, 0.5, 0.3929)
    tr = simulate_path(spec, p, d, Y=[1, 0], D=[0.3, 0.4])
    np.testing.assert_allclose(tr.P, oracles.TRACE_P, atol=1e-4)
    assert tr.total == pytest.approx(oracles.TRACE_C2, abs=1e-4)
    assert tr.X[-1] == pytest.approx(oracles.TRACE_X3, abs=1e-4)


def test_injected_sequences_are_validated(two_period):
    p, d, _ = two_period
    spec = PolicySpec("never_order")
    with pytest.raises(ParameterError):
        simulate_path(spec, p, d, Y=[1], D=[0.3])
    with pytest.raises(ParameterError):
        simulate_path(spec, p, d, Y=[1, 2], D=[0.3, 0.4])
    with pytest.raises(ParameterError):
        simulate_path(spec, p, d, Y=[1, 0], D=[0.3, 1.4])
    with pytest.raises(ParameterError):
        simulate_path(spec, p, d)


def test_stream_path_matches_batch_replication(ref_params, ref_demand, ref_solution):
    spec = PolicySpec("optimal", table=ref_solution.policy)
    b = simulate_batch(spec, ref_params, ref_demand, 5, 42, retain=5)
    tr = simulate_path(spec, ref_params, ref_demand, StreamSpec(42, 3))
    np.testing.assert_array_equal(tr.C, b.trajectories[3].C)


def test_stream_path_follows_documented_draw_order(ref_params, ref_demand, ref_solution):
    spec = PolicySpec("optimal", table=ref_solution.policy)
    stream = StreamSpec(7, 2)
    tr = simulate_path(spec, ref_params, ref_demand, stream)
    u = stream.uniforms(0, 2 * ref_params.n)
    np.testing.assert_allclose(tr.D, u[0::2], atol=1e-12)  # uniform(0, 1) inverse cdf is the identity
    np.testing.assert_array_equal(tr.Y, (u[1::2] < ref_params.q).astype(np.int8))


def test_stored_costs_recompute(ref_params, ref_demand, ref_solution):
    spec = PolicySpec("optimal", table=ref_solution.policy)
    tr = simulate_path(spec, ref_params, ref_demand, StreamSpec(1, 0))
    P, C = recompute_costs(tr, ref_params)
    np.testing.assert_allclose(P, tr.P, atol=1e-12)
    np.testing.assert_allclose(C, tr.C, atol=1e-9)


def test_trajectory_csv_layout(ref_params, ref_demand, ref_solution):
    tr = simulate_path(PolicySpec("optimal", table=ref_solution.policy), ref_params, ref_demand, StreamSpec(1, 0))
    lines = tr.to_csv().splitlines()
    assert lines[0] == TRAJECTORY_HEADER
    assert len(lines) == ref_params.n + 1
    assert "np." not in lines[1]
    assert float(lines[-1].split(",")[-1]) == tr.total


def test_batch_mean_matches_value(ref_params, ref_demand, ref_solution):
    b = simulate_batch(PolicySpec("optimal", table=ref_solution.policy), ref_params, ref_demand, 10_000, 2024)
    s = b.summary
    assert abs(s["mean"] - ref_solution.expected_cost) <= 3 * math.sqrt(s["variance"] / s["R"])


def test_batch_is_independent_of_worker_count(ref_params, ref_demand, ref_solution):
    spec = PolicySpec("optimal", table=ref_solution.policy)
    a = simulate_batch(spec, ref_params, ref_demand, 1001, 5, workers=1)
    b = simulate_batch(spec, ref_params, ref_demand, 1001, 5, workers=4)
    np.testing.assert_array_equal(a.costs, b.costs)


def test_never_order_accumulates_backlog(ref_params, ref_demand):
    b = simulate_batch(PolicySpec("never_order"), ref_params, ref_demand, 200, 1)
    # backlog after i periods has mean i/2, so E C_n = c_p * sum_i i/2 = 3 * 50 * 51 / 4
    assert b.summary["mean"] == pytest.approx(3 * 50 * 51 / 4, rel=0.03)


def test_fixed_and_myopic_variants(ref_params, ref_demand):
    fixed = simulate_batch(PolicySpec.parse("fixed_base_stock:0.9"), ref_params, ref_demand, 50, 1, retain=1)
    assert fixed.trajectories[0].target[0] == 0.9
    myo = simulate_batch(PolicySpec("myopic"), ref_params, ref_demand, 50, 1, retain=1)
    assert myo.trajectories[0].target[0] == pytest.approx(oracles.S1, abs=0.01)


def test_policy_spec_validation():
    with pytest.raises(ParameterError):
        PolicySpec("random")
    with pytest.raises(ParameterError):
        PolicySpec("optimal")
    assert PolicySpec.parse("fixed_base_stock:0.5").label == "fixed_base_stock:0.5"


def test_seed_derivation_is_distinct():
    seeds = {replication_seed(1, r) for r in range(1000)}
    assert len(seeds) == 1000
    assert horizon_seed(1, 25) != horizon_seed(1, 50)


def test_horizon_sweep_rejects_unsorted(ref_params, ref_demand):
    with pytest.raises(ParameterError):
        horizon_sweep("never_order", ref_params, ref_demand, [50, 25], 10, 1)


def test_horizon_sweep_uses_per_horizon_seeds(ref_params, ref_demand):
    out = horizon_sweep("never_order", ref_params, ref_demand, [5, 10], 20, 9)
    assert out[5].master_seed == horizon_seed(9, 5)
    assert len(out[10].costs) == 20


def test_summary_and_csv():
    s = summarize(np.array([1.0, 2.0, 3.0]))
    assert s["mean"] == 2.0 and s["variance"] == 1.0
    assert costs_csv(np.array([1.5, 2.0])) == "C_n\n1.5\n2.0\n"
