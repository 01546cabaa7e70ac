"""Numerical checks of the probabilistic properties of the optimal cost.

Covers the optimality martingale, Dobrushin contraction coefficients of the
inventory kernels, variance growth with the horizon, asymptotic normality,
Azuma-Hoeffding concentration and first-order stochastic dominance.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .model import DemandModel, DomainError, ModelParams, ParameterError, check_soft_unimodality
from .simulate import Trajectory
from .solver import PolicyTable, Solution, order_up_to

log = logging.getLogger(__name__)

DKW_ALPHA = 0.05
N_SHIFTS = 32


class SoftUnimodalityError(ValueError):
    """The demand density is not softly unimodal on the shifts considered."""


# --------------------------------------------------------------------------
# optimality martingale


@dataclass
class MartingaleDecomposition:
    M: np.ndarray  # (n + 1,)
    d: np.ndarray  # (n,)
    residual: float  # exact, from rational arithmetic on M
    float_residual: float

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "d": self.d.tolist(), "residual": self.residual,
                "float_residual": self.float_residual}


def _value_rows(solution: Solution, n: int) -> np.ndarray:
    if solution.params.n != n:
        raise ParameterError(f"value grid horizon {solution.params.n} != trajectory horizon {n}")
    return solution.values


def _interp_values(solution: Solution, k: int, x):
    xs = solution.grid.abscissae
    x = np.asarray(x, dtype=float)
    if np.any(x < xs[0] - 1e-12) or np.any(x > xs[-1] + 1e-12):
        log.warning("state outside value grid [%g, %g] at stage %d; clamped", xs[0], xs[-1], k)
    return np.interp(x, xs, solution.values[k])


def martingale_paths(X: np.ndarray, C: np.ndarray, solution: Solution) -> np.ndarray:
    """``M[:, i] = C_i + v_{n-i}(X_{i+1})`` for ``i = 0..n`` over a batch of paths."""
    R, n = C.shape
    _value_rows(solution, n)
    M = np.empty((R, n + 1))
    M[:, 0] = _interp_values(solution, n, X[:, 0])
    for i in range(1, n + 1):
        M[:, i] = C[:, i - 1] + _interp_values(solution, n - i, X[:, i])
    return M


def martingale_decompose(traj: Trajectory, solution: Solution) -> MartingaleDecomposition:
    """Doob martingale of the realized cost and its differences along one path."""
    M = martingale_paths(traj.X[None, :], traj.C[None, :], solution)[0]
    d = np.diff(M)
    n = traj.n
    exact = sum((Fraction(M[i]) - Fraction(M[i - 1]) for i in range(1, n + 1)), Fraction(0))
    target = Fraction(float(traj.C[-1])) - Fraction(float(M[0]))
    float_res = math.fsum(d) - (float(traj.C[-1]) - float(M[0]))
    return MartingaleDecomposition(M, d, float(exact - target), float_res)


def martingale_differences(X: np.ndarray, C: np.ndarray, solution: Solution) -> np.ndarray:
    return np.diff(martingale_paths(X, C, solution), axis=1)


def conditional_mean_check(x: float, i: int, solution: Solution, policy: PolicyTable | None = None) -> float:
    """``|E[d_i | X_i = x]|`` by exact quadrature over ``(Y, D)``.

    ``policy`` defaults to the solution's own table; pass a perturbed table
    to measure the Bellman gap of a suboptimal decision.
    """
    params, demand, grid = solution.params, solution.demand, solution.grid
    policy = solution.policy if policy is None else policy
    n = params.n
    if not 1 <= i <= n:
        raise DomainError(f"period {i} outside [1, {n}]")
    k = n - i + 1
    y = order_up_to(policy, i, x, n)
    cost_to_go, _ = kernels.stage_expectation(
        np.array([y]), demand.grid, demand.weights, grid.x_lo, grid.h, solution.values[k - 1],
        params.q, params.c_h, params.c_p,
    )
    carry_now, _ = kernels.stage_expectation(
        np.array([x]), demand.grid, demand.weights, grid.x_lo, grid.h, np.zeros(grid.count),
        1.0, params.c_h, params.c_p,
    )
    expected = params.c * (y - x) + (1 - params.q) * carry_now[0] + cost_to_go[0]
    return abs(expected - float(np.interp(x, grid.abscissae, solution.values[k])))


def variance_bookkeeping(costs: np.ndarray, d: np.ndarray) -> dict:
    """Compare the sample variance of ``C_n`` with ``sum_i E[d_i^2]``."""
    R = len(costs)
    mean = costs.mean()
    var = float(np.var(costs, ddof=1))
    m4 = float(np.mean((costs - mean) ** 4))
    se_var = math.sqrt(max(m4 - var**2, 0.0) / R)
    S = np.sum(d**2, axis=1)
    sum_d2 = float(S.mean())
    se_sum = float(S.std(ddof=1) / math.sqrt(R))
    se = math.hypot(se_var, se_sum)
    diff = abs(var - sum_d2)
    return {"variance": var, "sum_E_d2": sum_d2, "difference": diff, "combined_se": se,
            "passed": bool(diff <= 4 * se)}


# --------------------------------------------------------------------------
# Dobrushin coefficients


def tv_shift(demand: DemandModel, eps: float) -> float:
    """``int max(psi(w) - psi(w + eps), 0) dw`` for the piecewise-linear density.

    Integrated cell by cell over the merged breakpoints of ``psi`` and its
    shift; on each cell the integrand's argument is linear, so the trapezoid
    (split at a sign change) is exact.
    """
    eps = float(eps)
    if eps < 0:
        raise DomainError("shift must be >= 0")
    if eps == 0:
        return 0.0
    t = demand.grid
    pts = np.unique(np.concatenate((t, t - eps)))
    a, b = pts[:-1], pts[1:]
    keep = b - a > 0
    a, b = a[keep], b[keep]
    w = b - a
    q1, q3 = a + 0.25 * w, a + 0.75 * w
    g1 = demand.pdf(q1) - demand.pdf(q1 + eps)
    g3 = demand.pdf(q3) - demand.pdf(q3 + eps)
    g0 = 1.5 * g1 - 0.5 * g3
    gb = 1.5 * g3 - 0.5 * g1
    both = (g0 >= 0) & (gb >= 0)
    cross = (g0 > 0) != (gb > 0)
    gp = np.maximum(g0, gb)
    gn = np.minimum(g0, gb)
    area = np.where(both, 0.5 * w * (g0 + gb), 0.0)
    den = np.where(cross, gp - gn, 1.0)
    area = area + np.where(cross & ~both, w * gp**2 / (2 * den), 0.0)
    return float(min(max(area.sum(), 0.0), 1.0))


def state_top(policy: PolicyTable, x0: float = 0.0) -> float:
    """Upper end of the reachable state space: ``max(x0, largest active level)``."""
    active = [policy.levels[k] for k in policy.active_stages]
    return max([x0] + active)


def _shift_grid(policy: PolicyTable, i: int, n: int, x_top: float | None, n_shifts: int) -> np.ndarray:
    if not 1 <= i <= n:
        raise DomainError(f"period {i} outside [1, {n}]")
    k = n - i + 1
    if policy.modes[k] != "active":
        raise DomainError(f"period {i} (k={k}) is passive; the shift bound needs a constant target")
    top = state_top(policy) if x_top is None else x_top
    eps_max = max(top - policy.levels[k], 0.0)
    return np.linspace(0.0, eps_max, n_shifts)


def dobrushin_delta(policy: PolicyTable, demand: DemandModel, i: int, n: int | None = None,
                    x_top: float | None = None, n_shifts: int = N_SHIFTS) -> float:
    """Contraction coefficient of the one-step inventory kernel in an active period.

    Targets ``max(x, s_k)`` differ by at most ``eps_max = x_top - s_k``, and
    two kernel rows are the demand law shifted by their target difference.
    """
    n = policy.n if n is None else n
    eps = _shift_grid(policy, i, n, x_top, n_shifts)
    # the gate is a property of the density, so probe shifts across the whole support too
    probe = np.linspace(0.0, demand.J, N_SHIFTS + 1)[1:]
    report = check_soft_unimodality(demand, np.concatenate((eps, probe)))
    if not report.passed:
        bad = [s.eps for s in report.shifts if not s.passed]
        raise SoftUnimodalityError(f"density is not softly unimodal at shifts {bad[:3]}")
    return max(tv_shift(demand, e) for e in eps)


@dataclass
class AugmentedDelta:
    delta_z: float
    delta_x: float
    holds: bool


def augmented_kernel_delta(policy: PolicyTable, demand: DemandModel, params: ModelParams, i: int,
                           x_top: float | None = None, n_shifts: int = N_SHIFTS) -> AugmentedDelta:
    """Contraction coefficient on ``states x {0, 1}``.

    The next ``(X, Y)`` has ``Y ~ Bernoulli(q)`` independent of ``X``, so a
    set ``B`` splits into its ``Y = 0`` and ``Y = 1`` slices and each slice
    is bounded by the inventory-kernel distance separately.
    """
    n = policy.n
    eps = _shift_grid(policy, i, n, x_top, n_shifts)
    delta_x = dobrushin_delta(policy, demand, i, n, x_top, n_shifts)
    delta_z = 0.0
    for e in eps:
        tv = tv_shift(demand, e)
        delta_z = max(delta_z, (1 - params.q) * tv + params.q * tv)
    return AugmentedDelta(delta_z, delta_x, bool(delta_z <= delta_x + 1e-12))


def kappa_bound(params: ModelParams, n0: int) -> float:
    a = params.q + n0 + 1
    return max(params.c_p / (params.c_h + params.c_p), (a * params.c_h + params.c) / (a * (params.c_h + params.c_p)))


def ergodicity_report(solution: Solution, n_shifts: int = N_SHIFTS) -> dict:
    params, policy, demand = solution.params, solution.policy, solution.demand
    kappa = kappa_bound(params, policy.n0)
    n = params.n
    top = state_top(policy, params.x0)
    deltas, aug = {}, {}
    for i in range(1, n + 1):
        if policy.modes[n - i + 1] != "active":
            continue
        a = augmented_kernel_delta(policy, demand, params, i, top, n_shifts)
        deltas[i] = a.delta_x
        aug[i] = a.delta_z
    eps_probe = np.linspace(0.0, top - np.nanmin(policy.levels), 8)
    return {
        "kappa": kappa,
        "alpha_lower": 1 - kappa,
        "delta_by_period": {str(i): v for i, v in deltas.items()},
        "augmented_delta_by_period": {str(i): v for i, v in aug.items()},
        "max_delta": max(deltas.values(), default=0.0),
        "alpha_n_estimate": 1 - max(deltas.values(), default=0.0),
        "tv_by_shift": {repr(float(e)): tv_shift(demand, e) for e in eps_probe},
        "delta_below_kappa": bool(all(v <= kappa + 1e-6 for v in deltas.values())),
        "augmented_below_delta": bool(all(aug[i] <= deltas[i] + 1e-12 for i in deltas)),
    }


# --------------------------------------------------------------------------
# distributional checks


@dataclass
class VarianceFit:
    slope: float
    intercept: float
    r2: float
    beta_hat: float
    passed: bool
    points: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "beta_hat": self.beta_hat,
                "passed": self.passed, "points": self.points}


def variance_growth(samples: Mapping[int, np.ndarray], min_size: int = 1000) -> VarianceFit:
    """Least-squares line through (horizon, sample variance)."""
    if len(samples) < 3:
        raise ParameterError("variance growth fit needs at least 3 horizons")
    ns = np.array(sorted(samples), dtype=float)
    for n in ns:
        if len(samples[int(n)]) < min_size:
            raise ParameterError(f"horizon {int(n)} has fewer than {min_size} samples")
    v = np.array([np.var(samples[int(n)], ddof=1) for n in ns])
    nbar, vbar = ns.mean(), v.mean()
    sxx = np.sum((ns - nbar) ** 2)
    slope = float(np.sum((ns - nbar) * (v - vbar)) / sxx)
    intercept = float(vbar - slope * nbar)
    sst = float(np.sum((v - vbar) ** 2))
    sse = float(np.sum((v - intercept - slope * ns) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    beta = float(np.min(v / ns))
    pts = [[int(n), float(x)] for n, x in zip(ns, v)]
    return VarianceFit(slope, intercept, r2, beta, bool(slope > 0 and r2 >= 0.95), pts)


_erfc = np.vectorize(math.erfc, otypes=[float])


def normal_cdf(z):
    return 0.5 * _erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


@dataclass
class CLTReport:
    size: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks: float
    ks_location: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def standardize(sample: np.ndarray) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    sd = sample.std(ddof=1)
    if not sd > 0:
        raise ParameterError("sample variance is zero; cannot standardize")
    return (sample - sample.mean()) / sd


def clt_test(sample: np.ndarray, min_size: int = 1000) -> CLTReport:
    """KS distance of the standardized sample to N(0, 1), plus skewness and kurtosis."""
    sample = np.asarray(sample, dtype=float)
    R = len(sample)
    if R < min_size:
        raise ParameterError(f"CLT check needs at least {min_size} samples (got {R})")
    z = np.sort(standardize(sample))
    F = normal_cdf(z)
    up = np.arange(1, R + 1) / R - F
    down = F - np.arange(R) / R
    j_up, j_down = int(np.argmax(up)), int(np.argmax(down))
    if up[j_up] >= down[j_down]:
        ks, loc = float(up[j_up]), float(z[j_up])
    else:
        ks, loc = float(down[j_down]), float(z[j_down])
    c = sample - sample.mean()
    m2 = float(np.mean(c**2))
    skew = float(np.mean(c**3) / m2**1.5)
    kurt = float(np.mean(c**4) / m2**2 - 3.0)
    return CLTReport(R, float(sample.mean()), float(sample.var(ddof=1)), skew, kurt, min(max(ks, 0.0), 1.0), loc)


def hoeffding_check(costs: np.ndarray, B: float, n: int, lambdas: Sequence[float], center: float | None = None) -> dict:
    """Empirical two-sided tails against ``2 exp(-lambda^2 / (2 n B^2))``."""
    if not B > 0:
        raise ParameterError("difference bound B must be > 0")
    costs = np.asarray(costs, dtype=float)
    R = len(costs)
    mu = costs.mean() if center is None else center
    dev = np.abs(costs - mu)
    rows = []
    for lam in lambdas:
        freq = float(np.mean(dev >= lam))
        bound = 2.0 * math.exp(-(lam**2) / (2.0 * n * B**2))
        se = math.sqrt(freq * (1 - freq) / R)
        rows.append({"lambda": float(lam), "empirical": freq, "bound": bound, "se": se,
                     "passed": bool(freq <= bound + 3 * se)})
    return {"B": B, "n": n, "rows": rows, "passed": all(r["passed"] for r in rows)}


def dkw_epsilon(R: int, alpha: float = DKW_ALPHA) -> float:
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * R))


def stochastic_order_compare(sample_a: np.ndarray, sample_b: np.ndarray) -> dict:
    """Evidence on ``A <=_st B``: the largest excess of ``F_B`` over ``F_A``.

    ``CONSISTENT`` when the excess fits inside the two DKW bands,
    ``VIOLATED`` when it does not, ``INCONCLUSIVE`` when the bands are too wide
    to exclude anything (combined width at least one).
    """
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("both samples must be non-empty")
    pts = np.unique(np.concatenate((a, b)))
    Fa = np.searchsorted(a, pts, side="right") / len(a)
    Fb = np.searchsorted(b, pts, side="right") / len(b)
    gap = Fb - Fa
    j = int(np.argmax(gap))
    V = max(float(gap[j]), 0.0)
    ea, eb = dkw_epsilon(len(a)), dkw_epsilon(len(b))
    if ea + eb >= 1.0:
        verdict = "INCONCLUSIVE"
    elif V <= ea + eb:
        verdict = "CONSISTENT"
    else:
        verdict = "VIOLATED"
    return {
        "V": V,
        "location": float(pts[j]) if V > 0 else None,
        "eps_a": ea,
        "eps_b": eb,
        "R_a": len(a),
        "R_b": len(b),
        "mean_a": float(a.mean()),
        "mean_b": float(b.mean()),
        "verdict": verdict,
    }
