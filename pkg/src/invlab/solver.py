"""Backward induction for the cost-to-go functions and the order-up-to policy.

With ``k`` periods remaining the Bellman objective at state ``x`` is

    c (y - x) + (1 - q) E L(x - D) + [ q E L(y - D) + E v_{k-1}(y - D) ],

minimized over ``y`` in ``[x, x_hi]``. The bracketed term depends on ``y``
only, so it is tabulated once per stage on the state grid, a suffix scan
gives the constrained grid minimizer for every ``x``, and golden-section
search refines inside the winning bracket.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .model import (
    DemandModel,
    DemandSpec,
    DomainError,
    ModelParams,
    ParameterError,
    compute_n0,
    compute_n0_from_one,
    make_demand,
    quantile,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TIE_TOL = 1e-12
INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class StateGrid:
    x_lo: float
    h: float
    count: int

    @property
    def x_hi(self) -> float:
        return self.x_lo + (self.count - 1) * self.h

    @property
    def abscissae(self) -> np.ndarray:
        return self.x_lo + self.h * np.arange(self.count)

    def index(self, x: float) -> int:
        """Nearest abscissa index."""
        return int(min(max(round((x - self.x_lo) / self.h), 0), self.count - 1))


def upper_level_bound(params: ModelParams, demand: DemandModel) -> float:
    """Quantile bound ``Psi^-1(c_p / (c_p + c_h))`` on every order-up-to level."""
    return float(quantile(demand, params.c_p / (params.c_p + params.c_h)))


def lower_level_bound(params: ModelParams, demand: DemandModel, n0: int | None = None) -> float:
    """Quantile bound on the first principal-range level ``s_{n0+2}``."""
    if n0 is None:
        n0 = compute_n0(params)
    a = params.q + n0 + 1
    p = (a * params.c_p - params.c) / (a * (params.c_p + params.c_h))
    return float(quantile(demand, min(max(p, 0.0), 1.0)))


def stationary_level(params: ModelParams, demand: DemandModel) -> float:
    """Root of ``q Psi(y) + (1 - q) Psi2(y) = c_p / (c_p + c_h)``.

    ``Psi2`` is the cdf of the sum of two demands. This is the first-order
    condition of the recursion far from the horizon, where ordering one unit
    more now saves ``c`` next period and a delayed delivery leaves the period
    exposed to two demands before the stock is topped up again.
    """
    target = params.c_p / (params.c_p + params.c_h)

    def g(y):
        two = float(np.dot(demand.weights, np.interp(y - demand.grid, demand.grid, demand.cdf, left=0.0, right=1.0)))
        one = float(np.interp(y, demand.grid, demand.cdf, left=0.0, right=1.0))
        return params.q * one + (1 - params.q) * two - target

    lo, hi = 0.0, 2 * demand.J
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def level_cap(params: ModelParams, demand: DemandModel) -> float:
    """Upper end used for order-up-to targets: the larger of the quantile bound and the stationary root."""
    return max(upper_level_bound(params, demand), stationary_level(params, demand))


def make_grid(params: ModelParams, demand: DemandModel, h: float | None = None, top: float | None = None) -> StateGrid:
    """State grid ``x_lo + m h`` from ``-(n0 + 2) J`` up past ``max(x0, level cap)``."""
    J = demand.J
    if h is None:
        h = J / 256
    if not h > 0:
        raise ParameterError(f"grid step must be > 0 (got {h})")
    n0 = compute_n0(params)
    x_lo = -(n0 + 2) * J
    if top is None:
        top = max(params.x0, level_cap(params, demand) + 4 * h)
    count = int(math.ceil((top - x_lo) / h - 1e-9)) + 1
    return StateGrid(x_lo=x_lo, h=h, count=count)


@dataclass
class PolicyTable:
    """Per-stage order-up-to structure.

    Index ``k`` (periods remaining, 1..n) maps to period ``i = n - k + 1``.
    ``levels[k]`` is NaN for passive stages; ``levels[0]`` is unused.
    """

    n: int
    n0: int
    h: float
    s_cap: float
    x_lo: float
    modes: list[str]
    levels: np.ndarray
    bounds: dict = field(default_factory=dict)

    def mode(self, k: int) -> str:
        return self.modes[k]

    def level_for_period(self, i: int) -> float:
        return float(self.levels[self.n - i + 1])

    def period_levels(self) -> np.ndarray:
        """Targets ordered by period ``i = 1..n`` (NaN for passive)."""
        return self.levels[1:][::-1].copy()

    @property
    def active_stages(self) -> list[int]:
        return [k for k in range(1, self.n + 1) if self.modes[k] == "active"]


def order_up_to(policy: PolicyTable, i: int, x: float, n: int | None = None) -> float:
    n = policy.n if n is None else n
    if not 1 <= i <= n:
        raise DomainError(f"period {i} outside [1, {n}]")
    k = n - i + 1
    if policy.modes[k] == "passive":
        return float(x)
    return float(max(x, policy.levels[k]))


@dataclass
class Solution:
    params: ModelParams
    demand: DemandModel
    grid: StateGrid
    values: np.ndarray  # (n + 1, count); row k is v_k
    minimizers: np.ndarray  # (n + 1, count); row 0 unused
    policy: PolicyTable
    warnings: list[str] = field(default_factory=list)

    @property
    def expected_cost(self) -> float:
        """``v_n(x0)``, the optimal expected total cost."""
        return self.value(self.params.n, self.params.x0)

    def value(self, k: int, x):
        """Linear interpolation of ``v_k``, clamped to the grid range."""
        out = np.interp(x, self.grid.abscissae, self.values[k])
        return float(out) if np.ndim(out) == 0 else out


def _stage_terms(xs, demand, grid, values, w_carry, params):
    out, under = kernels.stage_expectation(
        xs, demand.grid, demand.weights, grid.x_lo, grid.h, values, w_carry, params.c_h, params.c_p
    )
    return out, under


def bellman_step(v_prev, params: ModelParams, demand: DemandModel, grid: StateGrid, carry_now=None):
    """One backward-induction stage.

    Returns ``(v_next, ystar, underflows)``. ``carry_now`` may pass in the
    tabulated ``E L(x - D)`` to avoid recomputing it each stage.
    """
    xs = grid.abscissae
    v_prev = np.asarray(v_prev, dtype=float)
    if carry_now is None:
        carry_now, _ = _stage_terms(xs, demand, grid, np.zeros(grid.count), 1.0, params)
    G, _ = _stage_terms(xs, demand, grid, v_prev, params.q, params)
    f = params.c * xs + G
    N = grid.count

    # suffix argmin, ties to the smaller y
    best = np.empty(N, dtype=np.intp)
    b = N - 1
    for m in range(N - 1, -1, -1):
        if f[m] <= f[b] + TIE_TOL:
            b = m
        best[m] = b

    def objective(y):
        g, _ = _stage_terms(np.array([y]), demand, grid, v_prev, params.q, params)
        return params.c * y + g[0]

    cache: dict[tuple[int, int], tuple[float, float]] = {}
    ystar = np.empty(N)
    fstar = np.empty(N)
    for m in range(N):
        j = best[m]
        lo, hi = max(j - 1, m), min(j + 1, N - 1)
        key = (lo, hi)
        if key not in cache:
            cands = [(f[j], xs[j]), (f[lo], xs[lo]), (f[hi], xs[hi])]
            if hi > lo:
                cands += _golden(objective, xs[lo], xs[hi], grid.h / 16)
            cache[key] = min(cands)
        fstar[m], ystar[m] = cache[key]
    v_next = fstar - params.c * xs + (1.0 - params.q) * carry_now
    # only lookups made by the chosen decisions matter
    under = int(np.count_nonzero(ystar - demand.J < grid.x_lo - 1e-12))
    return v_next, ystar, under


def _golden(fn, a, b, tol):
    """Golden-section search on ``[a, b]``; returns the two final probes as ``(f, y)``."""
    c1 = b - INVGOLD * (b - a)
    c2 = a + INVGOLD * (b - a)
    f1, f2 = fn(c1), fn(c2)
    while b - a > tol:
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - INVGOLD * (b - a)
            f1 = fn(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + INVGOLD * (b - a)
            f2 = fn(c2)
    return [(f1, c1), (f2, c2)]


def solve(params: ModelParams, demand: DemandModel, h: float | None = None) -> Solution:
    """Run ``n`` Bellman stages from ``v_0 = 0`` and extract the policy.

    The grid top starts just above the level cap; if a minimizer ever lands
    within ``2h`` of it the top is raised by ``J / 4`` and the solve repeated.
    """
    grid = make_grid(params, demand, h)
    cap = level_cap(params, demand)
    if params.x0 > cap + grid.h:
        raise ParameterError(
            f"initial inventory x0={params.x0} exceeds the order-up-to cap {cap + grid.h:.6g}"
        )
    while True:
        sol = _solve_on(params, demand, grid)
        pinned = np.nanmax(np.where(np.isnan(sol.policy.levels), -np.inf, sol.policy.levels))
        if pinned < grid.x_hi - 2 * grid.h or grid.x_hi > params.x0 + 4 * demand.J:
            return sol
        log.info("order-up-to level reached grid top %.6g; widening", grid.x_hi)
        grid = make_grid(params, demand, grid.h, top=grid.x_hi + demand.J / 4)


def _solve_on(params: ModelParams, demand: DemandModel, grid: StateGrid) -> Solution:
    n0 = compute_n0(params)
    xs = grid.abscissae
    n = params.n
    values = np.zeros((n + 1, grid.count))
    mins = np.full((n + 1, grid.count), np.nan)
    carry_now, _ = _stage_terms(xs, demand, grid, np.zeros(grid.count), 1.0, params)
    modes = ["none"]
    levels = np.full(n + 1, np.nan)
    warnings = []
    for k in range(1, n + 1):
        v, ystar, under = bellman_step(values[k - 1], params, demand, grid, carry_now)
        if under:
            msg = f"stage k={k}: decisions at {under} states look up values below x_lo={grid.x_lo}; clamped"
            log.warning(msg)
            warnings.append(msg)
        values[k] = v
        mins[k] = ystar
        if np.max(np.abs(ystar - xs)) <= 2 * grid.h:
            modes.append("passive")
        else:
            modes.append("active")
            levels[k] = ystar[0]
    policy = PolicyTable(
        n=n,
        n0=n0,
        h=grid.h,
        s_cap=grid.x_hi,
        x_lo=grid.x_lo,
        modes=modes,
        levels=levels,
        bounds={
            "lower_s_n0_plus_2": lower_level_bound(params, demand, n0),
            "upper_s_inf": upper_level_bound(params, demand),
            "stationary_level": stationary_level(params, demand),
        },
    )
    return Solution(params, demand, grid, values, mins, policy, warnings)


# --------------------------------------------------------------------------
# structure report


def structure_report(solution: Solution) -> dict:
    """Compare the computed policy with the base-stock characterization.

    Checks: (a) monotone active levels; (b) empirical passive stages against
    the residual range ``k <= n0 + 1`` under both conventions for the natural
    numbers (reported, never fatal); (c) the constant-slope identity of the
    cost-to-go on ``x <= 0``; (d) the quantile bounds on the levels.
    """
    params, demand, policy, grid = solution.params, solution.demand, solution.policy, solution.grid
    h, n = grid.h, params.n
    xs = grid.abscissae
    active = policy.active_stages
    lv = [float(policy.levels[k]) for k in active]

    mono_viol = max((lv[j] - lv[j + 1] for j in range(len(lv) - 1) if active[j + 1] == active[j] + 1), default=0.0)
    monotone = {"passed": bool(mono_viol <= 2 * h), "max_decrease": max(mono_viol, 0.0), "tolerance": 2 * h}

    # minimizer maps are not persisted, so a loaded solution skips this check
    have_mins = not np.all(np.isnan(solution.minimizers[1:]))
    form_dev = 0.0
    for k in active if have_mins else []:
        ys = solution.minimizers[k]
        form_dev = max(form_dev, float(np.max(np.abs(ys - np.maximum(xs, policy.levels[k])))))
    form = {"passed": bool(form_dev <= 2 * h), "max_deviation": form_dev, "tolerance": 2 * h,
            "available": bool(have_mins)}

    passive = [k for k in range(1, n + 1) if policy.modes[k] == "passive"]
    residual = {}
    for label, n0 in (("N_from_0", compute_n0(params)), ("N_from_1", compute_n0_from_one(params))):
        expected = list(range(1, min(n0 + 1, n) + 1))
        residual[label] = {
            "n0": n0,
            "expected_passive": expected,
            "status": "PASS" if expected == passive else "MISMATCH",
        }

    slope = params.c + params.c_p * (1 - params.q)
    tol = 5 * h * (params.c + params.c_p)
    neg = xs <= 0
    worst = 0.0
    per_stage = {}
    for k in active:
        if policy.levels[k] < 0:
            continue
        w = solution.values[k][neg] + slope * xs[neg]
        dev = float(w.max() - w.min())
        per_stage[k] = dev
        worst = max(worst, dev)
    slope_id = {"slope": slope, "tolerance": tol, "max_deviation": worst, "passed": bool(worst <= tol),
             "stages_checked": len(per_stage)}

    n0 = policy.n0
    lower = policy.bounds["lower_s_n0_plus_2"]
    upper = policy.bounds["upper_s_inf"]
    principal = [float(policy.levels[k]) for k in active if k >= n0 + 2]
    residual_active = {k: float(policy.levels[k]) for k in active if k <= n0 + 1}
    bounds = {
        "lower_bound": lower,
        "upper_bound": upper,
        "min_principal_level": min(principal) if principal else None,
        "max_active_level": max(lv) if lv else None,
        "stationary_level": policy.bounds.get("stationary_level"),
        "lower_passed": bool(not principal or min(principal) >= lower - 2 * h),
        "upper_passed": bool(not lv or max(lv) <= upper + 2 * h),
        "stationary_passed": bool(not lv or max(lv) <= policy.bounds.get("stationary_level", math.inf) + 2 * h),
        "residual_range_active_levels": residual_active,
    }
    return {
        "n": n,
        "n0": n0,
        "h": h,
        "expected_cost": solution.expected_cost,
        "base_stock_form": form,
        "monotone_levels": monotone,
        "residual_range": residual,
        "slope_identity": slope_id,
        "level_bounds": bounds,
        "passed": bool(form["passed"] and monotone["passed"] and slope_id["passed"] and bounds["lower_passed"] and bounds["upper_passed"]),
    }


# --------------------------------------------------------------------------
# persistence


def _f(x: float) -> str:
    return repr(float(x))


def save_solution(solution: Solution, path) -> Path:
    path = Path(path)
    path.write_text(solution_text(solution), encoding="utf-8")
    return path


def solution_text(solution: Solution) -> str:
    """Policy and value tables in the ``invlab-policy`` text format.

    Layout: ``#``-prefixed header lines ``key: <json>`` (schema, params,
    demand, grid, n0, bounds), a ``[policy]`` CSV block ``k,mode,level`` and a
    ``[values]`` CSV block with one column per stage. Floats use the shortest
    round-trip representation, so loading is lossless.
    """
    p, g, pol = solution.params, solution.grid, solution.policy
    header = {
        "schema": f"invlab-policy/{SCHEMA_VERSION}",
        "params": {"c": p.c, "c_h": p.c_h, "c_p": p.c_p, "q": p.q, "n": p.n, "x0": p.x0, "unchecked": p.unchecked},
        "demand": solution.demand.spec.to_dict(),
        "grid": {"x_lo": g.x_lo, "h": g.h, "count": g.count},
        "n0": pol.n0,
        "s_cap": pol.s_cap,
        "bounds": pol.bounds,
    }
    lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in header.items()]
    lines.append("[policy]")
    lines.append("k,mode,level")
    for k in range(1, p.n + 1):
        lv = "" if pol.modes[k] == "passive" else _f(pol.levels[k])
        lines.append(f"{k},{pol.modes[k]},{lv}")
    lines.append("[values]")
    lines.append("x," + ",".join(f"v_{k}" for k in range(p.n + 1)))
    xs = g.abscissae
    for m in range(g.count):
        lines.append(_f(xs[m]) + "," + ",".join(_f(solution.values[k, m]) for k in range(p.n + 1)))
    return "\n".join(lines) + "\n"


def _expect(lines: list[str], i: int, want: str) -> None:
    if i >= len(lines) or lines[i] != want:
        got = lines[i] if i < len(lines) else "end of file"
        raise ValueError(f"policy file line {i + 1}: expected {want!r}, got {got!r}")


def load_solution(path) -> Solution:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = {}
    i = 0
    while i < len(text) and text[i].startswith("#"):
        key, _, val = text[i][2:].partition(": ")
        header[key] = json.loads(val)
        i += 1
    if header.get("schema") != f"invlab-policy/{SCHEMA_VERSION}":
        raise ValueError(f"unsupported policy file schema {header.get('schema')!r}")
    params = ModelParams(**header["params"])
    demand = make_demand(DemandSpec.from_dict(header["demand"]))
    grid = StateGrid(**header["grid"])
    _expect(text, i, "[policy]")
    _expect(text, i + 1, "k,mode,level")
    i += 2
    modes = ["none"]
    levels = np.full(params.n + 1, np.nan)
    for k in range(1, params.n + 1):
        kk, mode, lv = text[i].split(",")
        if int(kk) != k or mode not in ("active", "passive"):
            raise ValueError(f"policy file line {i + 1}: bad policy row {text[i]!r}")
        modes.append(mode)
        if mode == "active":
            levels[k] = float(lv)
        i += 1
    _expect(text, i, "[values]")
    i += 2
    rows = np.array([[float(v) for v in line.split(",")] for line in text[i:i + grid.count]])
    values = rows[:, 1:].T.copy()
    policy = PolicyTable(
        n=params.n, n0=header["n0"], h=grid.h, s_cap=header["s_cap"], x_lo=grid.x_lo,
        modes=modes, levels=levels, bounds=header["bounds"],
    )
    mins = np.full_like(values, np.nan)
    return Solution(params, demand, grid, values, mins, policy)


def with_horizon(params: ModelParams, n: int) -> ModelParams:
    return replace(params, n=n)
