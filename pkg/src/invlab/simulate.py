"""Seeded simulation of the inventory chain and its realized costs.

Random numbers come from counter-based streams: replication ``r`` of master
seed ``m`` uses ``seed_r = mix64(m ^ (r * GOLDEN))`` and its ``t``-th uniform
is ``(mix64(seed_r + (t + 1) * GOLDEN) >> 11) * 2**-53``. In period ``i``
(0-based) draw ``2i`` gives the demand by inverse cdf and draw ``2i + 1`` the
delivery flag (``Y = 1`` iff the uniform is below ``q``).
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .model import DemandModel, ModelParams, ParameterError, carrying_cost
from .solver import PolicyTable, bellman_step, make_grid, solve

GOLDEN = 0x9E3779B97F4A7C15
MASK = (1 << 64) - 1
VARIANTS = ("optimal", "fixed_base_stock", "never_order", "myopic")
TRAJECTORY_HEADER = "period,X,target,order,Y,D,period_cost,cum_cost"


@dataclass(frozen=True)
class StreamSpec:
    master_seed: int
    r: int = 0

    @property
    def seed(self) -> int:
        return replication_seed(self.master_seed, self.r)

    def uniforms(self, start: int, count: int) -> np.ndarray:
        return kernels.uniforms(self.seed, start, count)


def replication_seed(master_seed: int, r: int) -> int:
    return kernels.mix64((master_seed & MASK) ^ ((r * GOLDEN) & MASK))


def horizon_seed(master_seed: int, n: int) -> int:
    return kernels.mix64((master_seed & MASK) ^ (n & MASK))


@dataclass(frozen=True)
class PolicySpec:
    """Which ordering rule to simulate.

    ``table`` is required for ``optimal``; ``level`` for ``fixed_base_stock``.
    """

    variant: str
    table: PolicyTable | None = None
    level: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown policy variant {self.variant!r}")
        if self.variant == "optimal" and self.table is None:
            raise ParameterError("optimal policy needs a PolicyTable")
        if self.variant == "fixed_base_stock" and self.level is None:
            raise ParameterError("fixed_base_stock needs a level")

    @classmethod
    def parse(cls, text: str, table: PolicyTable | None = None) -> "PolicySpec":
        """``optimal``, ``never_order``, ``myopic`` or ``fixed_base_stock:<s>``."""
        name, _, arg = text.partition(":")
        if name == "fixed_base_stock":
            return cls(name, level=float(arg))
        if name == "optimal":
            return cls(name, table=table)
        return cls(name)

    @property
    def label(self) -> str:
        return f"fixed_base_stock:{self.level!r}" if self.variant == "fixed_base_stock" else self.variant


def myopic_level(params: ModelParams, demand: DemandModel, h: float | None = None) -> float:
    """Level minimizing the one-period objective, or NaN when ordering never pays."""
    grid = make_grid(params, demand, h)
    _, ystar, _ = bellman_step(np.zeros(grid.count), params, demand, grid)
    if np.max(np.abs(ystar - grid.abscissae)) <= 2 * grid.h:
        return math.nan
    return float(ystar[0])


def period_levels(policy: PolicySpec, params: ModelParams, demand: DemandModel) -> np.ndarray:
    """Per-period targets ``i = 1..n`` (NaN means order nothing)."""
    n = params.n
    if policy.variant == "optimal":
        if policy.table.n != n:
            raise ParameterError(f"policy table horizon {policy.table.n} != params.n {n}")
        return policy.table.period_levels()
    if policy.variant == "never_order":
        return np.full(n, np.nan)
    if policy.variant == "fixed_base_stock":
        return np.full(n, float(policy.level))
    return np.full(n, myopic_level(params, demand))


@dataclass
class Trajectory:
    X: np.ndarray  # (n + 1,) states at period start, last entry terminal
    target: np.ndarray
    Y: np.ndarray
    D: np.ndarray
    P: np.ndarray
    C: np.ndarray

    @property
    def n(self) -> int:
        return len(self.D)

    @property
    def order(self) -> np.ndarray:
        return self.target - self.X[:-1]

    @property
    def total(self) -> float:
        return float(self.C[-1])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(TRAJECTORY_HEADER + "\n")
        cols = zip(self.X[:-1].tolist(), self.target.tolist(), self.order.tolist(), self.Y.tolist(),
                   self.D.tolist(), self.P.tolist(), self.C.tolist())
        for i, (x, tg, o, y, d, p, c) in enumerate(cols):
            out.write(f"{i + 1},{x!r},{tg!r},{o!r},{int(y)},{d!r},{p!r},{c!r}\n")
        return out.getvalue()


def recompute_costs(traj: Trajectory, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Period and cumulative costs rebuilt from the stored states and draws."""
    x = traj.X[:-1]
    z = np.where(traj.Y == 1, traj.target - traj.D, x - traj.D)
    P = params.c * (traj.target - x) + carrying_cost(z, params)
    C = np.cumsum(P)
    return P, C


def simulate_path(
    policy: PolicySpec,
    params: ModelParams,
    demand: DemandModel,
    stream: StreamSpec | None = None,
    Y: Sequence[int] | None = None,
    D: Sequence[float] | None = None,
) -> Trajectory:
    """Simulate one path, from a random stream or from injected ``(Y, D)``."""
    levels = period_levels(policy, params, demand)
    n = params.n
    if stream is not None:
        out = kernels.simulate(
            levels, params.x0, np.array([stream.seed], dtype=np.uint64), demand.cdf, demand.grid,
            params.q, params.c, params.c_h, params.c_p, True,
        )
        return Trajectory(out["X"][0], out["target"][0], out["Y"][0], out["D"][0], out["P"][0], out["C"][0])
    if Y is None or D is None:
        raise ParameterError("simulate_path needs either a stream or injected Y and D")
    Y = np.asarray(Y)
    D = np.asarray(D, dtype=float)
    if len(Y) != n or len(D) != n:
        raise ParameterError(f"injected sequences must have length n={n} (got {len(Y)}, {len(D)})")
    if not np.all((Y == 0) | (Y == 1)):
        raise ParameterError("injected Y must be 0/1")
    if np.any(D < 0) or np.any(D > demand.J) or not np.all(np.isfinite(D)):
        raise ParameterError(f"injected D must lie in [0, {demand.J}]")
    X = np.empty(n + 1)
    tg = np.empty(n)
    P = np.empty(n)
    C = np.empty(n)
    x, acc = float(params.x0), 0.0
    for i in range(n):
        s = levels[i]
        y = x if math.isnan(s) else (s if x <= s else x)
        z = y - D[i] if Y[i] == 1 else x - D[i]
        cost = params.c * (y - x) + carrying_cost(z, params)
        acc += cost
        X[i], tg[i], P[i], C[i] = x, y, cost, acc
        x = y - D[i]
    X[n] = x
    return Trajectory(X, tg, Y.astype(np.int8), D, P, C)


@dataclass
class BatchResult:
    costs: np.ndarray
    master_seed: int
    policy: str
    n: int
    trajectories: list[Trajectory] = field(default_factory=list)
    paths: dict | None = None

    @property
    def summary(self) -> dict:
        return summarize(self.costs)


def summarize(costs: np.ndarray) -> dict:
    R = len(costs)
    mean = math.fsum(costs) / R
    var = math.fsum((costs - mean) ** 2) / (R - 1) if R > 1 else 0.0
    return {"R": R, "mean": mean, "variance": var, "min": float(costs.min()), "max": float(costs.max())}


def _chunks(R: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(workers, R))
    step = -(-R // workers)
    return [(a, min(a + step, R)) for a in range(0, R, step)]


def simulate_batch(
    policy: PolicySpec,
    params: ModelParams,
    demand: DemandModel,
    R: int,
    master_seed: int,
    retain: int = 0,
    workers: int = 1,
    full: bool = False,
) -> BatchResult:
    """``R`` independent replications; replication ``r`` uses ``StreamSpec(master_seed, r)``.

    The first ``retain`` trajectories are kept. With ``full=True`` all
    trajectories are returned as arrays in ``result.paths``.
    """
    if R < 1:
        raise ParameterError("need at least one replication")
    levels = period_levels(policy, params, demand)
    seeds = np.array([replication_seed(master_seed, r) for r in range(R)], dtype=np.uint64)
    want_paths = full or retain > 0

    def run(span):
        a, b = span
        return kernels.simulate(
            levels, params.x0, seeds[a:b], demand.cdf, demand.grid,
            params.q, params.c, params.c_h, params.c_p, want_paths,
        )

    spans = _chunks(R, workers)
    if len(spans) == 1:
        parts = [run(spans[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            parts = list(pool.map(run, spans))
    result = BatchResult(np.empty(0), master_seed, policy.label, params.n)
    if want_paths:
        paths = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
        result.costs = paths["C"][:, -1].copy()
        result.trajectories = [
            Trajectory(paths["X"][r], paths["target"][r], paths["Y"][r], paths["D"][r], paths["P"][r], paths["C"][r])
            for r in range(min(retain, R))
        ]
        if full:
            result.paths = paths
    else:
        result.costs = np.concatenate(parts)
    return result


def horizon_sweep(
    policy: str | PolicySpec,
    params: ModelParams,
    demand: DemandModel,
    horizons: Sequence[int],
    R: int,
    master_seed: int,
    workers: int = 1,
    h: float | None = None,
) -> dict[int, BatchResult]:
    """One batch per horizon, each with master seed ``mix64(master_seed ^ n)``.

    ``policy="optimal"`` re-solves the dynamic program for every horizon.
    """
    horizons = list(horizons)
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ParameterError("horizons must be strictly increasing")
    out = {}
    for n in horizons:
        p = replace(params, n=n)
        try:
            if policy == "optimal" or (isinstance(policy, PolicySpec) and policy.variant == "optimal"):
                spec = PolicySpec("optimal", table=solve(p, demand, h).policy)
            elif isinstance(policy, PolicySpec):
                spec = policy
            else:
                spec = PolicySpec.parse(policy)
            out[n] = simulate_batch(spec, p, demand, R, horizon_seed(master_seed, n), workers=workers)
        except Exception as exc:
            raise RuntimeError(f"horizon n={n}: {exc}") from exc
    return out


def costs_csv(costs: np.ndarray) -> str:
    return "C_n\n" + "".join(f"{c!r}\n" for c in costs.tolist())
