"""Model parameters, carrying cost and discretized demand densities.

Demand densities live on ``M + 1`` equally spaced abscissae of ``[0, J]`` and
are treated as the piecewise-linear interpolant of those values, zero off
``[0, J]``. Every integral against the density uses the composite trapezoid
rule on that grid, so expectations reduce to weighted sums over the atoms
``grid[j]`` with weights ``weights[j]`` (which sum to one).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

DENSITY_TOL = 1e-12
FAMILIES = ("uniform", "triangular", "bump", "mixture")


class ParameterError(ValueError):
    """Invalid model or demand parameters."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True)
class ModelParams:
    """Economic and horizon parameters of the inventory problem.

    ``unchecked=True`` admits ``c >= c_p`` so that diagnostics can be exercised
    with artificial parameter sets where the residual range is non-trivial.
    """

    c: float
    c_h: float
    c_p: float
    q: float
    n: int = 1
    x0: float = 0.0
    unchecked: bool = False

    def __post_init__(self):
        errors = params_errors(self)
        if errors:
            raise ParameterError("; ".join(errors))


def params_errors(p) -> list[str]:
    """Every violated parameter constraint; ``p`` needs the ``ModelParams`` attributes."""
    errors = []
    for name in ("c", "c_h", "c_p", "q", "x0"):
        if not math.isfinite(getattr(p, name)):
            errors.append(f"{name} must be finite")
    if errors:
        return errors
    if p.c <= 0:
        errors.append("c must be > 0")
    if p.c_p <= 0:
        errors.append("c_p must be > 0")
    if not p.unchecked and not p.c < p.c_p:
        errors.append(
            "ordering cost c must be strictly smaller than the backlog penalty c_p "
            f"(got c={p.c}, c_p={p.c_p})"
        )
    if p.c_h <= 0:
        errors.append("holding cost c_h must be > 0 (needed for kappa < 1)")
    if not 0.0 <= p.q <= 1.0:
        errors.append(f"q must lie in [0, 1] (got {p.q})")
    if int(p.n) != p.n or p.n < 1:
        errors.append(f"horizon n must be a positive integer (got {p.n})")
    if p.x0 < 0:
        errors.append(f"x0 must be >= 0 (got {p.x0})")
    return errors


def carrying_cost(z, params: ModelParams):
    """Holding cost ``c_h * z`` for stock ``z >= 0``, backlog penalty ``-c_p * z`` otherwise."""
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("carrying_cost needs a finite inventory level")
    out = np.where(arr >= 0, params.c_h * arr, -params.c_p * arr)
    return float(out) if out.ndim == 0 else out


def compute_n0(params: ModelParams) -> int:
    """Least ``j >= 0`` with ``c < c_p (q + j + 1)``."""
    j = 0
    while not params.c < params.c_p * (params.q + j + 1):
        j += 1
    return j


def compute_n0_from_one(params: ModelParams) -> int:
    """Same threshold when the natural numbers are taken to start at 1."""
    return max(1, compute_n0(params))


# --------------------------------------------------------------------------
# demand


@dataclass(frozen=True)
class DemandSpec:
    family: str
    support: tuple[float, float]
    shape: Mapping[str, Any] = field(default_factory=dict)
    M: int | None = None

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "support": [float(self.support[0]), float(self.support[1])],
            "shape": _plain(self.shape),
            "M": self.M,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DemandSpec":
        support = d.get("support")
        if support is None or len(support) != 2:
            raise ParameterError("demand support must be a pair [a, b]")
        return cls(
            family=d["family"],
            support=(float(support[0]), float(support[1])),
            shape=dict(d.get("shape") or {}),
            M=d.get("M"),
        )


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass(frozen=True, eq=False)
class DemandModel:
    """Discretized bounded-support demand density.

    Attributes
    ----------
    J : float
        Upper end of the support (the grid spans ``[0, J]``).
    grid : ndarray, shape (M + 1,)
    density : ndarray
        Density values at the abscissae, normalized to unit trapezoid mass.
    cdf : ndarray
        Cumulative trapezoid integral of ``density``; ``cdf[-1] == 1``.
    weights : ndarray
        Trapezoid quadrature weights ``w_j * density_j``.
    mean : float
    spec : DemandSpec
    """

    J: float
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    weights: np.ndarray
    mean: float
    spec: DemandSpec

    @property
    def M(self) -> int:
        return len(self.grid) - 1

    @property
    def step(self) -> float:
        return self.J / self.M

    def pdf(self, w):
        """Piecewise-linear density, zero outside ``[0, J]``."""
        return np.interp(w, self.grid, self.density, left=0.0, right=0.0)

    def expect(self, values) -> float:
        """Trapezoid expectation of ``values`` given at the grid abscissae."""
        return float(np.dot(self.weights, values))

    def quantile(self, p):
        return quantile(self, p)


def _raw_density(family: str, a: float, b: float, shape: Mapping[str, Any], t: np.ndarray):
    if not (math.isfinite(a) and math.isfinite(b)) or not 0 <= a < b:
        raise ParameterError(f"{family} support needs 0 <= a < b < inf (got [{a}, {b}])")
    inside = (t >= a) & (t <= b)
    if family == "uniform":
        return np.where(inside, 1.0 / (b - a), 0.0)
    if family == "triangular":
        mode = float(shape.get("mode", 0.5 * (a + b)))
        if not a <= mode <= b:
            raise ParameterError(f"triangular mode {mode} outside [{a}, {b}]")
        up = np.where(t <= mode, (t - a) / (mode - a) if mode > a else 1.0, 0.0)
        down = np.where(t > mode, (b - t) / (b - mode) if b > mode else 0.0, 0.0)
        return np.where(inside, 2.0 / (b - a) * (up + down), 0.0)
    if family == "bump":
        alpha = float(shape.get("alpha", 2.0))
        beta = float(shape.get("beta", 2.0))
        if alpha < 0 or beta < 0:
            raise ParameterError("bump exponents must be >= 0")
        u = np.clip((t - a) / (b - a), 0.0, 1.0)
        return np.where(inside, u**alpha * (1.0 - u) ** beta, 0.0)
    if family == "mixture":
        comps = shape.get("components") or []
        weights = shape.get("weights") or [1.0 / max(len(comps), 1)] * len(comps)
        if not comps or len(weights) != len(comps):
            raise ParameterError("mixture needs components and one weight per component")
        out = np.zeros_like(t)
        for w, comp in zip(weights, comps):
            if w < 0:
                raise ParameterError("mixture weights must be >= 0")
            cs = DemandSpec.from_dict(comp)
            ca, cb = cs.support
            raw = _raw_density(cs.family, ca, cb, cs.shape, t)
            # components are normalized analytically so the weights mean what they say
            out = out + w * raw / _analytic_mass(cs)
        return out
    raise ParameterError(f"unknown demand family {family!r}; expected one of {FAMILIES}")


def _analytic_mass(spec: DemandSpec) -> float:
    a, b = spec.support
    if spec.family in ("uniform", "triangular"):
        return 1.0
    if spec.family == "bump":
        alpha = float(spec.shape.get("alpha", 2.0))
        beta = float(spec.shape.get("beta", 2.0))
        return (b - a) * math.exp(
            math.lgamma(alpha + 1) + math.lgamma(beta + 1) - math.lgamma(alpha + beta + 2)
        )
    return 1.0


def default_M(J: float) -> int:
    return max(64, int(math.ceil(512 * J - 1e-9)))


MIN_M = 64


def make_demand(spec: DemandSpec | Mapping[str, Any], min_M: int = MIN_M) -> DemandModel:
    """Build a :class:`DemandModel` from a descriptor.

    Supported families: ``uniform`` on ``[a, b]``; ``triangular`` with
    ``shape={"mode": m}``; ``bump`` with density proportional to
    ``(t-a)^alpha (b-t)^beta``; ``mixture`` of the above with
    ``shape={"components": [...], "weights": [...]}``.

    ``min_M`` lowers the grid-size floor for small hand-checkable instances.
    """
    if not isinstance(spec, DemandSpec):
        spec = DemandSpec.from_dict(spec)
    a, b = spec.support
    if not (math.isfinite(a) and math.isfinite(b)) or not 0 <= a < b:
        raise ParameterError(f"demand support needs 0 <= a < b < inf (got [{a}, {b}])")
    J = float(b)
    M = spec.M if spec.M is not None else default_M(J)
    if int(M) != M or M < max(min_M, 2):
        raise ParameterError(f"grid size M must be an integer >= {max(min_M, 2)} (got {M})")
    M = int(M)
    spec = DemandSpec(spec.family, (float(a), float(b)), dict(spec.shape), M)

    grid = np.linspace(0.0, J, M + 1)
    raw = _raw_density(spec.family, a, b, spec.shape, grid)
    if not np.all(np.isfinite(raw)) or np.any(raw < 0):
        raise ParameterError("density must be finite and non-negative")
    h = J / M
    tw = np.full(M + 1, h)
    tw[0] = tw[-1] = 0.5 * h
    mass = float(np.dot(tw, raw))
    if not mass > 0:
        raise ParameterError("density has zero mass on its grid and cannot be normalized")
    density = raw / mass
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * h * (density[1:] + density[:-1]))))
    cdf = np.maximum.accumulate(cdf / cdf[-1])
    cdf[-1] = 1.0
    weights = tw * density
    mean = float(np.dot(weights, grid))
    for arr in (grid, density, cdf, weights):
        arr.setflags(write=False)
    return DemandModel(J=J, grid=grid, density=density, cdf=cdf, weights=weights, mean=mean, spec=spec)


def uniform(a: float = 0.0, b: float = 1.0, M: int | None = None) -> DemandModel:
    return make_demand(DemandSpec("uniform", (a, b), {}, M))


def triangular(a: float, mode: float, b: float, M: int | None = None) -> DemandModel:
    return make_demand(DemandSpec("triangular", (a, b), {"mode": mode}, M))


def bump(a: float, b: float, alpha: float = 2.0, beta: float = 2.0, M: int | None = None) -> DemandModel:
    return make_demand(DemandSpec("bump", (a, b), {"alpha": alpha, "beta": beta}, M))


def mixture(components: Sequence[Mapping[str, Any]], weights: Sequence[float], M: int | None = None) -> DemandModel:
    lo = min(float(c["support"][0]) for c in components)
    hi = max(float(c["support"][1]) for c in components)
    shape = {"components": [dict(c) for c in components], "weights": list(weights)}
    return make_demand(DemandSpec("mixture", (lo, hi), shape, M))


def quantile(demand: DemandModel, p):
    """Right-continuous inverse of the grid cdf: smallest ``t`` with ``cdf(t) >= p``.

    Between abscissae the cdf is interpolated linearly. Accepts scalars or arrays.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("quantile needs p in [0, 1]")
    cdf, t = demand.cdf, demand.grid
    idx = np.searchsorted(cdf, arr, side="left")
    idx = np.clip(idx, 0, len(cdf) - 1)
    lo = np.maximum(idx - 1, 0)
    denom = cdf[idx] - cdf[lo]
    safe = np.where(denom > 0, denom, 1.0)
    out = np.where(idx == 0, t[0], t[lo] + (arr - cdf[lo]) / safe * (t[idx] - t[lo]))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# soft unimodality


@dataclass(frozen=True)
class ShiftReport:
    eps: float
    passed: bool
    witness: float  # -inf when the dominance set is the whole line


@dataclass(frozen=True)
class UnimodalityReport:
    shifts: tuple[ShiftReport, ...]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.shifts)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "shifts": [
                {"eps": s.eps, "passed": s.passed, "witness": _json_float(s.witness)}
                for s in self.shifts
            ],
        }


def _json_float(x: float):
    return x if math.isfinite(x) else ("-inf" if x < 0 else "inf")


def check_soft_unimodality(demand: DemandModel, eps_list: Sequence[float], tol: float = DENSITY_TOL) -> UnimodalityReport:
    """Check that ``{w : psi(w + eps) <= psi(w)}`` is a half-line for each shift.

    The comparison runs on the density grid extended to ``[-J, 2J]``. Points
    where both densities are below ``tol`` are ignored, so the uniform density
    qualifies even though the literal condition fails off its support.
    """
    if len(eps_list) == 0:
        log.warning("soft-unimodality check called with no shifts; vacuous pass")
    M, J = demand.M, demand.J
    w = np.linspace(-J, 2 * J, 3 * M + 1)
    base = demand.pdf(w)
    out = []
    for eps in eps_list:
        eps = float(eps)
        if not eps >= 0:
            raise DomainError(f"shift must be >= 0 (got {eps})")
        shifted = demand.pdf(w + eps)
        keep = np.maximum(base, shifted) >= tol
        g = (base - shifted)[keep]
        wk = w[keep]
        neg = np.flatnonzero(g < -tol)
        pos = np.flatnonzero(g > tol)
        passed = not (len(neg) and len(pos) and pos[0] < neg[-1])
        if len(neg) == 0:
            witness = -math.inf
        elif neg[-1] + 1 < len(wk):
            witness = float(wk[neg[-1] + 1])
        else:
            witness = math.inf
        out.append(ShiftReport(eps, bool(passed), witness))
    return UnimodalityReport(tuple(out))
