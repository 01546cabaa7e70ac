"""Pure numpy implementations of the hot kernels.

Signatures and semantics match the compiled ``_kernels`` extension. The
simulation and random-stream kernels reproduce the compiled results bit for
bit; ``stage_expectation`` agrees to rounding (different summation order).
"""
import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK = (1 << 64) - 1
INV53 = 1.0 / (1 << 53)

_U30, _U27, _U31, _U11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64(z):
    """xor-shift-multiply finalizer on a Python int."""
    z &= MASK
    z = ((z ^ (z >> 30)) * MIX1) & MASK
    z = ((z ^ (z >> 27)) * MIX2) & MASK
    return z ^ (z >> 31)


def _mix64_array(z):
    z = z ^ (z >> _U30)
    z = z * np.uint64(MIX1)
    z = z ^ (z >> _U27)
    z = z * np.uint64(MIX2)
    return z ^ (z >> _U31)


def _draw(seeds, t):
    """Uniform variates number ``t`` of each counter stream in ``seeds``."""
    with np.errstate(over="ignore"):
        ctr = seeds + np.uint64(((t + 1) * GOLDEN) & MASK)
        bits = _mix64_array(ctr) >> _U11
    return bits.astype(np.float64) * INV53


def uniforms(seed, start, count):
    seeds = np.full(count, seed & MASK, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ctr = seeds + (np.arange(start + 1, start + count + 1, dtype=np.uint64) * np.uint64(GOLDEN))
        bits = _mix64_array(ctr) >> _U11
    return bits.astype(np.float64) * INV53


def _inverse_cdf(u, cdf, t):
    idx = np.searchsorted(cdf, u, side="left")
    idx = np.minimum(idx, len(cdf) - 1)
    lo = np.maximum(idx - 1, 0)
    den = cdf[idx] - cdf[lo]
    safe = np.where(den > 0, den, 1.0)
    return np.where(idx == 0, t[0], t[lo] + (u - cdf[lo]) / safe * (t[idx] - t[lo]))


def inverse_cdf(u, cdf, t):
    return _inverse_cdf(np.asarray(u, dtype=np.float64), np.asarray(cdf), np.asarray(t))


def stage_expectation(ys, t, p, x_lo, h, values, w_carry, c_h, c_p):
    """``sum_j p_j (w_carry * L(y - t_j) + V(y - t_j))`` for each ``y``.

    ``V`` is the linear interpolant of ``values`` on the grid ``x_lo + m h``,
    clamped at both ends. Returns ``(out, underflows)`` where ``underflows``
    counts lookups that fell below ``x_lo``.
    """
    ys = np.asarray(ys, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    z = ys[:, None] - t[None, :]
    carry = np.where(z >= 0, c_h * z, -c_p * z)
    pos = (z - x_lo) / h
    under = int(np.count_nonzero(pos < 0))
    pos = np.clip(pos, 0.0, n - 1)
    i = np.minimum(np.floor(pos).astype(np.intp), n - 2)
    frac = pos - i
    v = values[i] + frac * (values[i + 1] - values[i])
    out = (w_carry * carry + v) @ p
    return out, under


def simulate(levels, x0, seeds, cdf, t, q, c, c_h, c_p, retain):
    """Run one path per seed under a per-period order-up-to table.

    ``levels[i]`` is the target for period ``i`` (0-based) or NaN for the
    passive rule. Per period the demand uses draw ``2i`` of the stream and
    the delivery flag draw ``2i + 1``.
    """
    levels = np.asarray(levels, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.uint64)
    cdf = np.asarray(cdf, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = levels.shape[0]
    R = seeds.shape[0]
    x = np.full(R, float(x0))
    cum = np.zeros(R)
    if retain:
        X = np.empty((R, n + 1))
        Tg = np.empty((R, n))
        Yo = np.empty((R, n), dtype=np.int8)
        Do = np.empty((R, n))
        Po = np.empty((R, n))
        Co = np.empty((R, n))
    for i in range(n):
        s = levels[i]
        y = x.copy() if np.isnan(s) else np.where(x <= s, s, x)
        d = _inverse_cdf(_draw(seeds, 2 * i), cdf, t)
        filled = _draw(seeds, 2 * i + 1) < q
        z = np.where(filled, y - d, x - d)
        carry = np.where(z >= 0, c_h * z, -c_p * z)
        cost = c * (y - x) + carry
        cum = cum + cost
        if retain:
            X[:, i] = x
            Tg[:, i] = y
            Yo[:, i] = filled
            Do[:, i] = d
            Po[:, i] = cost
            Co[:, i] = cum
        x = y - d
    if retain:
        X[:, n] = x
        return {"X": X, "target": Tg, "Y": Yo, "D": Do, "P": Po, "C": Co}
    return cum
