"""Fluctuation bounds for zero-mean spectrally positive Lévy processes.

The processes are ``X_t = Y_t - c t`` with ``Y`` compound Poisson, so a path
is a jump ledger and every running minimum is exact: between jumps ``X``
falls linearly, hence minima sit at the left limits before jumps or at the
end of the window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .errors import PreconditionError
from .parallel import chunks, fan_out
from .seeding import stream
from .stats import MCEstimate, ScalingFit, loglog_fit

UNIT = "unit"
EXPONENTIAL = "exponential"
_LAW_CODE = {UNIT: 0, EXPONENTIAL: 1}

SMALL_BALL_FLOOR = 1.0  # window floor C0; unit jumps live on a lattice of mesh 1
F_FLOOR = 0.1
MIN_N = 10_000
CHUNK = 100_000


@dataclass(frozen=True)
class SpectrallyPositiveLevy:
    """``X_t = Y_t - drift t``, ``Y`` with unit or exponential(theta) jumps at ``rate``."""

    jump_law: str
    rate: float
    drift: float
    theta: float = 1.0

    def __post_init__(self):
        if self.jump_law not in _LAW_CODE:
            raise PreconditionError(f"jump law must be 'unit' or 'exponential', got {self.jump_law!r}")
        if not (self.rate > 0 and self.drift > 0 and self.theta > 0):
            raise PreconditionError("rate, drift and theta must be positive")
        if abs(self.rate * self.mean_jump - self.drift) > 1e-12:
            raise PreconditionError("the process must have zero mean: rate * E[jump] == drift")

    @classmethod
    def compensated_poisson(cls, rate: float = 1.0) -> "SpectrallyPositiveLevy":
        return cls(UNIT, float(rate), float(rate))

    @classmethod
    def compound_exponential(cls, rate: float = 1.0, theta: float = 1.0) -> "SpectrallyPositiveLevy":
        return cls(EXPONENTIAL, float(rate), float(rate) / float(theta), float(theta))

    @property
    def mean_jump(self) -> float:
        return 1.0 if self.jump_law == UNIT else 1.0 / self.theta

    @property
    def second_moment_jump(self) -> float:
        return 1.0 if self.jump_law == UNIT else 2.0 / self.theta ** 2

    @property
    def variance_rate(self) -> float:
        """Variance of ``X_1``."""
        return self.rate * self.second_moment_jump

    @property
    def code(self) -> int:
        return _LAW_CODE[self.jump_law]

    def describe(self):
        return {"jump_law": self.jump_law, "rate": self.rate, "drift": self.drift, "theta": self.theta}


def levy_from_spec(spec) -> SpectrallyPositiveLevy:
    """``"poisson"``, ``"poisson:2"``, ``"exponential"`` or ``"exponential:rate,theta"``."""
    if isinstance(spec, SpectrallyPositiveLevy):
        return spec
    name, _, arg = str(spec).partition(":")
    vals = [float(v) for v in arg.split(",")] if arg else []
    if name in ("poisson", "unit", "compensated-poisson"):
        return SpectrallyPositiveLevy.compensated_poisson(*vals)
    if name in ("exponential", "compound-exponential"):
        return SpectrallyPositiveLevy.compound_exponential(*vals)
    raise PreconditionError(f"unknown reference process {spec!r}")


# -- kernels ---------------------------------------------------------------------

@njit
def _jump(code, theta, rng):
    if code == 0:
        return 1.0
    return -math.log(1.0 - rng.random()) / theta


@njit
def _killed_paths(n, code, rate, theta, c, t1, floor1, t2, floor2, rng):
    """Paths on ``[0, t2]`` killed below ``floor1`` on ``[0, t1]`` and ``floor2`` on ``[t1, t2]``.

    Returns ``(alive, x_t1, x_t2)``; values of killed paths are meaningless.
    """
    alive = np.zeros(n, dtype=np.bool_)
    x1 = np.zeros(n)
    x2 = np.zeros(n)
    for r in range(n):
        # jump sum and clock kept apart so that lattice values such as N_t - t stay exact
        y = 0.0
        s = 0.0
        at1 = 0.0
        ok = True
        while True:
            nxt = s + (-math.log(1.0 - rng.random()) / rate)
            e = nxt if nxt < t2 else t2
            if s < t1:
                b = e if e < t1 else t1
                if y - c * b < floor1:
                    ok = False
                    break
                if e >= t1:
                    at1 = y - c * t1
            if e > t1 and y - c * e < floor2:
                ok = False
                break
            if nxt >= t2:
                break
            y += _jump(code, theta, rng)
            s = nxt
        alive[r] = ok
        x1[r] = at1 if t1 > 0.0 else 0.0
        x2[r] = y - c * t2
    return alive, x1, x2


@njit
def _ledger(horizon, code, rate, theta, rng):
    times = np.empty(16)
    jumps = np.empty(16)
    m = 0
    s = 0.0
    while True:
        s += -math.log(1.0 - rng.random()) / rate
        if s > horizon:
            break
        if m == times.shape[0]:
            t2 = np.empty(2 * m)
            t2[:m] = times
            times = t2
            j2 = np.empty(2 * m)
            j2[:m] = jumps
            jumps = j2
        times[m] = s
        jumps[m] = _jump(code, theta, rng)
        m += 1
    return times[:m].copy(), jumps[:m].copy()


# -- paths --------------------------------------------------------------------------

@dataclass(frozen=True)
class LevyPath:
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    drift: float
    horizon: float

    def value(self, t):
        """Right-continuous ``X_t`` (vectorised in ``t``)."""
        t = np.asarray(t, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        k = np.searchsorted(self.jump_times, t, side="right")
        return cum[k] - self.drift * t

    def minimum(self, a: float = 0.0, b: float | None = None) -> float:
        """Exact ``inf X`` over ``[a, b]``."""
        b = self.horizon if b is None else b
        if not 0 <= a <= b <= self.horizon:
            raise PreconditionError("window outside the simulated horizon")
        inside = self.jump_times[(self.jump_times > a) & (self.jump_times <= b)]
        cum = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        k = np.searchsorted(self.jump_times, inside, side="left")
        left_limits = cum[k] - self.drift * inside
        ends = self.value(np.array([a, b]))
        return float(min(ends.min(), left_limits.min() if inside.size else np.inf))


def simulate_path(levy: SpectrallyPositiveLevy, horizon: float, rng: np.random.Generator) -> LevyPath:
    times, jumps = _ledger(float(horizon), levy.code, levy.rate, levy.theta, rng)
    return LevyPath(times, jumps, levy.drift, float(horizon))


def sample_endpoint(levy: SpectrallyPositiveLevy, t: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` exact draws of ``X_t``."""
    counts = rng.poisson(levy.rate * t, size=n)
    if levy.jump_law == UNIT:
        y = counts.astype(float)
    else:
        y = rng.gamma(np.maximum(counts, 1), 1.0 / levy.theta) * (counts > 0)
    return y - levy.drift * t


def _killed(levy, n, t1, floor1, t2, floor2, rng):
    return _killed_paths(int(n), levy.code, levy.rate, levy.theta, levy.drift, float(t1), float(floor1),
                         float(t2), float(floor2), rng)


def _chunked(fn, n, rng):
    """Hit count and sample count of ``fn(count, rng)`` accumulated over fixed-size chunks."""
    hits = 0
    for _, _, count in chunks(int(n), CHUNK):
        hits += int(np.count_nonzero(fn(count, rng)))
    return hits


def _check_n(n):
    if n < MIN_N:
        raise PreconditionError(f"n must be at least {MIN_N}")


# -- estimators -------------------------------------------------------------------

def small_ball(levy: SpectrallyPositiveLevy, t: float, r: float, h: float, n: int, rng: np.random.Generator,
               floor: float = SMALL_BALL_FLOOR) -> MCEstimate:
    """``sqrt(t) P(r <= X_t <= r + h) / h``."""
    if t <= 0:
        raise PreconditionError("t must be positive")
    if h < floor:
        raise PreconditionError(f"window h={h} below the floor {floor}")
    _check_n(n)

    def hit(count, g):
        x = sample_endpoint(levy, t, count, g)
        return (x >= r) & (x <= r + h)

    return MCEstimate.bernoulli(_chunked(hit, n, rng), n).scaled(math.sqrt(t) / h)


def min_tail(levy: SpectrallyPositiveLevy, t: float, u: float, n: int, rng: np.random.Generator) -> MCEstimate:
    """``sqrt(t) P(inf_{[0,t]} X >= -u) / (u + 1)``."""
    if u < 0:
        raise PreconditionError("u must be nonnegative")
    if t <= 0:
        raise PreconditionError("t must be positive")
    _check_n(n)

    def hit(count, g):
        return _killed(levy, count, t, -u, t, -u, g)[0]

    return MCEstimate.bernoulli(_chunked(hit, n, rng), n).scaled(math.sqrt(t) / (u + 1.0))


def corridor_bound(t: float, f_val: float, g_val: float, c_prime: float = 1.0) -> float:
    """``c' ((f+1) ^ sqrt t) ((g+f+1)^2 ^ t) / t^{3/2}``."""
    return c_prime * min(f_val + 1.0, math.sqrt(t)) * min((g_val + f_val + 1.0) ** 2, t) / t ** 1.5


def window_bound(t: float, f_val: float, g_val: float, c: float = 1.0) -> float:
    """``c ((f+1) ^ sqrt t) ((g+f+1) ^ sqrt t) / t^{3/2}``, the bound for a width-``C0`` end window."""
    r = math.sqrt(t)
    return c * min(f_val + 1.0, r) * min(g_val + f_val + 1.0, r) / t ** 1.5


BOUNDS = {"corridor": corridor_bound, "window": window_bound}


def _check_corridor(f_val, g_val, f_floor):
    if f_val < f_floor:
        raise PreconditionError(f"f_val must be at least {f_floor}")
    if g_val < -f_val:
        raise PreconditionError("g_val < -f_val makes the event empty")


def corridor(levy: SpectrallyPositiveLevy, t: float, f_val: float, g_val: float, n: int,
             rng: np.random.Generator, f_floor: float = F_FLOOR) -> MCEstimate:
    """``t^{3/2} P(X_t <= g, inf_{[0,t]} X >= -f)``."""
    _check_corridor(f_val, g_val, f_floor)
    if t <= 0:
        raise PreconditionError("t must be positive")
    _check_n(n)

    def hit(count, g):
        alive, _, x = _killed(levy, count, t, -f_val, t, -f_val, g)
        return alive & (x <= g_val)

    return MCEstimate.bernoulli(_chunked(hit, n, rng), n).scaled(t ** 1.5)


def corridor_window(levy: SpectrallyPositiveLevy, t: float, f_val: float, g_val: float, n: int,
                    rng: np.random.Generator, width: float = SMALL_BALL_FLOOR,
                    f_floor: float = F_FLOOR) -> MCEstimate:
    """``t^{3/2} P(g <= X_t <= g + width, inf_{[0,t]} X >= -f)``."""
    _check_corridor(f_val, g_val, f_floor)
    if t <= 0:
        raise PreconditionError("t must be positive")
    _check_n(n)

    def hit(count, g):
        alive, _, x = _killed(levy, count, t, -f_val, t, -f_val, g)
        return alive & (x >= g_val) & (x <= g_val + width)

    return MCEstimate.bernoulli(_chunked(hit, n, rng), n).scaled(t ** 1.5)


def liminf_level(t: float, l_coef: float) -> float:
    return l_coef * math.log(t)


def liminf_event(levy: SpectrallyPositiveLevy, t: float, alpha: float, l_coef: float, C: float, n: int,
                 rng: np.random.Generator) -> MCEstimate:
    """``t^{3/2} P(inf_{[0,t]} X^a >= 0, inf_{[t,2t]} X^a >= f, f <= X^a_{2t} < f + C)``.

    ``X^a = X + alpha`` and ``f = l_coef log t``.
    """
    if alpha <= 0 or C <= 0:
        raise PreconditionError("alpha and C must be positive")
    if t <= 1:
        raise PreconditionError("t must exceed 1")
    f = liminf_level(t, l_coef)
    if f < alpha:
        raise PreconditionError(f"f(t)={f:.4g} below alpha={alpha}; the hypothesis f(t) >= alpha fails")
    _check_n(n)

    def hit(count, g):
        alive, _, x = _killed(levy, count, t, -alpha, 2.0 * t, f - alpha, g)
        xa = x + alpha
        return alive & (xa >= f) & (xa < f + C)

    return MCEstimate.bernoulli(_chunked(hit, n, rng), n).scaled(t ** 1.5)


# -- series over a grid ---------------------------------------------------------------

CHECKS = ("smallball", "mintail", "corridor", "liminf")


def _point(check, levy, t, params, n, seed, idx):
    rng = stream(seed, idx)
    if check == "smallball":
        return small_ball(levy, t, params["r"], params["h"], n, rng)
    if check == "mintail":
        return min_tail(levy, t, params["u"], n, rng)
    if check == "corridor":
        return corridor(levy, t, params["f"], params["g"], n, rng)
    if check == "window":
        return corridor_window(levy, t, params["f"], params["g"], n, rng)
    if check == "liminf":
        return liminf_event(levy, t, params["alpha"], params["l"], params["C"], n, rng)
    raise PreconditionError(f"unknown check {check!r}; expected one of {CHECKS}")


def unscale(check, t, params, est: MCEstimate) -> MCEstimate:
    """Undo the scaling factor, giving the raw probability."""
    if check == "smallball":
        return est.scaled(params["h"] / math.sqrt(t))
    if check == "mintail":
        return est.scaled((params["u"] + 1.0) / math.sqrt(t))
    return est.scaled(t ** -1.5)


@dataclass
class FluctuationSeries:
    check: str
    grid: np.ndarray
    params: dict
    scaled: list
    fit: ScalingFit | None

    @property
    def ratio(self) -> float:
        """max/min of the scaled estimates; inf if any is zero."""
        m = np.array([e.mean for e in self.scaled])
        return float(m.max() / m.min()) if m.min() > 0 else math.inf

    def rows(self):
        for t, e in zip(self.grid, self.scaled):
            raw = unscale(self.check, t, self.params, e)
            yield float(t), e.mean, e.stderr, raw.mean, raw.stderr, e.n

    def summary(self):
        out = {"check": self.check, "grid": self.grid.tolist(), "params": self.params,
               "scaled": [e.as_dict() for e in self.scaled], "max_over_min": self.ratio}
        if self.fit is not None:
            out["fit"] = self.fit.as_dict()
        return out


def series(check: str, levy: SpectrallyPositiveLevy, grid, params: dict, n: int, seed: int,
           workers: int | None = 1) -> FluctuationSeries:
    """Scaled estimates across ``grid``; grid point ``i`` uses stream ``i`` of ``seed``.

    The log-log fit is of the raw (unscaled) probabilities when the grid has
    at least 5 points and every estimate is positive.
    """
    grid = np.asarray(grid, dtype=float)
    tasks = [(check, levy, float(t), params, int(n), seed, i) for i, t in enumerate(grid)]
    scaled = fan_out(_point, tasks, workers)
    raw = [unscale(check, t, params, e) for t, e in zip(grid, scaled)]
    fit = None
    if grid.size >= 5 and all(e.mean > 0 for e in raw):
        fit = loglog_fit(grid, raw)
    return FluctuationSeries(check, grid, dict(params), scaled, fit)


@dataclass(frozen=True)
class CorridorCalibration:
    """Constant fitted on part of the grid and tested on the rest.

    A held-out point passes when its estimate is at most the calibrated bound
    plus ``z`` standard errors.
    """

    c_prime: float
    calibration_t: tuple
    validation_t: tuple
    validation_ok: tuple
    z: float

    @property
    def passed(self) -> bool:
        return all(self.validation_ok)

    def as_dict(self):
        return {"c_prime": self.c_prime, "calibration_t": list(self.calibration_t),
                "validation_t": list(self.validation_t), "validation_ok": list(self.validation_ok),
                "passed": self.passed, "z": self.z}


def calibrate_corridor(grid, estimates, f_val, g_val, calibration_idx, z: float = 3.0,
                       bound: str = "corridor") -> CorridorCalibration:
    """``c'`` is the largest ratio of scaled estimate to the ``c' = 1`` scaled bound on the calibration points.

    ``bound`` picks the corridor display or the end-window one; the two
    constants are calibrated independently.
    """
    if bound not in BOUNDS:
        raise PreconditionError(f"bound must be one of {tuple(BOUNDS)}")
    grid = np.asarray(grid, dtype=float)
    cal = sorted(set(int(i) for i in calibration_idx))
    val = [i for i in range(grid.size) if i not in cal]
    if not cal or not val:
        raise PreconditionError("calibration and validation sets must both be nonempty")
    shape = [BOUNDS[bound](t, f_val, g_val) * t ** 1.5 for t in grid]
    c_prime = max(estimates[i].mean / shape[i] for i in cal)
    ok = tuple(bool(estimates[i].mean <= c_prime * shape[i] + z * estimates[i].stderr) for i in val)
    return CorridorCalibration(float(c_prime), tuple(grid[cal].tolist()), tuple(grid[val].tolist()), ok, z)


# -- summability --------------------------------------------------------------------

# from n = 3 on, log n > 1 so every term is a real power of a number in (0, 1)
FIRST_INDEX = 3


def log_terms(alpha: float, k: int, n: np.ndarray) -> np.ndarray:
    """``log(n (1 - (log n)^{-k})^{n^alpha})``."""
    n = np.asarray(n, dtype=float)
    return np.log(n) + n ** alpha * np.log1p(-np.log(n) ** (-float(k)))


def _phi_y(alpha, k, y):
    # tail integrand after x = e^y is exp(-phi(y)); phi is convex
    return math.exp(alpha * y - k * math.log(y)) - 2.0 * y


def _phi_y_prime(alpha, k, y):
    return math.exp(alpha * y - k * math.log(y)) * (alpha - k / y) - 2.0


@dataclass(frozen=True)
class SummabilityResult:
    partial_sum: float
    tail_bound: float
    log_tail_bound: float
    first_index: int
    N: int
    decreasing_from: int | None

    def as_dict(self):
        return {"partial_sum": self.partial_sum, "tail_bound": self.tail_bound,
                "log_tail_bound": self.log_tail_bound, "first_index": self.first_index, "N": self.N,
                "decreasing_from": self.decreasing_from}


def summability_tail(alpha: float, k: int, N: int) -> float:
    """Log of a certified bound on ``sum_{n > N}`` of the terms.

    Since ``log1p(-x) <= -x`` each term is at most ``b(n) = n exp(-n^alpha (log n)^{-k})``.
    With ``x = e^y`` the integral of ``b`` is the integral of ``exp(-phi(y))``
    with ``phi(y) = e^{alpha y} y^{-k} - 2y``, whose second derivative is
    positive.  Once ``phi'(Y) > 0`` at ``Y = log N``, ``b`` is decreasing on
    ``[N, inf)`` so the sum is bounded by the integral, and convexity bounds
    the integral by ``exp(-phi(Y)) / phi'(Y)``.  Returns inf if ``phi'(Y) <= 0``.
    """
    y = math.log(N)
    d = _phi_y_prime(alpha, k, y)
    if d <= 0:
        return math.inf
    return -_phi_y(alpha, k, y) - math.log(d)


def summability_check(alpha: float, k: int, N: int, scan: tuple = (1_000, 1_000_000)) -> SummabilityResult:
    """Partial sum from the first real-valued index up to ``N`` plus a certified tail bound."""
    if alpha <= 0:
        raise PreconditionError("alpha must be positive")
    if k < 1 or int(k) != k:
        raise PreconditionError("k must be a positive integer")
    if N < 10:
        raise PreconditionError("N must be at least 10")
    n0 = FIRST_INDEX
    total = 0.0
    for _, start, count in chunks(N - n0 + 1, 1_000_000):
        n = np.arange(n0 + start, n0 + start + count, dtype=float)
        total += math.fsum(np.exp(log_terms(alpha, k, n)).tolist())
    log_tail = summability_tail(alpha, k, N)
    lo, hi = scan
    hi = min(hi, max(N, lo + 1))
    lt = log_terms(alpha, k, np.arange(lo, hi + 1, dtype=float))
    up = np.nonzero(np.diff(lt) >= 0)[0]
    decreasing_from = lo if up.size == 0 else int(lo + up[-1] + 1)
    return SummabilityResult(float(total), math.exp(log_tail) if log_tail < 700 else math.inf, float(log_tail),
                             n0, int(N), decreasing_from)

