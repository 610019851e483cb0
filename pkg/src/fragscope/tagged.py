"""Tagged fragments under P and under the tilted measure Q, and tagged pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .errors import OutOfHorizon, PreconditionError
from .exponent import ExponentProfile
from .model import DislocationModel, TruncationPolicy, draw_partition, sampler_tables

P = "P"
Q = "Q"


@njit
def _pick_block(bs, bl, k, rng):
    """Size-biased block index."""
    u = rng.random()
    acc = 0.0
    for i in range(k - 1):
        acc += bs[i]
        if u < acc:
            return i
    return k - 1


@njit
def _next_jump(tilt, kmax, code, params, cdf, sizes, nblocks, rng, bs, bl):
    """One candidate dislocation seen by the tag; returns the jump or -1 if thinned out.

    The accepted jumps have block weights ``u_i ** (1 + tilt)``.  For
    ``tilt >= 0`` candidates arrive at the base rate, the block is size-biased
    and kept with probability ``u_i ** tilt``.  For ``-1 <= tilt < 0``
    candidates arrive at ``kmax`` times the base rate, the block is uniform and
    kept with probability ``k u_i ** (1 + tilt) / kmax``.
    """
    k = draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
    if tilt >= 0.0:
        i = _pick_block(bs, bl, k, rng)
        if tilt > 0.0 and rng.random() >= math.exp(-tilt * bl[i]):
            return -1.0
        return bl[i]
    i = int(rng.random() * k)
    if i >= k:
        i = k - 1
    if rng.random() >= k * math.exp(-(1.0 + tilt) * bl[i]) / kmax:
        return -1.0
    return bl[i]


def _candidate_rate(rate, tilt, kmax):
    return rate * kmax if tilt < 0 else rate


@njit
def _tagged_path(horizon, rate, tilt, kmax, code, params, cdf, sizes, nblocks, rng):
    width = sizes.shape[1] if sizes.shape[1] > 2 else 2
    bs = np.empty(width)
    bl = np.empty(width)
    times = np.empty(16)
    jumps = np.empty(16)
    m = 0
    s = 0.0
    while True:
        s += -math.log(1.0 - rng.random()) / rate
        if s > horizon:
            break
        j = _next_jump(tilt, kmax, code, params, cdf, sizes, nblocks, rng, bs, bl)
        if j < 0.0:
            continue
        if m == times.shape[0]:
            t2 = np.empty(2 * m)
            t2[:m] = times
            times = t2
            j2 = np.empty(2 * m)
            j2[:m] = jumps
            jumps = j2
        times[m] = s
        jumps[m] = j
        m += 1
    return times[:m].copy(), jumps[:m].copy()


@njit
def _tagged_batch(n, t, rate, tilt, kmax, c, code, params, cdf, sizes, nblocks, rng):
    """Per path: ``xi_t`` and the running minimum of ``zeta`` over ``[0, t]``."""
    width = sizes.shape[1] if sizes.shape[1] > 2 else 2
    bs = np.empty(width)
    bl = np.empty(width)
    xi = np.zeros(n)
    zmin = np.zeros(n)
    for r in range(n):
        x = 0.0
        mn = 0.0
        s = 0.0
        while True:
            s += -math.log(1.0 - rng.random()) / rate
            if s > t:
                break
            j = _next_jump(tilt, kmax, code, params, cdf, sizes, nblocks, rng, bs, bl)
            if j < 0.0:
                continue
            pre = x - c * s
            if pre < mn:
                mn = pre
            x += j
        end = x - c * t
        if end < mn:
            mn = end
        xi[r] = x
        zmin[r] = mn
    return xi, zmin


@dataclass(frozen=True)
class TaggedPath:
    """Piecewise-constant subordinator path given by its jump ledger."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    measure: str
    horizon: float
    model: DislocationModel | None = None

    def xi(self, t: float) -> float:
        self._check(t)
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return float(np.sum(self.jump_sizes[:k]))

    def _check(self, t):
        if t < 0 or t > self.horizon:
            raise OutOfHorizon(f"t={t} outside [0, {self.horizon}]")

    def rows(self):
        return zip(self.jump_times.tolist(), self.jump_sizes.tolist())


def simulate_tagged(model: DislocationModel, policy: TruncationPolicy, horizon: float, measure: str,
                    profile: ExponentProfile | None, rng: np.random.Generator) -> TaggedPath:
    tilt = _tilt(measure, profile)
    tables = sampler_tables(model, policy)
    kmax = float(model.max_blocks)
    rate = _candidate_rate(tables.rate, tilt, kmax)
    times, jumps = _tagged_path(float(horizon), rate, tilt, kmax, *tables.args(), rng)
    return TaggedPath(times, jumps, measure, float(horizon), model)


def _tilt(measure, profile):
    if isinstance(measure, (int, float)) and not isinstance(measure, bool):
        if measure < -1:
            raise PreconditionError("tilts below -1 are not supported")
        return float(measure)
    if measure == P:
        return 0.0
    if measure == Q:
        if profile is None:
            raise PreconditionError("measure Q needs a solved profile")
        return profile.pbar
    raise PreconditionError(f"measure must be 'P' or 'Q', got {measure!r}")


def tagged_endpoints(model, policy, t, measure, profile, n, rng):
    """Batch of ``(xi_t, running_min(zeta)_t)`` for ``n`` independent tags.

    ``measure`` is ``"P"``, ``"Q"`` or a numeric tilt ``>= -1`` (the law with
    Laplace exponent ``q -> phi(q + tilt) - phi(tilt)``).  ``c`` is 0 when no
    profile is supplied.
    """
    tilt = _tilt(measure, profile)
    tables = sampler_tables(model, policy)
    kmax = float(model.max_blocks)
    c = profile.c if profile is not None else 0.0
    rate = _candidate_rate(tables.rate, tilt, kmax)
    return _tagged_batch(int(n), float(t), rate, tilt, kmax, c, *tables.args(), rng)


def zeta(path: TaggedPath, t: float, profile: ExponentProfile) -> float:
    return path.xi(t) - profile.c * t


def running_min(path: TaggedPath, t: float, profile: ExponentProfile) -> float:
    """Exact infimum of ``zeta`` on ``[0, t]``: at ``t`` or just before a jump."""
    path._check(t)
    c = profile.c
    k = int(np.searchsorted(path.jump_times, t, side="right"))
    before = np.concatenate(([0.0], np.cumsum(path.jump_sizes[:k])[:-1])) if k else np.zeros(0)
    pre = before - c * path.jump_times[:k]
    end = zeta(path, t, profile)
    return float(min(0.0, end, pre.min() if k else 0.0))


# -- pairs -------------------------------------------------------------------

@dataclass(frozen=True)
class PairSplitSample:
    split_time: float
    common_neglog_at_split: float
    censored: bool


@njit
def _pair_batch(n, horizon, rate, code, params, cdf, sizes, nblocks, rng):
    width = sizes.shape[1] if sizes.shape[1] > 2 else 2
    bs = np.empty(width)
    bl = np.empty(width)
    out_t = np.empty(n)
    out_l = np.empty(n)
    cens = np.zeros(n, dtype=np.bool_)
    for r in range(n):
        s = 0.0
        x = 0.0
        while True:
            s += -math.log(1.0 - rng.random()) / rate
            if s > horizon:
                out_t[r] = horizon
                out_l[r] = x
                cens[r] = True
                break
            k = draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
            i = _pick_block(bs, bl, k, rng)
            j = _pick_block(bs, bl, k, rng)
            if i != j:
                out_t[r] = s
                out_l[r] = x
                break
            x += bl[i]
    return out_t, out_l, cens


@njit
def _pair_endpoints(n, t, rate, code, params, cdf, sizes, nblocks, rng):
    """``(xi^x_t, xi^y_t, T)`` for two uniform tags, T censored at ``t``."""
    width = sizes.shape[1] if sizes.shape[1] > 2 else 2
    bs = np.empty(width)
    bl = np.empty(width)
    out = np.empty((n, 3))
    for r in range(n):
        s = 0.0
        x = 0.0
        y = 0.0
        together = True
        split = t
        while True:
            s += -math.log(1.0 - rng.random()) / rate
            if s > t:
                break
            k = draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
            i = _pick_block(bs, bl, k, rng)
            j = _pick_block(bs, bl, k, rng)
            x += bl[i]
            y += bl[j]
            if i != j:
                together = False
                split = s
                break
        if not together:
            # independent tags in two different fragments from here on
            for side in range(2):
                u = split
                acc = 0.0
                while True:
                    u += -math.log(1.0 - rng.random()) / rate
                    if u > t:
                        break
                    k = draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
                    acc += bl[_pick_block(bs, bl, k, rng)]
                if side == 0:
                    x += acc
                else:
                    y += acc
        out[r, 0] = x
        out[r, 1] = y
        out[r, 2] = split
    return out


def simulate_pairs(model, policy, horizon, n, rng):
    """Batch of split times; returns ``(split_time, common_neglog, censored)`` arrays."""
    tables = sampler_tables(model, policy)
    return _pair_batch(int(n), float(horizon), tables.rate, *tables.args(), rng)


def simulate_pair(model: DislocationModel, policy: TruncationPolicy, horizon: float,
                  rng: np.random.Generator) -> PairSplitSample:
    t, l, cz = simulate_pairs(model, policy, horizon, 1, rng)
    return PairSplitSample(float(t[0]), float(l[0]), bool(cz[0]))


def pair_endpoints(model, policy, t, n, rng):
    tables = sampler_tables(model, policy)
    return _pair_endpoints(int(n), float(t), tables.rate, *tables.args(), rng)
