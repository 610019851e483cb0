"""Experiments confronting simulations with the exact identities and asymptotics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine, tagged
from .errors import CensoringExcessive, CutoffTooCoarse, PreconditionError, TruncationActive
from .exponent import ExponentProfile, covariance_constants, phi, solve_pbar
from .model import DislocationModel, TruncationPolicy, make_policy
from .parallel import chunks, fan_out
from .seeding import derive_seed, stream
from .stats import MCEstimate, RegressionResult, fit_replicas, merge_moments, moments, two_sample_z

# stream families under one master seed
S_MT1_LHS = 1
S_MT1_RHS = 2
S_THEOREM = 3
S_GROWTH = 4
S_PAIR_T = 5
S_PAIR_COV = 6

MT1_CHUNK = 5000
PAIR_CHUNK = 20000


# -- Many-to-One ---------------------------------------------------------------

FUNCTIONALS = ("const", "terminal", "runmin")
RHS_METHODS = ("auto", "tilted", "counting")
COUNTING_TILT = -1.0
# min zeta >= -c t always, so the running-min level must sit below c t to bind
DEFAULT_LEVELS = {"const": 0.0, "terminal": 0.0, "runmin": 0.05}


@dataclass(frozen=True)
class FSpec:
    """Path functional: ``const`` (1), ``terminal`` (zeta_t <= level), ``runmin`` (min zeta >= -level)."""

    kind: str
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in FUNCTIONALS:
            raise PreconditionError(f"F must be one of {FUNCTIONALS}, got {self.kind!r}")

    def describe(self):
        return {"kind": self.kind, "level": self.level}


@dataclass
class MT1Result:
    lhs: MCEstimate
    rhs: MCEstimate
    zscore: float
    t: float
    functional: FSpec
    rhs_method: str = "tilted"
    chunks: list = field(default_factory=list)

    def summary(self):
        return {"lhs": self.lhs.as_dict(), "rhs": self.rhs.as_dict(), "zscore": self.zscore, "t": self.t,
                "F": self.functional.describe(), "rhs_method": self.rhs_method}


def _finite_policy(model):
    if not model.is_finite:
        raise TruncationActive(f"{model.kind} needs truncation; the identity check requires a finite model")
    return make_policy(model, 0.0)


def _mt1_lhs_chunk(model, profile, F, t, seed, idx, count):
    policy = make_policy(model, 0.0)
    sums = engine.particle_sums(model, policy, profile, t, count, F.level, F.level, stream(seed, idx))
    col = {"const": 0, "terminal": 1, "runmin": 2}[F.kind]
    return moments(sums[:, col])


def _apply_F(F, z, zmin, w):
    if F.kind == "terminal":
        return np.where(z <= F.level, w, 0.0)
    if F.kind == "runmin":
        return np.where(zmin >= -F.level, w, 0.0)
    return w


def _mt1_rhs_chunk(model, profile, F, t, method, seed, idx, count):
    policy = make_policy(model, 0.0)
    rng = stream(seed, idx)
    if method == "tilted":
        xi, zmin = tagged.tagged_endpoints(model, policy, t, tagged.Q, profile, count, rng)
        z = xi - profile.c * t
        return moments(_apply_F(F, z, zmin, np.exp((profile.pbar + 1.0) * z)))
    # tags drawn at the counting tilt, reweighted to Q by the likelihood ratio
    th = COUNTING_TILT
    xi, zmin = tagged.tagged_endpoints(model, policy, t, th, profile, count, rng)
    z = xi - profile.c * t
    log_lr = -(profile.pbar - th) * xi + (profile.phi_at_pbar - phi(model, th)) * t
    return moments(_apply_F(F, z, zmin, np.exp((profile.pbar + 1.0) * z + log_lr)))


def resolve_rhs_method(method, F):
    """``auto`` keeps plain Q sampling only where the weight is bounded."""
    if method not in RHS_METHODS:
        raise PreconditionError(f"rhs method must be one of {RHS_METHODS}, got {method!r}")
    if method == "auto":
        return "tilted" if F.kind == "terminal" else "counting"
    return method


def mt1_check(model: DislocationModel, F: FSpec, t: float, n_lhs: int, n_rhs: int, seed: int,
              workers: int | None = 1, profile: ExponentProfile | None = None,
              rhs_method: str = "auto") -> MT1Result:
    """Particle-sum expectation vs its tilted single-tag representation.

    ``rhs_method="tilted"`` averages ``exp((1+pbar) zeta_t) F`` over Q-tagged
    paths.  That weight is unbounded for ``const`` and ``runmin`` and its
    variance is infinite or astronomically large, so ``"counting"`` estimates
    the same Q expectation by importance sampling from the tilt ``-1`` law.
    """
    _finite_policy(model)
    if t < 0:
        raise PreconditionError("t must be nonnegative")
    method = resolve_rhs_method(rhs_method, F)
    profile = profile or solve_pbar(model)
    lseed = derive_seed(seed, S_MT1_LHS)
    rseed = derive_seed(seed, S_MT1_RHS)
    lhs_tasks = [(model, profile, F, t, lseed, i, n) for i, _, n in chunks(n_lhs, MT1_CHUNK)]
    rhs_tasks = [(model, profile, F, t, method, rseed, i, n) for i, _, n in chunks(n_rhs, MT1_CHUNK)]
    lparts = fan_out(_mt1_lhs_chunk, lhs_tasks, workers)
    rparts = fan_out(_mt1_rhs_chunk, rhs_tasks, workers)
    lhs = MCEstimate.from_moments(*merge_moments(lparts))
    rhs = MCEstimate.from_moments(*merge_moments(rparts))
    raw = [("lhs", i, *p) for i, p in enumerate(lparts)] + [("rhs", i, *p) for i, p in enumerate(rparts)]
    return MT1Result(lhs, rhs, two_sample_z(lhs, rhs), float(t), F, method, raw)


# -- largest fragment -------------------------------------------------------------

@dataclass
class TheoremResult:
    regression: RegressionResult
    ratio_mean: np.ndarray
    ratio_stderr: np.ndarray
    neglog_max: np.ndarray  # replicas x grid
    grid: np.ndarray
    peak_active: int

    def summary(self):
        return {"regression": self.regression.as_dict(), "ratio_mean": self.ratio_mean.tolist(),
                "ratio_stderr": self.ratio_stderr.tolist(), "grid": self.grid.tolist(),
                "peak_active": self.peak_active}


def _theorem_chunk(model, policy, profile, grid, margin, seed, start, count):
    rows = []
    peak = 0
    for r in range(start, start + count):
        ts = engine.run(model, policy, float(grid[-1]), grid, profile, margin, stream(seed, r))
        # with any fragment left the maximum is exact, since pruned lineages stay below the cutoff
        if not np.all(np.isfinite(ts.min_neglog)):
            raise CutoffTooCoarse(f"replica {r}: every fragment fell below the prune cutoff; "
                                  "increase prune_margin")
        rows.append(ts.min_neglog)
        peak = max(peak, ts.peak_active)
    return np.array(rows), peak


def ratio_series(neglog_max, grid, c):
    grid = np.asarray(grid, dtype=float)
    return (neglog_max - c * grid) / np.log(grid)


def theorem_from_neglog(neglog_max, grid, profile, peak=0) -> TheoremResult:
    grid = np.asarray(grid, dtype=float)
    fit = fit_replicas(grid, neglog_max, with_logt=True)
    ratio = ratio_series(neglog_max, grid, profile.c)
    se = ratio.std(axis=0, ddof=1) / math.sqrt(ratio.shape[0])
    return TheoremResult(fit, ratio.mean(axis=0), se, neglog_max, grid, peak)


def theorem_experiment(model: DislocationModel, policy: TruncationPolicy, profile: ExponentProfile, t_grid,
                       replicas: int, prune_margin: float | None, seed: int, workers: int | None = 1,
                       chunk: int = 10) -> TheoremResult:
    """Regress ``-log(max fragment)`` on ``(t, log t, 1)`` across replicas."""
    grid = np.asarray(sorted(t_grid), dtype=float)
    if np.unique(grid).size < 4:
        raise PreconditionError("regression grid needs at least 4 distinct times")
    if replicas < 100:
        raise PreconditionError("theorem experiment needs at least 100 replicas")
    if np.any(grid <= 1.0):
        raise PreconditionError("grid times must exceed 1 so that log t > 0")
    if prune_margin is None:
        prune_margin = engine.default_margin(grid[-1])
    s = derive_seed(seed, S_THEOREM)
    tasks = [(model, policy, profile, grid, prune_margin, s, start, n) for _, start, n in chunks(replicas, chunk)]
    parts = fan_out(_theorem_chunk, tasks, workers)
    neglog = np.vstack([p[0] for p in parts])
    return theorem_from_neglog(neglog, grid, profile, max(p[1] for p in parts))


# -- near-maximal growth ------------------------------------------------------------

@dataclass
class GrowthResult:
    regression: RegressionResult
    c_prime: float
    counts: np.ndarray
    grid: np.ndarray
    zero_counts: int

    def summary(self):
        return {"rho": self.regression.coef_t, "rho_stderr": self.regression.stderr_t,
                "regression": self.regression.as_dict(), "c_prime": self.c_prime, "zero_counts": self.zero_counts,
                "mean_log_count": np.log(np.maximum(self.counts, 1)).mean(axis=0).tolist()}


def _growth_chunk(model, policy, profile, grid, margin, c_prime, seed, start, count):
    rows = []
    for r in range(start, start + count):
        ts = engine.run(model, policy, float(grid[-1]), grid, profile, margin, stream(seed, r), c_prime=c_prime)
        rows.append(ts.near_max_count)
    return np.array(rows)


def growth_margin(profile, delta, horizon):
    """Smallest safe prune margin for counting at ``c + delta`` up to ``horizon``, plus slack."""
    return delta + 1.0 / horizon + 0.01


def growth_from_counts(counts, grid, c_prime) -> GrowthResult:
    counts = np.asarray(counts)
    y = np.log(np.maximum(counts, 1))
    fit = fit_replicas(grid, y, with_logt=False)
    return GrowthResult(fit, c_prime, counts, np.asarray(grid, dtype=float), int(np.count_nonzero(counts == 0)))


def growth_rate(model: DislocationModel, policy: TruncationPolicy, profile: ExponentProfile, delta: float, t_grid,
                replicas: int, seed: int, workers: int | None = 1, prune_margin: float | None = None,
                chunk: int = 10) -> GrowthResult:
    """Exponential growth rate of the number of fragments with ``neglog <= (c + delta) t + 1``."""
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    grid = np.asarray(sorted(t_grid), dtype=float)
    c_prime = profile.c + delta
    margin = prune_margin if prune_margin is not None else growth_margin(profile, delta, grid[-1])
    s = derive_seed(seed, S_GROWTH)
    tasks = [(model, policy, profile, grid, margin, c_prime, s, start, n)
             for _, start, n in chunks(replicas, chunk)]
    counts = np.vstack(fan_out(_growth_chunk, tasks, workers))
    return growth_from_counts(counts, grid, c_prime)


# -- pair correlations ---------------------------------------------------------------

@dataclass
class CorrelationResult:
    ET: MCEstimate
    cov_pred_1: float
    cov_pred_2: float
    direct_cov: MCEstimate
    censored_fraction: float
    cov_time: float
    split_times: np.ndarray = field(repr=False, default=None)

    @property
    def closer(self) -> int:
        return 1 if abs(self.direct_cov.mean - self.cov_pred_1) <= abs(self.direct_cov.mean - self.cov_pred_2) else 2

    @property
    def distinguishes(self) -> bool:
        """Distances to the two candidates differ by more than 3 standard errors."""
        d1 = abs(self.direct_cov.mean - self.cov_pred_1)
        d2 = abs(self.direct_cov.mean - self.cov_pred_2)
        return abs(d1 - d2) > 3.0 * self.direct_cov.stderr

    def summary(self):
        se = self.direct_cov.stderr
        return {"ET": self.ET.as_dict(), "cov_pred_1": self.cov_pred_1, "cov_pred_2": self.cov_pred_2,
                "direct_cov": self.direct_cov.as_dict(), "cov_time": self.cov_time,
                "z_pred_1": (self.direct_cov.mean - self.cov_pred_1) / se if se else None,
                "z_pred_2": (self.direct_cov.mean - self.cov_pred_2) / se if se else None,
                "closer": self.closer, "distinguishes": self.distinguishes,
                "censored_fraction": self.censored_fraction}


def _pair_chunk(model, horizon, seed, idx, count):
    policy = make_policy(model, 0.0)
    t, _, cz = tagged.simulate_pairs(model, policy, horizon, count, stream(seed, idx))
    return t, cz


def _pair_cov_chunk(model, t, seed, idx, count):
    policy = make_policy(model, 0.0)
    return tagged.pair_endpoints(model, policy, t, count, stream(seed, idx))


def split_time_mean(model, t, n_pairs, seed, workers=1):
    """``E[t ^ T]`` with censored pairs contributing ``t``; returns (estimate, censored fraction, times)."""
    s = derive_seed(seed, S_PAIR_T)
    parts = fan_out(_pair_chunk, [(model, t, s, i, n) for i, _, n in chunks(n_pairs, PAIR_CHUNK)], workers)
    times = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    return MCEstimate.from_samples(times), float(cens.mean()), times


def direct_covariance(model, t, n, seed, workers=1) -> MCEstimate:
    """Cov(log I^x(t), log I^y(t)) for two independent uniform tags."""
    s = derive_seed(seed, S_PAIR_COV)
    parts = fan_out(_pair_cov_chunk, [(model, t, s, i, k) for i, _, k in chunks(n, PAIR_CHUNK)], workers)
    xy = np.vstack(parts)
    x, y = xy[:, 0], xy[:, 1]
    prod = (x - x.mean()) * (y - y.mean())
    est = MCEstimate.from_samples(prod)
    k = x.size
    return MCEstimate(est.mean * k / (k - 1), est.stderr, k)


def correlation_experiment(model: DislocationModel, profile: ExponentProfile, t: float, n_pairs: int, seed: int,
                           workers: int | None = 1, cov_time: float = 10.0, n_cov: int | None = None,
                           max_censored: float = 0.01) -> CorrelationResult:
    _finite_policy(model)
    ET, cens, times = split_time_mean(model, t, n_pairs, seed, workers)
    if cens > max_censored:
        raise CensoringExcessive(f"{cens:.2%} of pairs still together at t={t}; increase t")
    k0, k1 = covariance_constants(model)
    direct = direct_covariance(model, cov_time, n_cov or n_pairs, seed, workers)
    return CorrelationResult(ET, ET.mean * k0, ET.mean * k1, direct, cens, cov_time, times)
