"""Monte Carlo estimates and least-squares fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n: int

    @classmethod
    def from_samples(cls, x) -> "MCEstimate":
        x = np.asarray(x, dtype=float)
        if x.size < 2:
            raise PreconditionError("an estimate needs at least two samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size))

    @classmethod
    def from_moments(cls, n, total, total_sq) -> "MCEstimate":
        """From count, sum and sum of squares (chunk reductions add these up)."""
        if n < 2:
            raise PreconditionError("an estimate needs at least two samples")
        mean = total / n
        var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
        return cls(float(mean), float(math.sqrt(var / n)), int(n))

    @classmethod
    def bernoulli(cls, hits, n) -> "MCEstimate":
        return cls.from_moments(n, float(hits), float(hits))

    def scaled(self, factor: float) -> "MCEstimate":
        return MCEstimate(self.mean * factor, self.stderr * abs(factor), self.n)

    def z(self, target: float) -> float:
        return zscore(self.mean - target, self.stderr)

    def as_dict(self):
        return asdict(self)


def zscore(diff, se):
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


def two_sample_z(a: MCEstimate, b: MCEstimate) -> float:
    return zscore(a.mean - b.mean, math.hypot(a.stderr, b.stderr))


def moments(x):
    x = np.asarray(x, dtype=float)
    return x.size, math.fsum(x.tolist()), math.fsum((x * x).tolist())


def merge_moments(parts):
    n = sum(p[0] for p in parts)
    return n, math.fsum(p[1] for p in parts), math.fsum(p[2] for p in parts)


@dataclass(frozen=True)
class RegressionResult:
    """Replica-averaged least-squares fit on the design ``(t, log t, 1)``.

    Each replica is fitted separately; coefficients are replica means and
    standard errors come from their spread, which respects the correlation of
    one replica's values across the grid.  ``with_logt`` is False for the
    two-term design ``(t, 1)``, in which case the log-t fields are zero.
    """

    coef_t: float
    coef_logt: float
    intercept: float
    stderr_t: float
    stderr_logt: float
    grid: tuple
    replicas: int
    with_logt: bool = True

    def as_dict(self):
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


def design(grid, with_logt=True):
    t = np.asarray(grid, dtype=float)
    cols = [t, np.log(t), np.ones_like(t)] if with_logt else [t, np.ones_like(t)]
    return np.column_stack(cols)


def fit_replicas(grid, y, with_logt=True) -> RegressionResult:
    """Fit every row of ``y`` (replicas x grid) and average the coefficients."""
    grid = np.asarray(grid, dtype=float)
    if np.unique(grid).size < 4:
        raise PreconditionError("regression grid needs at least 4 distinct times")
    if with_logt and np.any(grid <= 0):
        raise PreconditionError("log-t design needs positive times")
    y = np.atleast_2d(np.asarray(y, dtype=float))
    X = design(grid, with_logt)
    coefs = np.linalg.lstsq(X, y.T, rcond=None)[0].T
    r = y.shape[0]
    mean = coefs.mean(axis=0)
    se = coefs.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros(coefs.shape[1])
    if with_logt:
        return RegressionResult(float(mean[0]), float(mean[1]), float(mean[2]), float(se[0]), float(se[1]),
                                tuple(grid.tolist()), r, True)
    return RegressionResult(float(mean[0]), 0.0, float(mean[1]), float(se[0]), 0.0, tuple(grid.tolist()), r, False)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    grid: tuple
    per_point: tuple

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "grid": list(self.grid),
                "per_point": [list(p) for p in self.per_point]}


def loglog_fit(grid, estimates) -> ScalingFit:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 5:
        raise PreconditionError("scaling fit needs at least 5 grid points")
    means = np.array([e.mean for e in estimates])
    if np.any(means <= 0):
        raise PreconditionError("log-log fit needs positive estimates")
    slope, intercept = np.polyfit(np.log(grid), np.log(means), 1)
    pts = tuple((float(t), e.mean, e.stderr) for t, e in zip(grid, estimates))
    return ScalingFit(float(slope), float(intercept), tuple(grid.tolist()), pts)
