"""Dislocation measures, truncation and partition sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._jit import njit
from .errors import DegenerateTruncation, InvalidModel

BINARY_UNIFORM = "binary-uniform"
TERNARY = "ternary-deterministic"
BINARY_POWERLAW = "binary-powerlaw"
CUSTOM_FINITE = "custom-finite"

KINDS = (BINARY_UNIFORM, TERNARY, BINARY_POWERLAW, CUSTOM_FINITE)
_ALIASES = {"ternary": TERNARY, "uniform": BINARY_UNIFORM, "powerlaw": BINARY_POWERLAW, "custom": CUSTOM_FINITE}

# sampler kind codes understood by the kernels
K_ATOMS = 0
K_UNIFORM = 1
K_POWERLAW = 2


@dataclass(frozen=True)
class PartitionSample:
    sizes: tuple

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise InvalidModel("a partition needs at least two blocks")
        if any(not 0.0 < s < 1.0 for s in self.sizes):
            raise InvalidModel(f"block sizes must lie in (0,1): {self.sizes}")
        if abs(math.fsum(self.sizes) - 1.0) > 1e-12:
            raise InvalidModel(f"block sizes must sum to 1: {self.sizes}")

    @property
    def largest(self) -> float:
        return self.sizes[0]


def _check_partition(sizes: Sequence[float]) -> tuple:
    sizes = tuple(sorted((float(s) for s in sizes), reverse=True))
    PartitionSample(sizes)
    return sizes


@dataclass(frozen=True)
class DislocationModel:
    """A dislocation measure on interval partitions.

    Built with the ``binary_uniform``, ``ternary``, ``binary_powerlaw`` and
    ``custom`` constructors.  ``atoms`` is only populated for finite atomic
    measures and holds ``(rate, sizes)`` pairs.
    """

    kind: str
    a: float | None = None
    atoms: tuple = field(default=())

    @classmethod
    def binary_uniform(cls) -> "DislocationModel":
        return cls(BINARY_UNIFORM)

    @classmethod
    def ternary(cls) -> "DislocationModel":
        return cls(TERNARY, atoms=((1.0, (1 / 3, 1 / 3, 1 / 3)),))

    @classmethod
    def binary_powerlaw(cls, a: float) -> "DislocationModel":
        a = float(a)
        if not 1.0 < a < 2.0:
            raise InvalidModel(f"binary-powerlaw exponent must lie in (1, 2), got {a}")
        return cls(BINARY_POWERLAW, a=a)

    @classmethod
    def custom(cls, atoms) -> "DislocationModel":
        parsed = []
        for entry in atoms:
            try:
                rate, sizes = entry
            except (TypeError, ValueError):
                raise InvalidModel(f"atom must be [rate, [sizes...]], got {entry!r}") from None
            rate = float(rate)
            if not rate > 0 or not math.isfinite(rate):
                raise InvalidModel(f"atom rate must be positive and finite, got {rate}")
            parsed.append((rate, _check_partition(sizes)))
        if not parsed:
            raise InvalidModel("custom-finite model needs at least one atom")
        return cls(CUSTOM_FINITE, atoms=tuple(parsed))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidModel(f"unknown model kind {self.kind!r}")

    @property
    def is_finite(self) -> bool:
        return self.kind != BINARY_POWERLAW

    @property
    def total_mass(self) -> float:
        if self.kind == BINARY_UNIFORM:
            return 1.0
        if self.kind == BINARY_POWERLAW:
            return math.inf
        return math.fsum(r for r, _ in self.atoms)

    @property
    def is_atomic(self) -> bool:
        return self.kind in (TERNARY, CUSTOM_FINITE)

    @property
    def max_blocks(self) -> int:
        if self.is_atomic:
            return max(len(s) for _, s in self.atoms)
        return 2

    def scaled(self, factor: float) -> "DislocationModel":
        """Same partitions, every rate multiplied by ``factor`` (atomic models only)."""
        if not self.is_atomic:
            raise InvalidModel("only atomic models can be rescaled")
        return DislocationModel.custom([(r * factor, s) for r, s in self.atoms])

    def as_atomic(self) -> "DislocationModel":
        """Generic atom-list view (used to force the non-closed-form path)."""
        if not self.is_atomic:
            raise InvalidModel(f"{self.kind} is not atomic")
        return DislocationModel.custom(self.atoms)

    def integrability(self) -> float:
        """Value of the integral of (1 - |u*|) against the measure."""
        if self.kind == BINARY_UNIFORM:
            return 0.25
        if self.kind == BINARY_POWERLAW:
            a = self.a
            # int_0^{1/2} s^{1-a} ds + int_{1/2}^1 (1-s) s^{-a} ds
            left = 0.5 ** (2 - a) / (2 - a)
            right = (1 - 0.5 ** (1 - a)) / (1 - a) - (1 - 0.5 ** (2 - a)) / (2 - a)
            return left + right
        return math.fsum(r * (1 - s[0]) for r, s in self.atoms)

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.a is not None:
            out["a"] = self.a
        if self.kind == CUSTOM_FINITE:
            out["atoms"] = [[r, list(s)] for r, s in self.atoms]
        return out


def model_from_spec(spec) -> DislocationModel:
    """Build a model from a CLI string (``binary-powerlaw:1.5``) or config dict."""
    if isinstance(spec, DislocationModel):
        return spec
    if isinstance(spec, str):
        kind, _, arg = spec.partition(":")
        if "(" in kind and kind.endswith(")"):
            kind, arg = kind[:-1].split("(", 1)
        spec = {"kind": kind}
        if arg:
            spec["a"] = float(arg)
    kind = _ALIASES.get(spec.get("kind"), spec.get("kind"))
    if kind == BINARY_UNIFORM:
        return DislocationModel.binary_uniform()
    if kind == TERNARY:
        return DislocationModel.ternary()
    if kind == BINARY_POWERLAW:
        if spec.get("a") is None:
            raise InvalidModel("binary-powerlaw needs parameter a")
        return DislocationModel.binary_powerlaw(spec["a"])
    if kind == CUSTOM_FINITE:
        return DislocationModel.custom(spec.get("atoms") or [])
    raise InvalidModel(f"unknown model kind {spec.get('kind')!r}")


@dataclass(frozen=True)
class TruncationPolicy:
    """Drop dislocations with ``1 - |u*| <= epsilon``.

    ``epsilon = 0`` means no truncation and is only valid for finite models.
    """

    epsilon: float
    effective_rate: float

    def __repr__(self):
        return f"TruncationPolicy(epsilon={self.epsilon!r}, effective_rate={self.effective_rate!r})"


def truncated_rate(model: DislocationModel, epsilon: float) -> float:
    """Mass of the region ``{1 - |u*| > epsilon}``."""
    epsilon = float(epsilon)
    if not 0.0 <= epsilon < 0.5:
        raise InvalidModel(f"epsilon must lie in [0, 1/2), got {epsilon}")
    if model.kind == BINARY_UNIFORM:
        return 1.0 - 2.0 * epsilon
    if model.kind == BINARY_POWERLAW:
        if epsilon == 0.0:
            return math.inf
        a = model.a
        return (epsilon ** (1 - a) - (1 - epsilon) ** (1 - a)) / (a - 1)
    return math.fsum(r for r, s in model.atoms if 1.0 - s[0] > epsilon)


def make_policy(model: DislocationModel, epsilon: float = 0.0) -> TruncationPolicy:
    rate = truncated_rate(model, epsilon)
    if not math.isfinite(rate):
        raise DegenerateTruncation(f"{model.kind} has infinite activity; choose epsilon > 0")
    if rate <= 0.0:
        raise DegenerateTruncation(f"no dislocations survive truncation at epsilon={epsilon}")
    return TruncationPolicy(float(epsilon), rate)


@dataclass(frozen=True)
class SamplerTables:
    """Flat arrays describing the normalised truncated jump law for the kernels."""

    code: int
    params: np.ndarray
    cdf: np.ndarray
    sizes: np.ndarray
    nblocks: np.ndarray
    rate: float

    def args(self):
        return self.code, self.params, self.cdf, self.sizes, self.nblocks


def sampler_tables(model: DislocationModel, policy: TruncationPolicy) -> SamplerTables:
    eps = policy.epsilon
    empty2 = np.zeros((1, 1))
    empty1 = np.zeros(1)
    nb0 = np.zeros(1, dtype=np.int64)
    if model.kind == BINARY_UNIFORM:
        params = np.array([eps, 1.0 - eps, 0.0])
        return SamplerTables(K_UNIFORM, params, empty1, empty2, nb0, policy.effective_rate)
    if model.kind == BINARY_POWERLAW:
        a = model.a
        params = np.array([1.0 - a, eps ** (1 - a), (1 - eps) ** (1 - a)])
        return SamplerTables(K_POWERLAW, params, empty1, empty2, nb0, policy.effective_rate)
    kept = [(r, s) for r, s in model.atoms if 1.0 - s[0] > eps]
    if not kept:
        raise DegenerateTruncation(f"no atoms survive truncation at epsilon={eps}")
    width = max(len(s) for _, s in kept)
    sizes = np.zeros((len(kept), width))
    nb = np.zeros(len(kept), dtype=np.int64)
    for i, (_, s) in enumerate(kept):
        sizes[i, : len(s)] = s
        nb[i] = len(s)
    rates = np.array([r for r, _ in kept])
    cdf = np.cumsum(rates) / rates.sum()
    cdf[-1] = 1.0
    return SamplerTables(K_ATOMS, np.zeros(3), cdf, sizes, nb, policy.effective_rate)


@njit
def draw_partition(code, params, cdf, sizes, nblocks, rng, out_size, out_neglog):
    """Fill ``out_size``/``out_neglog`` with one partition; return the block count."""
    if code == K_ATOMS:
        u = rng.random()
        j = 0
        while j < cdf.shape[0] - 1 and cdf[j] <= u:
            j += 1
        k = nblocks[j]
        for i in range(k):
            out_size[i] = sizes[j, i]
            out_neglog[i] = -math.log(sizes[j, i])
        return k
    if code == K_UNIFORM:
        lo = params[0]
        hi = params[1]
        s = 0.0
        while s <= 0.0 or s >= 1.0:
            s = lo + (hi - lo) * rng.random()
    else:
        # inverse CDF of s^{-a} on (eps, 1-eps), params = (1-a, eps^{1-a}, (1-eps)^{1-a})
        s = 0.0
        while s <= 0.0 or s >= 1.0:
            f = rng.random()
            top = params[1] - f * (params[1] - params[2])
            s = math.exp(math.log(top) / params[0])
    out_size[0] = s
    out_size[1] = 1.0 - s
    out_neglog[0] = -math.log(s)
    out_neglog[1] = -math.log1p(-s)
    return 2


def sample_partition(model: DislocationModel, policy: TruncationPolicy, rng: np.random.Generator) -> PartitionSample:
    tables = sampler_tables(model, policy)
    width = model.max_blocks
    out_s = np.empty(width)
    out_l = np.empty(width)
    k = draw_partition(*tables.args(), rng, out_s, out_l)
    return PartitionSample(tuple(sorted(out_s[:k].tolist(), reverse=True)))


def split_points(model: DislocationModel, policy: TruncationPolicy, n: int, rng: np.random.Generator) -> np.ndarray:
    """First block of ``n`` sampled binary partitions (the raw split point)."""
    if model.max_blocks != 2 or model.is_atomic:
        raise InvalidModel("split points are defined for continuous binary models only")
    tables = sampler_tables(model, policy)
    return _split_points(n, *tables.args(), rng)


@njit
def _split_points(n, code, params, cdf, sizes, nblocks, rng):
    out = np.empty(n)
    bs = np.empty(2)
    bl = np.empty(2)
    for i in range(n):
        draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
        out[i] = bs[0]
    return out
