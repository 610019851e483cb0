"""Event-driven simulation of the whole fragment population.

Every fragment dislocates at the same rate (homogeneity), so the scheduler
keeps one global exponential clock at rate ``N * rate`` and picks the victim
uniformly.  Fragments below an absolute cutoff are pruned into a mass
account; since sizes only shrink they can never re-enter any tracked
observable above the cutoff.

Sizes are stored as ``neglog = -log(size)`` throughout.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .errors import CutoffTooCoarse, MassConservationError, PopulationOverflow, PreconditionError
from .exponent import ExponentProfile
from .model import DislocationModel, TruncationPolicy, draw_partition, sampler_tables

DEFAULT_CEILING = 10_000_000
DEFAULT_MARGIN = 0.05
MASS_TOL = 1e-9

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_MASS = 2


@njit
def _advance(neglog, zmin, n, clock, next_time, t_target, rate, c, cut_neglog, ceiling,
             code, params, cdf, sizes, nblocks, rng, acc):
    """Process events up to ``t_target``.

    ``acc`` holds ``[pruned_mass, kahan_compensation, events, worst_local_error]``.
    Returns ``(neglog, zmin, n, clock, next_time, status)``.
    """
    bs = np.empty(sizes.shape[1] if sizes.shape[1] > 2 else 2)
    bl = np.empty(bs.shape[0])
    status = 0
    while next_time <= t_target:
        clock = next_time
        idx = int(rng.random() * n)
        if idx >= n:
            idx = n - 1
        parent = neglog[idx]
        zpre = parent - c * clock
        zm = zmin[idx]
        if zpre < zm:
            zm = zpre
        k = draw_partition(code, params, cdf, sizes, nblocks, rng, bs, bl)
        total = 0.0
        for i in range(k):
            total += bs[i]
        err = abs(total - 1.0)
        if err > acc[3]:
            acc[3] = err
        if err > 1e-12:
            status = 2
            break
        if n + k - 1 > neglog.shape[0]:
            if n + k - 1 > ceiling:
                status = 1
                break
            cap = min(max(2 * neglog.shape[0], n + k), ceiling + k)
            grown = np.empty(cap)
            grown[:n] = neglog[:n]
            neglog = grown
            grown_z = np.empty(cap)
            grown_z[:n] = zmin[:n]
            zmin = grown_z
        placed = False
        for i in range(k):
            child = parent + bl[i]
            if child > cut_neglog:
                # Kahan summation of pruned mass
                y = math.exp(-child) - acc[1]
                t = acc[0] + y
                acc[1] = (t - acc[0]) - y
                acc[0] = t
                continue
            if not placed:
                neglog[idx] = child
                zmin[idx] = zm
                placed = True
            else:
                neglog[n] = child
                zmin[n] = zm
                n += 1
        if not placed:
            n -= 1
            neglog[idx] = neglog[n]
            zmin[idx] = zmin[n]
        if n > ceiling:
            status = 1
            break
        acc[2] += 1.0
        if n == 0:
            next_time = math.inf
        else:
            next_time = clock + -math.log(1.0 - rng.random()) / (n * rate)
    if status == 0 and t_target > clock:
        clock = t_target
    return neglog, zmin, n, clock, next_time, status


@njit
def _observe(neglog, zmin, n, t, c, pbar, c_prime, level_a, level_k):
    """Reductions over the active population at time ``t``.

    Returns ``(min_neglog, martingale, near_max, n_terminal, n_runmin, fsum_mass)``;
    ``n_terminal`` counts ``zeta_t <= level_a`` and ``n_runmin`` counts
    ``running_min(zeta) >= -level_k``.
    """
    mn = math.inf
    mart = 0.0
    near = 0
    n_term = 0
    n_run = 0
    mass = 0.0
    comp = 0.0
    for i in range(n):
        x = neglog[i]
        if x < mn:
            mn = x
        z = x - c * t
        mart += math.exp(-(1.0 + pbar) * z)
        if x - c_prime * t <= 1.0:
            near += 1
        if z <= level_a:
            n_term += 1
        zm = zmin[i]
        if z < zm:
            zm = z
        if zm >= -level_k:
            n_run += 1
        y = math.exp(-x) - comp
        s = mass + y
        comp = (s - mass) - y
        mass = s
    return mn, mart, near, n_term, n_run, mass


@dataclass
class SimulationState:
    """Live pruned population; owned by a single worker."""

    neglog: np.ndarray
    zmin: np.ndarray
    n: int
    clock: float
    next_time: float
    acc: np.ndarray
    prune_cutoff: float
    policy: TruncationPolicy
    rng: np.random.Generator
    c: float

    @property
    def active(self) -> np.ndarray:
        return self.neglog[: self.n]

    @property
    def sizes(self) -> np.ndarray:
        return np.exp(-self.active)

    @property
    def pruned_mass(self) -> float:
        return float(self.acc[0])

    @property
    def events(self) -> int:
        return int(self.acc[2])

    def mass_error(self) -> float:
        total = math.fsum(np.exp(-self.active).tolist()) + self.pruned_mass
        return abs(total - 1.0)


def default_margin(horizon: float) -> float:
    """Margin leaving at least 4 units of neglog above ``c * horizon``.

    The largest fragment sits near ``c t + l log t``, so a fixed margin of 0.05
    prunes everything at short horizons.
    """
    return max(DEFAULT_MARGIN, 4.0 / horizon) if horizon > 0 else DEFAULT_MARGIN


def prune_cutoff(profile: ExponentProfile, horizon: float, prune_margin: float) -> float:
    if math.isinf(prune_margin):
        return 0.0
    return math.exp(-(profile.c + prune_margin) * horizon)


class Simulation:
    """Step-wise driver around the event kernel."""

    def __init__(self, model: DislocationModel, policy: TruncationPolicy, profile: ExponentProfile,
                 horizon: float, rng: np.random.Generator, prune_margin: float = DEFAULT_MARGIN,
                 ceiling: int = DEFAULT_CEILING, capacity: int = 64):
        if not horizon >= 0:
            raise PreconditionError("horizon must be nonnegative")
        if not prune_margin > 0:
            raise PreconditionError("prune_margin must be positive")
        self.model = model
        self.profile = profile
        self.tables = sampler_tables(model, policy)
        self.horizon = float(horizon)
        self.ceiling = int(ceiling)
        cutoff = prune_cutoff(profile, horizon, prune_margin)
        if cutoff >= 1.0:
            raise PreconditionError("prune cutoff must be below 1")
        self.cut_neglog = -math.log(cutoff) if cutoff > 0 else math.inf
        neglog = np.zeros(capacity)
        zmin = np.zeros(capacity)
        first = -math.log(1.0 - rng.random()) / policy.effective_rate
        self.state = SimulationState(neglog, zmin, 1, 0.0, first, np.zeros(4), cutoff, policy, rng, profile.c)

    def advance_to(self, t: float) -> SimulationState:
        st = self.state
        if t < st.clock:
            raise PreconditionError("cannot advance backwards in time")
        if t > self.horizon + 1e-12:
            raise PreconditionError(f"time {t} beyond horizon {self.horizon}")
        neglog, zmin, n, clock, nxt, status = _advance(
            st.neglog, st.zmin, st.n, st.clock, st.next_time, float(t), self.tables.rate, st.c,
            self.cut_neglog, self.ceiling, *self.tables.args(), st.rng, st.acc)
        st.neglog, st.zmin, st.n, st.clock, st.next_time = neglog, zmin, n, clock, nxt
        if status == STATUS_OVERFLOW:
            raise PopulationOverflow(
                f"active population exceeded {self.ceiling} at t={clock:.4g} "
                f"(cutoff {st.prune_cutoff:.3g}); raise the ceiling or shrink prune_margin")
        if status == STATUS_MASS:
            raise MassConservationError(f"partition mass defect {st.acc[3]:.3g} at t={clock:.4g}")
        err = st.mass_error()
        if err > MASS_TOL:
            raise MassConservationError(f"active + pruned mass off by {err:.3g} at t={clock:.4g}")
        return st


def additive_martingale(state: SimulationState, profile: ExponentProfile):
    """``M_t`` over active fragments and a bound on what pruning removed.

    Pruned fragments are smaller than the cutoff, so their contribution is at
    most ``exp(phi(pbar) t) * cutoff**pbar * pruned_mass``.
    """
    t = state.clock
    z = state.active - profile.c * t
    value = float(np.exp(-(1.0 + profile.pbar) * z).sum())
    bound = math.exp(profile.phi_at_pbar * t) * state.prune_cutoff ** profile.pbar * state.pruned_mass
    return value, bound


def count_near_maximal(state: SimulationState, c_prime: float) -> int:
    """Fragments with ``neglog - c' t <= 1`` (boundary inclusive)."""
    t = state.clock
    check_near_max_cutoff(state.prune_cutoff, c_prime, t)
    return int(np.count_nonzero(state.active - c_prime * t <= 1.0))


def check_near_max_cutoff(cutoff, c_prime, t):
    if cutoff > 0 and math.exp(-(c_prime * t + 1.0)) < cutoff:
        raise CutoffTooCoarse(
            f"pruning at {cutoff:.3g} may hide fragments with neglog <= {c_prime}*{t}+1; "
            "increase prune_margin")


@dataclass
class TrackerSeries:
    grid: np.ndarray
    max_size: np.ndarray
    min_neglog: np.ndarray
    martingale: np.ndarray
    martingale_bound: np.ndarray
    near_max_count: np.ndarray
    total_count_capped: np.ndarray
    pruned_mass: np.ndarray
    events: int = 0
    peak_active: int = 0
    prune_cutoff: float = 0.0
    extra: dict = field(default_factory=dict)

    COLUMNS = ("t", "max_size", "martingale", "near_max_count", "active_count", "pruned_mass")

    def rows(self):
        for j, t in enumerate(self.grid):
            yield (float(t), float(self.max_size[j]), float(self.martingale[j]),
                   int(self.near_max_count[j]), int(self.total_count_capped[j]), float(self.pruned_mass[j]))


def run(model: DislocationModel, policy: TruncationPolicy, horizon: float, grid, profile: ExponentProfile,
        prune_margin: float = DEFAULT_MARGIN, rng: np.random.Generator | None = None,
        c_prime: float | None = None, ceiling: int = DEFAULT_CEILING) -> TrackerSeries:
    """Simulate to ``horizon`` and sample the trackers at each grid time.

    ``near_max_count`` is -1 when ``c_prime`` is not given.
    """
    if rng is None:
        raise PreconditionError("an explicit random generator is required")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise PreconditionError("grid must be an ascending 1-d sequence")
    if grid.size and (grid[0] < 0 or grid[-1] > horizon):
        raise PreconditionError("grid must lie within [0, horizon]")
    sim = Simulation(model, policy, profile, horizon, rng, prune_margin, ceiling)
    st = sim.state
    if c_prime is not None:
        if not c_prime > profile.c:
            raise PreconditionError("c_prime must exceed c")
        for t in grid:
            check_near_max_cutoff(st.prune_cutoff, c_prime, t)
    m = grid.size
    out = {k: np.zeros(m) for k in ("max_size", "min_neglog", "martingale", "bound", "pruned")}
    near = np.full(m, -1, dtype=np.int64)
    count = np.zeros(m, dtype=np.int64)
    peak = 1
    cp = c_prime if c_prime is not None else math.inf
    for j, t in enumerate(grid):
        sim.advance_to(t)
        peak = max(peak, st.n)
        mn, mart, nm, _, _, _ = _observe(st.neglog, st.zmin, st.n, t, profile.c, profile.pbar, cp, 0.0, 0.0)
        out["min_neglog"][j] = mn
        out["max_size"][j] = math.exp(-mn) if st.n else 0.0
        out["martingale"][j] = mart
        out["bound"][j] = math.exp(profile.phi_at_pbar * t) * st.prune_cutoff ** profile.pbar * st.pruned_mass
        out["pruned"][j] = st.pruned_mass
        count[j] = st.n
        if c_prime is not None:
            near[j] = nm
    return TrackerSeries(grid, out["max_size"], out["min_neglog"], out["martingale"], out["bound"], near, count,
                         out["pruned"], events=st.events, peak_active=peak, prune_cutoff=st.prune_cutoff)


@njit
def _particle_sums_batch(n_rep, t, rate, c, pbar, level_a, level_k, code, params, cdf, sizes, nblocks, rng):
    """Unpruned runs to time ``t``; per replica the three functional sums.

    Columns: fragment count, #{zeta_t <= a}, #{running min >= -k}.
    """
    out = np.zeros((n_rep, 3))
    acc = np.zeros(4)
    for r in range(n_rep):
        neglog = np.zeros(16)
        zmin = np.zeros(16)
        acc[:] = 0.0
        first = -math.log(1.0 - rng.random()) / rate
        neglog, zmin, n, clock, nxt, status = _advance(neglog, zmin, 1, 0.0, first, t, rate, c, math.inf,
                                                        1 << 40, code, params, cdf, sizes, nblocks, rng, acc)
        _, _, _, n_term, n_run, _ = _observe(neglog, zmin, n, t, c, pbar, math.inf, level_a, level_k)
        out[r, 0] = n
        out[r, 1] = n_term
        out[r, 2] = n_run
    return out


def particle_sums(model, policy, profile, t, n_rep, level_a, level_k, rng):
    tables = sampler_tables(model, policy)
    return _particle_sums_batch(int(n_rep), float(t), tables.rate, profile.c, profile.pbar, float(level_a),
                                float(level_k), *tables.args(), rng)


def run_reference(model: DislocationModel, policy: TruncationPolicy, horizon: float, rng: np.random.Generator,
                  prune_cutoff: float = 0.0):
    """Per-fragment exponential clocks with a priority queue.

    Slow reference scheduler used to validate the global-clock engine.
    Returns the active sizes at ``horizon``.
    """
    tables = sampler_tables(model, policy)
    rate = tables.rate
    width = max(model.max_blocks, 2)
    bs = np.empty(width)
    bl = np.empty(width)
    cut = -math.log(prune_cutoff) if prune_cutoff > 0 else math.inf
    heap = [(rng.exponential(1.0 / rate), 0.0)]
    done = []
    while heap:
        when, nl = heapq.heappop(heap)
        if when > horizon:
            done.append(nl)
            continue
        k = draw_partition(*tables.args(), rng, bs, bl)
        for i in range(k):
            child = nl + bl[i]
            if child <= cut:
                heapq.heappush(heap, (when + rng.exponential(1.0 / rate), child))
    return np.exp(-np.array(done))
