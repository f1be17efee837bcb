"""Generation-by-generation evolution of a branching random walk.

Positions are kept as a multiset: an array of distinct positions with
integer multiplicities.  Continuous displacement laws always produce
multiplicity one; explicit (finite-atom) laws merge coinciding children,
which keeps deterministic laws such as the ``[ln 2, ln 2]`` staircase at a
single stored entry however large the population gets.

After each generation the offspring more than ``barrier`` above the
generation minimum are killed, and their ``exp(-V)`` mass is accumulated as
a bias certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import EmptyPool, PopulationOverflow
from .laws import Explicit

MAX_INDIVIDUALS = 1 << 62


@dataclass(frozen=True)
class SimConfig:
    measure_n: int = 256
    barrier: float = 14.0
    eps_record: float = 1e-3
    kappa: float = 10.0
    max_generation: int = 0  # 0 means measure_n + 10_000
    max_pop: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        if self.max_generation == 0:
            object.__setattr__(self, "max_generation", int(self.measure_n) + 10_000)
        problems = []
        if not self.barrier > 0:
            problems.append(f"barrier must be > 0, got {self.barrier}")
        if not 0 < self.eps_record < 1:
            problems.append(f"eps_record must lie in (0, 1), got {self.eps_record}")
        if not self.kappa > 0:
            problems.append(f"kappa must be > 0, got {self.kappa}")
        if self.measure_n < 1:
            problems.append(f"measure_n must be >= 1, got {self.measure_n}")
        if self.max_generation <= self.measure_n:
            problems.append(
                f"max_generation ({self.max_generation}) must exceed measure_n ({self.measure_n})"
            )
        if self.max_pop < 1:
            problems.append(f"max_pop must be >= 1, got {self.max_pop}")
        if problems:
            raise ValueError("; ".join(problems))


class GenStats(NamedTuple):
    n: int
    M: float
    W: float
    Z: float
    pop: int
    truncated_mass: float


@dataclass
class Population:
    generation: int
    positions: np.ndarray
    mult: np.ndarray
    record: float
    truncated_mass: float = 0.0
    # sum of mult * exp(-(V - front)) over the stored positions
    front: float = math.inf
    front_mass: float = 0.0
    post_record: float | None = None

    @classmethod
    def root(cls):
        return cls(0, np.zeros(1), np.ones(1, dtype=np.int64), 0.0, 0.0, 0.0, 1.0)

    @property
    def size(self):
        return int(self.mult.sum())

    @property
    def extinct(self):
        return self.positions.size == 0

    def residual(self, level):
        """``sum exp(-(V(u) - level))`` over alive particles."""
        if self.extinct:
            return 0.0
        return math.exp(level - self.front) * self.front_mass

    def root_stats(self):
        return GenStats(self.generation, self.front, self.front_mass * math.exp(-self.front),
                        self.front * self.front_mass * math.exp(-self.front), self.size,
                        self.truncated_mass)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, inline="always")
def _neumaier(s, c, x):
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@njit(cache=True)
def _reduce_generation(pos, mult, barrier):
    n = pos.size
    m = np.inf
    for i in range(n):
        if pos[i] < m:
            m = pos[i]
    keep = np.empty(n, dtype=np.bool_)
    sw = cw = 0.0
    sz = cz = 0.0
    sk = ck = 0.0
    sx = cx = 0.0
    n_kill = 0
    n_keep = 0
    cut = m + barrier
    for i in range(n):
        e = mult[i] * np.exp(m - pos[i])
        sw, cw = _neumaier(sw, cw, e)
        sz, cz = _neumaier(sz, cz, pos[i] * e)
        if pos[i] <= cut:
            keep[i] = True
            n_keep += 1
            sk, ck = _neumaier(sk, ck, e)
        else:
            keep[i] = False
            n_kill += mult[i]
            sx, cx = _neumaier(sx, cx, e)
    return m, sw + cw, sz + cz, sk + ck, sx + cx, n_kill, keep


def _sample_children(law, mult, rng, max_pop):
    """Return ``(parent index, displacement, multiplicity)`` per child entry."""
    n_par = mult.size
    if isinstance(law, Explicit):
        sizes = law.sizes
        if len(law.atoms) == 1:
            a = int(sizes[0])
            if float(mult.sum()) * a >= MAX_INDIVIDUALS:
                raise PopulationOverflow("individual count exceeds 2**62")
            total = n_par * a
            if total > max_pop:
                raise PopulationOverflow(f"{total} child entries exceed max_pop={max_pop}")
            parent = np.repeat(np.arange(n_par), a)
            return parent, np.tile(law.flat, n_par), np.repeat(mult, a)
        counts = rng.multinomial(mult, law.probs)
        pi, ai = np.nonzero(counts)
        c = counts[pi, ai]
        sz = sizes[ai]
        total = int(sz.sum())
        if total > max_pop:
            raise PopulationOverflow(f"{total} child entries exceed max_pop={max_pop}")
        if float(np.dot(c, sz)) >= MAX_INDIVIDUALS:
            raise PopulationOverflow("individual count exceeds 2**62")
        ends = np.cumsum(sz)
        within = np.arange(total) - np.repeat(ends - sz, sz)
        disp = law.flat[np.repeat(law.offsets[ai], sz) + within]
        return np.repeat(pi, sz), disp, np.repeat(c, sz)

    parents = np.arange(n_par) if np.all(mult == 1) else np.repeat(np.arange(n_par), mult)
    counts = law.count.sample(rng, parents.size)
    total = int(counts.sum())
    if total > max_pop:
        raise PopulationOverflow(f"{total} offspring exceed max_pop={max_pop}")
    parent = np.repeat(parents, counts)
    return parent, law.displacement.sample(rng, total), np.ones(total, dtype=np.int64)


# ---------------------------------------------------------------------------
# operations


def step(pop, law, cfg, rng):
    """Advance one generation and apply the barrier.

    Statistics describe the full offspring generation; truncation happens
    afterwards.
    """
    if pop.generation >= cfg.max_generation:
        raise ValueError(f"generation {pop.generation} already at max_generation")
    n = pop.generation + 1
    if pop.extinct:
        return (
            Population(n, pop.positions, pop.mult, pop.record, pop.truncated_mass,
                       math.inf, 0.0, pop.post_record),
            GenStats(n, math.inf, 0.0, 0.0, 0, pop.truncated_mass),
        )
    parent, disp, cmult = _sample_children(law, pop.mult, rng, cfg.max_pop)
    positions = pop.positions[parent] + disp
    if law.discrete and positions.size > 1:
        positions, inv = np.unique(positions, return_inverse=True)
        merged = np.zeros(positions.size, dtype=np.int64)
        np.add.at(merged, inv, cmult)
        cmult = merged
    if positions.size == 0:
        return (
            Population(n, positions, cmult, pop.record, pop.truncated_mass, math.inf, 0.0,
                       pop.post_record),
            GenStats(n, math.inf, 0.0, 0.0, 0, pop.truncated_mass),
        )
    m, sw, sz, sk, sx, _, keep = _reduce_generation(positions, cmult, float(cfg.barrier))
    scale = math.exp(-m)
    truncated = pop.truncated_mass + sx * scale
    stats = GenStats(n, m, sw * scale, sz * scale, int(cmult.sum()), truncated)
    if not keep.all():
        positions, cmult = positions[keep], cmult[keep]
    post = pop.post_record if pop.post_record is None else min(pop.post_record, m)
    new = Population(n, positions, cmult, min(pop.record, m), truncated, m, sk, post)
    return new, stats


class Trajectory:
    """Column store of per-generation statistics; indexing yields :class:`GenStats`."""

    _fields = GenStats._fields

    def __init__(self, rows=()):
        self._rows = list(rows)
        self._cols = None

    def append(self, stats):
        self._rows.append(stats)
        self._cols = None

    def __len__(self):
        return len(self._rows)

    def __getitem__(self, i):
        return self._rows[i]

    def __iter__(self):
        return iter(self._rows)

    def column(self, name):
        if self._cols is None:
            arr = np.array(self._rows, dtype=float).reshape(-1, len(self._fields))
            self._cols = {f: arr[:, j] for j, f in enumerate(self._fields)}
        return self._cols[name]

    def __getattr__(self, name):
        if name in GenStats._fields:
            return self.column(name)
        raise AttributeError(name)


@dataclass
class ReplicaOutcome:
    survived: bool
    Z_hat: float
    M_centered: float
    R_centered: float
    r_settled: bool
    gen_stats: Trajectory = field(default_factory=Trajectory, repr=False)
    measure_n: int = 0
    truncated_mass: float = 0.0
    generations: int = 0

    @property
    def R_raw(self):
        return self.R_centered + 0.5 * math.log(self.measure_n)

    @property
    def M_raw(self):
        return self.M_centered + 1.5 * math.log(self.measure_n)


def _settled(pop, level, cfg):
    return cfg.kappa * pop.residual(level) <= cfg.eps_record


def run_trajectory(law, cfg, rng, keep_stats=True):
    """Simulate one replica and return the joint (Z, M, R) triple at ``measure_n``.

    After ``measure_n`` the walk keeps running while tracking the post-n
    record ``rho = min_{k >= n} M_k``, until ``kappa * sum exp(-(V - rho))``
    drops to ``eps_record`` (or extinction, or ``max_generation``).
    """
    n = cfg.measure_n
    pop = Population.root()
    traj = Trajectory([pop.root_stats()] if keep_stats else ())
    stats = None
    while pop.generation < n:
        pop, stats = step(pop, law, cfg, rng)
        if keep_stats:
            traj.append(stats)
        if pop.extinct:
            return ReplicaOutcome(False, 0.0, math.inf, math.inf, True, traj, n,
                                  pop.truncated_mass, pop.generation)

    z_hat = stats.Z
    m_n = stats.M
    pop.post_record = m_n
    while not _settled(pop, pop.post_record, cfg) and pop.generation < cfg.max_generation:
        pop, stats = step(pop, law, cfg, rng)
        if keep_stats:
            traj.append(stats)
    settled = _settled(pop, pop.post_record, cfg)
    log_n = math.log(n)
    return ReplicaOutcome(
        True,
        z_hat,
        m_n - 1.5 * log_n,
        pop.post_record - 0.5 * log_n,
        settled,
        traj,
        n,
        pop.truncated_mass,
        pop.generation,
    )


class R0Sample(NamedTuple):
    value: float
    certificate: float
    settled: bool
    generations: int


def sample_r0(law, cfg, rng):
    """Draw the all-time minimum of a walk started from a single root at 0.

    ``certificate`` is the final residual sum ``sum exp(-(V - record))``;
    ``settled`` is False when ``max_generation`` was reached first.
    """
    pop = Population.root()
    while True:
        if pop.extinct:
            return R0Sample(pop.record, 0.0, True, pop.generation)
        resid = pop.residual(pop.record)
        if cfg.kappa * resid <= cfg.eps_record:
            return R0Sample(pop.record, resid, True, pop.generation)
        if pop.generation >= cfg.max_generation:
            return R0Sample(pop.record, resid, False, pop.generation)
        pop, _ = step(pop, law, cfg, rng)


@dataclass
class R0Pool:
    samples: np.ndarray
    residual_bounds: np.ndarray
    settled: np.ndarray = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.residual_bounds = np.asarray(self.residual_bounds, dtype=float)
        if self.settled is None:
            self.settled = np.ones(self.samples.size, dtype=bool)
        self.settled = np.asarray(self.settled, dtype=bool)
        if np.any(self.samples > 0):
            raise ValueError("R0 samples must be <= 0")
        self._sorted = np.sort(self.samples)

    def __len__(self):
        return self.samples.size

    @property
    def sorted(self):
        return self._sorted

    @classmethod
    def from_samples(cls, samples):
        return cls([s.value for s in samples], [s.certificate for s in samples],
                   [s.settled for s in samples])


def min_of_pool_draws(pool, mult, rng):
    """Minimum of ``mult[i]`` i.i.d. draws from the pool, for each ``i``.

    The rank J of the minimum of c uniform draws among N sorted values has
    ``P(J >= j) = (1 - j/N)**c``, so one uniform per entry suffices.
    """
    srt = pool.sorted
    n = srt.size
    u = rng.random(mult.size)
    rank = np.floor(n * -np.expm1(np.log(u) / mult)).astype(np.int64)
    return srt[np.clip(rank, 0, n - 1)]


def two_stage_rn(law, cfg, rng, pool):
    """``R_n`` via ``min_u (V(u) + R0^(u))`` over generation ``measure_n``.

    Returns the uncentred value; ``+inf`` if the walk dies out first.
    """
    if pool is None or len(pool) == 0:
        raise EmptyPool("two-stage sampling needs a nonempty R0 pool")
    pop = Population.root()
    while pop.generation < cfg.measure_n:
        pop, _ = step(pop, law, cfg, rng)
        if pop.extinct:
            return math.inf
    draws = min_of_pool_draws(pool, pop.mult.astype(float), rng)
    return float(np.min(pop.positions + draws))
