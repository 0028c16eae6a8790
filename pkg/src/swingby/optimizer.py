"""Hybrid evolutionary search with systematic domain branching.

A population of individuals explores a box, each carrying an adaptive
migration region sized by a radius rho relative to its distance to the
box faces. The best individuals sample their region (mutation, one-sided
extrapolation, one-dimensional quadratic interpolation) with a
per-individual sample budget that grows on success; improved individuals
recombine with random partners; crowded individuals are re-projected
toward the box boundary. When a box is exhausted it is partitioned into
three children around the worst and best points found, children are
ranked by a density-plus-fitness index, and the search recurses into the
most promising one. Archive entries are finally polished with a bounded
pattern search.

Evaluation is batched: the objective must accept an (m, n) array and
return m values. All randomness derives from one seed through one
scheduler stream plus one stream per population slot, so runs are
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baseline import local_refine

_EULER = math.e


@dataclass
class SearchParams:
    """Knobs of the evolutionary-branching search."""

    n_pop: int = 40
    n_e: int = 25                  # elite count allowed to run perception
    sigma: float = 0.5             # branching weight: density vs fitness
    max_evals: int = 100_000
    branch_levels: int = 0         # consecutive non-improving branchings
    crowding_threshold: float = 0.05
    seed: int = 0
    theta: float = 2.0             # radius growth factor
    eps_radius: float = 0.5        # radius contraction factor
    node_evals: int | None = None  # per-node budget; derived when None
    rho_min: float = 1e-6
    radius_floor: float = 1e-4     # floor constant in the contraction rule
    resources_init: int = 1
    stall_generations: int = 30
    stall_rel_tol: float = 1e-6
    archive_capacity: int = 500
    four_leaf_branching: bool = False
    polish: bool = True
    polish_tol: float = 1e-6
    polish_max_evals: int = 5000

    def resolved_node_evals(self) -> int:
        if self.node_evals is not None:
            return self.node_evals
        if self.branch_levels <= 0:
            return self.max_evals
        return max(self.max_evals // (self.branch_levels + 2), 1)

    def validate(self, n_dim: int):
        if self.n_pop < 2:
            raise ValueError("n_pop must be at least 2")
        if not 1 <= self.n_e <= self.n_pop:
            raise ValueError("n_e must lie in [1, n_pop]")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("sigma must lie in [0, 1]")
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")
        if self.crowding_threshold <= 0.0:
            raise ValueError("crowding_threshold must be positive")
        if n_dim < 1:
            raise ValueError("empty search space")


@dataclass
class Individual:
    """Population member: point, fitness, migration state."""

    y: np.ndarray
    f: float
    rho: float = 1.0
    resources: int = 1
    role: str = "perceiver"
    last_gain: float = 0.0
    rng: np.random.Generator = None

    def region(self, lower, upper):
        """Axis-aligned migration box, inside [lower, upper] by build."""
        lo = self.y - self.rho * (self.y - lower)
        hi = self.y + self.rho * (upper - self.y)
        return lo, hi


@dataclass
class Subdomain:
    """One node of the recursive box partition."""

    lower: np.ndarray
    upper: np.ndarray
    omega: float = 1.0
    phi: float = 1.0
    psi: float = math.inf
    depth: int = 0
    order: int = 0
    best_f: float = math.inf
    explored: bool = False

    def volume_key(self):
        return tuple(self.lower) + tuple(self.upper)


class SolutionArchive:
    """Distance-deduplicated store of the best solutions found.

    Entries stay sorted ascending by fitness; any two entries are farther
    apart than the crowding threshold in bounds-normalized space.
    """

    def __init__(self, lower, upper, threshold: float, capacity: int = 500):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        scale = self.upper - self.lower
        self._scale = np.where(scale > 0.0, scale, 1.0)
        self._live = scale > 0.0
        self.threshold = float(threshold)
        self.capacity = int(capacity)
        self._ys = np.empty((0, self.lower.size))
        self._fs = np.empty(0)

    @property
    def entries(self) -> list[tuple[float, np.ndarray]]:
        return [(float(f), y.copy()) for f, y in zip(self._fs, self._ys)]

    @property
    def best_f(self) -> float:
        return float(self._fs[0]) if self._fs.size else math.inf

    @property
    def best(self):
        if not self._fs.size:
            return None
        return float(self._fs[0]), self._ys[0].copy()

    def __len__(self) -> int:
        return int(self._fs.size)

    def offer(self, y, f: float) -> bool:
        """Insert unless a near-duplicate is already better.

        A new point within the threshold of existing entries either
        absorbs all of them (when it beats their best) or is dropped,
        which keeps every pair separated. Returns True when the archive
        best improved.
        """
        f = float(f)
        improved = f < self.best_f
        y = np.array(y, dtype=float, copy=True)
        if self._fs.size:
            d = (self._ys - y) / self._scale
            close = np.sqrt(np.sum(d[:, self._live] ** 2, axis=1)) \
                <= self.threshold
            if close.any():
                if f >= float(self._fs[close].min()):
                    return improved
                self._ys = self._ys[~close]
                self._fs = self._fs[~close]
        self._ys = np.vstack([self._ys, y[None, :]])
        self._fs = np.append(self._fs, f)
        self._resort()
        if self._fs.size > self.capacity:
            self._ys = self._ys[:self.capacity]
            self._fs = self._fs[:self.capacity]
        return improved

    def _resort(self):
        order = np.argsort(self._fs, kind="stable")
        self._fs = self._fs[order]
        self._ys = self._ys[order]

    def offer_many(self, ys, fs) -> bool:
        improved = False
        for y, f in zip(ys, fs):
            improved |= self.offer(y, f)
        return improved

    def merge(self, other: "SolutionArchive") -> bool:
        return self.offer_many(other._ys, other._fs)


class _CountingObjective:
    """Budget-capped batch objective wrapper."""

    def __init__(self, evaluate_many, budget: int):
        self._fn = evaluate_many
        self.budget = int(budget)
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def __call__(self, ys) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        self.used += ys.shape[0]
        return np.asarray(self._fn(ys), dtype=float)


# ----------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------
def _clip_round(y, lower, upper, int_mask):
    y = np.clip(y, lower, upper)
    if int_mask is not None and int_mask.any():
        y[int_mask] = np.clip(np.round(y[int_mask]),
                              lower[int_mask], upper[int_mask])
    return y


def _mutate(ind: Individual, lower, upper, int_mask) -> np.ndarray:
    """Uniform resample inside the migration region.

    Each component mutates with probability 1/n and at least one is
    forced; integer components redraw uniformly over their full slot.
    """
    n = ind.y.size
    rng = ind.rng
    pick = rng.random(n) < (1.0 / n)
    pick[rng.integers(n)] = True
    rlo, rhi = ind.region(lower, upper)
    child = ind.y.copy()
    for i in np.nonzero(pick)[0]:
        if int_mask is not None and int_mask[i]:
            child[i] = float(rng.integers(int(lower[i]), int(upper[i]) + 1))
        else:
            child[i] = rng.uniform(rlo[i], rhi[i])
    return child


def quadratic_step(chi1: float, df1: float, df2: float) -> float | None:
    """Minimum of the 1-D quadratic through (0, 0), (chi1, df1), (1, df2).

    Fitness differences are relative to the parent, chi parameterizes
    the sampling line with the extrapolated point at chi = 1. Returns
    None when the fit is degenerate or non-convex.
    """
    denom = chi1 * chi1 - chi1
    if denom == 0.0 or not math.isfinite(denom):
        return None
    a = (df1 - chi1 * df2) / denom
    b = df2 - a
    if a <= 0.0:
        return None
    chi_min = -b / (2.0 * a)
    return chi_min if math.isfinite(chi_min) else None


class _Perception(object):
    """Sampling state machine for one individual.

    propose() yields the next candidate (or None when finished) and
    feed() consumes its fitness, so one implementation serves both the
    sequential operator and the batched generation loop.
    """

    _MUT, _EXT, _QUAD = 0, 1, 2

    def __init__(self, ind: Individual, lower, upper, int_mask):
        self.ind = ind
        self.lower = lower
        self.upper = upper
        self.int_mask = int_mask
        self.count = 0
        self.limit = max(ind.resources, 1)
        self.phase = self._MUT
        self.improved = False
        self.best_y = None
        self.best_f = math.inf
        self._y1 = None
        self._f1 = 0.0
        self._y2 = None
        self._chi1 = 0.0
        self._p = None
        self._pending = None

    @property
    def done(self) -> bool:
        return self.improved or self.count >= self.limit

    def propose(self):
        if self.done:
            return None
        ind = self.ind
        if self.phase == self._MUT:
            cand = _mutate(ind, self.lower, self.upper, self.int_mask)
        elif self.phase == self._EXT:
            nu = ind.rng.random()
            d = self._y1 - ind.y
            if self._f1 <= ind.f:
                raw = self._y1 + nu * d
                chi1 = 1.0 / (1.0 + nu) if nu > 0.0 else math.inf
            else:
                raw = ind.y - nu * d
                chi1 = -1.0 / nu if nu > 0.0 else math.inf
            cand = _clip_round(raw.copy(), self.lower, self.upper,
                               self.int_mask)
            # Clipping (or degenerate nu) breaks the collinearity the
            # one-dimensional quadratic model relies on.
            self._quad_ok = (np.array_equal(cand, raw)
                             and math.isfinite(chi1)
                             and abs(chi1) > 1.0e-12
                             and abs(chi1 - 1.0) > 1.0e-12)
            self._chi1 = chi1
            self._p = cand - ind.y
        else:
            cand = self._quad_candidate()
            if cand is None:
                self.phase = self._MUT
                return self.propose()
        self._pending = cand
        return cand

    def _quad_candidate(self):
        ind = self.ind
        if not self._quad_ok:
            return None
        chi_min = quadratic_step(self._chi1, self._f1 - ind.f,
                                 self._f2 - ind.f)
        if chi_min is None:
            return None
        cand = _clip_round(ind.y + chi_min * self._p,
                           self.lower, self.upper, self.int_mask)
        return cand

    def feed(self, f_cand: float):
        cand = self._pending
        self._pending = None
        self.count += 1
        if f_cand < self.best_f:
            self.best_f = f_cand
            self.best_y = cand
        if f_cand < self.ind.f:
            self.improved = True
            return
        if self.phase == self._MUT:
            self._y1 = cand
            self._f1 = f_cand
            self.phase = self._EXT
        elif self.phase == self._EXT:
            self._y2 = cand
            self._f2 = f_cand
            self.phase = self._QUAD
        else:
            self.phase = self._MUT

    def delta_y_min(self) -> float:
        """Box-normalized distance of the best sample from the parent.

        Normalizing by the search box keeps the contraction rule a
        contraction: the product with the radius ratio stays on the
        same scale as rho itself.
        """
        if self.best_y is None:
            return 0.0
        ext = self.upper - self.lower
        live = ext > 0.0
        if not live.any():
            return 0.0
        d = (self.best_y[live] - self.ind.y[live]) / ext[live]
        return float(np.sqrt(np.sum(d * d)))


def perceive(ind: Individual, objective, lower, upper,
             int_mask=None) -> tuple[Individual, int]:
    """Run one perception pass on a single individual.

    Sequential form of the sampling machine: draws up to ``resources``
    candidates, stops at the first improvement, migrates the individual
    to the improving sample and books resources up or down. Returns the
    (mutated in place) individual and the number of evaluations spent.
    """
    machine = _Perception(ind, np.asarray(lower, dtype=float),
                          np.asarray(upper, dtype=float), int_mask)
    spent = 0
    while True:
        cand = machine.propose()
        if cand is None:
            break
        machine.feed(float(objective(cand[None, :])[0]))
        spent += 1
    _apply_perception_outcome(ind, machine, ind.y.size)
    return ind, spent


def _apply_perception_outcome(ind: Individual, machine: _Perception, n: int):
    if machine.improved:
        gain = ind.f - machine.best_f
        ind.y = machine.best_y
        ind.f = machine.best_f
        ind.resources = min(ind.resources + 1, n)
        ind._gain = gain
    else:
        ind.resources = max(ind.resources - 1, 1)
        ind._gain = 0.0
    ind._dymin = machine.delta_y_min()


def update_radius(ind: Individual, found_improvement: bool,
                  gain_increased: bool, delta_y_min: float, rank: int,
                  params: SearchParams) -> float:
    """Contract or expand the migration radius after a perception pass.

    No improvement contracts toward the best sample distance; an
    improving trend expands by theta * log(e - 1 + rank). The result is
    clamped to (rho_min, 1].
    """
    rho = ind.rho
    if not found_improvement:
        if delta_y_min >= params.eps_radius * rho:
            rho = max(params.radius_floor, delta_y_min)
        else:
            rho = params.eps_radius * rho
    elif gain_increased:
        rho = rho * params.theta * math.log(_EULER - 1.0 + rank)
    return min(max(rho, params.rho_min), 1.0)


def rank_and_assign(population: list[Individual], n_e: int):
    """Give the elite the perception role; mutate the rest by rank.

    Ranks are over the whole population sorted ascending by fitness. A
    non-elite individual of 1-based rank r mutates with probability
    (r - n_e + 1)/(n_pop - n_e + 1), hibernates otherwise, so the worst
    individual always mutates.
    """
    n_pop = len(population)
    order = sorted(range(n_pop), key=lambda i: (population[i].f, i))
    ranks = {}
    for pos, idx in enumerate(order):
        ind = population[idx]
        ranks[idx] = pos + 1
        if pos < n_e:
            ind.role = "perceiver"
        else:
            p = (pos + 1 - n_e + 1) / (n_pop - n_e + 1)
            ind.role = "mutated" if ind.rng.random() < p else "hibernated"
    return order, ranks


def communicate(population: list[Individual], improved: list[int],
                lower, upper, threshold: float, int_mask,
                evaluate) -> list[int]:
    """Exchange findings and enforce spacing.

    Each improved individual mates a random partner with one of
    component exchange, extrapolation past the better parent, or linear
    interpolation (equal probability); the offspring replaces the
    partner only when better. Afterwards any cluster tighter than the
    crowding threshold keeps its best member and projects the rest
    toward random boundary points. Returns the slots re-evaluated by
    crowding control.
    """
    n_pop = len(population)
    offspring = []
    for j in improved:
        ind = population[j]
        partner = int(ind.rng.integers(n_pop - 1))
        if partner >= j:
            partner += 1
        mate = population[partner]
        op = int(ind.rng.integers(3))
        if op == 0:
            take = ind.rng.random(ind.y.size) < 0.5
            child = np.where(take, ind.y, mate.y)
        elif op == 1:
            better, worse = ((ind, mate) if ind.f <= mate.f
                             else (mate, ind))
            nu = ind.rng.random()
            child = better.y + nu * (better.y - worse.y)
        else:
            nu = ind.rng.random()
            child = ind.y + nu * (mate.y - ind.y)
        child = _clip_round(np.asarray(child, dtype=float),
                            lower, upper, int_mask)
        offspring.append((partner, child))
    if offspring:
        fs = evaluate(np.stack([c for _, c in offspring]))
        for (partner, child), fc in zip(offspring, fs):
            mate = population[partner]
            if fc < mate.f:
                mate.y = child
                mate.f = float(fc)
                mate.last_gain = 0.0

    # crowding control
    scale = upper - lower
    live = scale > 0.0
    nscale = np.where(live, scale, 1.0)
    coords = np.stack([ind.y for ind in population])[:, live] \
        / nscale[live]
    order = sorted(range(n_pop), key=lambda i: (population[i].f, i))
    kept: list[int] = []
    relocate: list[int] = []
    for idx in order:
        if kept:
            d = coords[kept] - coords[idx]
            if float(np.min(np.sqrt(np.sum(d * d, axis=1)))) < threshold:
                relocate.append(idx)
                continue
        kept.append(idx)
    if relocate:
        cands = []
        for idx in relocate:
            ind = population[idx]
            side = ind.rng.random(ind.y.size) < 0.5
            b = np.where(side, lower, upper)
            nu = ind.rng.random(ind.y.size)
            child = nu * b + (1.0 - nu) * ind.y
            cands.append(_clip_round(child, lower, upper, int_mask))
        fs = evaluate(np.stack(cands))
        for idx, child, fc in zip(relocate, cands, fs):
            ind = population[idx]
            ind.y = child
            ind.f = float(fc)
            ind.rho = 1.0
            ind.last_gain = 0.0
    return relocate


# ----------------------------------------------------------------------
# evolutionary step
# ----------------------------------------------------------------------
@dataclass
class EvolveResult:
    trace_y: list
    trace_f: list
    archive: SolutionArchive
    n_evals: int
    generations: int

    def stacked(self):
        return np.vstack(self.trace_y), np.concatenate(self.trace_f)


def evolve(evaluate_many, lower, upper, params: SearchParams,
           seed_seq: np.random.SeedSequence, *, int_mask=None,
           budget: int | None = None,
           archive: SolutionArchive | None = None,
           decision_log: list | None = None) -> EvolveResult:
    """Run the evolutionary step on one box until budget or stall.

    evaluate_many maps an (m, n) array to m fitness values. The trace
    holds one population snapshot per generation; the archive collects
    distance-separated minima and its best value drives the stall test
    (relative improvement below stall_rel_tol across stall_generations).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    params.validate(n)
    if int_mask is not None:
        int_mask = np.asarray(int_mask, dtype=bool)
    if budget is None:
        budget = params.max_evals
    obj = (evaluate_many if isinstance(evaluate_many, _CountingObjective)
           else _CountingObjective(evaluate_many, budget))
    start_used = obj.used
    local_budget = min(budget, obj.remaining)
    if archive is None:
        archive = SolutionArchive(lower, upper, params.crowding_threshold,
                                  params.archive_capacity)

    streams = seed_seq.spawn(params.n_pop + 1)
    sched = np.random.default_rng(streams[0])

    def spent() -> int:
        return obj.used - start_used

    def can_spend() -> bool:
        return spent() < local_budget and obj.remaining > 0

    # initial population, uniform in the box
    ys = sched.uniform(lower, upper, (params.n_pop, n))
    if int_mask is not None and int_mask.any():
        for i in np.nonzero(int_mask)[0]:
            ys[:, i] = sched.integers(int(lower[i]), int(upper[i]) + 1,
                                      params.n_pop).astype(float)
    fs = obj(ys)
    population = [Individual(y=ys[i].copy(), f=float(fs[i]),
                             resources=params.resources_init,
                             rng=np.random.default_rng(streams[i + 1]))
                  for i in range(params.n_pop)]
    archive.offer_many(ys, fs)

    trace_y = [ys.copy()]
    trace_f = [np.asarray(fs, dtype=float).copy()]
    # the stall test watches this evolve's own best, not the shared
    # archive, so a fresh node gets its own convergence patience
    best_local = float(np.min(fs))
    best_hist = [best_local]
    generations = 0

    while can_spend():
        generations += 1
        order, ranks = rank_and_assign(population, params.n_e)
        if decision_log is not None:
            decision_log.append(("ranks", tuple(order)))
            decision_log.append(("roles", tuple(ind.role
                                                for ind in population)))
        improved_slots: list[int] = []

        # perception for the elite, batched one candidate per round
        machines = {}
        for idx in order[:params.n_e]:
            machines[idx] = _Perception(population[idx], lower, upper,
                                        int_mask)
        active = [idx for idx in order[:params.n_e]]
        while active and can_spend():
            slots = []
            cands = []
            for idx in active:
                cand = machines[idx].propose()
                if cand is not None:
                    slots.append(idx)
                    cands.append(cand)
            if not slots:
                break
            fvals = obj(np.stack(cands))
            for idx, fc in zip(slots, fvals):
                machines[idx].feed(float(fc))
            active = [idx for idx in slots if not machines[idx].done]
        for idx in order[:params.n_e]:
            ind = population[idx]
            machine = machines[idx]
            if machine._pending is not None:
                # budget ran out mid-pass; drop the unevaluated proposal
                machine._pending = None
            _apply_perception_outcome(ind, machine, n)
            found = machine.improved
            gain_increased = found and ind._gain > ind.last_gain
            ind.rho = update_radius(ind, found, gain_increased,
                                    ind._dymin, ranks[idx], params)
            ind.last_gain = ind._gain if found else 0.0
            if found:
                improved_slots.append(idx)
            if decision_log is not None:
                decision_log.append(("perceive", idx, found))

        # mutation of the flagged non-elite
        mut_slots = [idx for idx in order[params.n_e:]
                     if population[idx].role == "mutated"]
        if mut_slots and can_spend():
            cands = [_mutate(population[idx], lower, upper, int_mask)
                     for idx in mut_slots]
            fvals = obj(np.stack(cands))
            for idx, child, fc in zip(mut_slots, cands, fvals):
                ind = population[idx]
                if fc < ind.f:
                    improved_slots.append(idx)
                ind.y = child
                ind.f = float(fc)
                ind.rho = 1.0
                ind.last_gain = 0.0

        # communication and crowding control
        if improved_slots and can_spend():
            improved_slots.sort()
            communicate(population, improved_slots, lower, upper,
                        params.crowding_threshold, int_mask, obj)

        ys = np.stack([ind.y for ind in population])
        fs = np.array([ind.f for ind in population])
        changed = (fs != trace_f[-1]) | np.any(ys != trace_y[-1], axis=1)
        if changed.any():
            archive.offer_many(ys[changed], fs[changed])
        trace_y.append(ys)
        trace_f.append(fs)
        best_local = min(best_local, float(np.min(fs)))
        best_hist.append(best_local)

        lag = params.stall_generations
        if len(best_hist) > lag:
            ref = best_hist[-lag - 1]
            if (ref - best_hist[-1]) <= params.stall_rel_tol * max(
                    abs(ref), 1.0e-30):
                break

    return EvolveResult(trace_y=trace_y, trace_f=trace_f, archive=archive,
                        n_evals=spent(), generations=generations)


# ----------------------------------------------------------------------
# branching
# ----------------------------------------------------------------------
def _node_scores(xs, fs, inside, width_frac, n_eff, sigma):
    total = xs.shape[0]
    count = int(np.count_nonzero(inside))
    f_best = float(fs.min())
    f_worst = float(fs.max())
    omega = ((count / total)
             / max(width_frac, 1.0e-300) ** (1.0 / max(n_eff, 1)))
    if count == 0:
        phi = 1.0
    else:
        denom = f_worst - f_best
        phi = (float(fs[inside].mean()) - f_best) / denom if denom > 0 \
            else 0.0
    psi = sigma * omega + (1.0 - sigma) * phi
    return omega, phi, psi


def _safe_cut(value, lo, hi):
    """Keep cuts at least 5% of the edge away from either face."""
    width = hi - lo
    if value < lo + 0.05 * width or value > hi - 0.05 * width:
        return lo + 0.5 * width
    return value


def branch(node: Subdomain, trace_y, trace_f, params: SearchParams,
           int_mask=None, order_base: int = 0) -> list[Subdomain]:
    """Partition an explored box into three child leaves.

    Candidate cuts run through the worst sampled point on every
    non-degenerate real dimension; each half is scored by the weighted
    density-plus-fitness index and the winning dimension's pair is kept.
    The half holding the best point is cut once more at the best point,
    which yields exactly three leaves that tile the parent. Cuts landing
    within 5% of a face move to the edge midpoint.
    """
    xs = np.vstack(trace_y)
    fs = np.concatenate(trace_f)
    lower, upper = node.lower, node.upper
    ext = upper - lower
    cuttable = ext > 0.0
    if int_mask is not None:
        cuttable &= ~np.asarray(int_mask, dtype=bool)
    dims = np.nonzero(cuttable)[0]
    if dims.size == 0:
        return []
    n_eff = int(np.count_nonzero(ext > 0.0)
                - (np.count_nonzero(np.asarray(int_mask, dtype=bool)
                                    & (ext > 0.0))
                   if int_mask is not None else 0))
    n_eff = max(n_eff, 1)

    y_best = xs[int(np.argmin(fs))]
    y_worst = xs[int(np.argmax(fs))]

    best_score = -math.inf
    best_dim = -1
    best_cut = 0.0
    for i in dims:
        cut = _safe_cut(y_worst[i], lower[i], upper[i])
        wfrac_lo = (cut - lower[i]) / ext[i]
        for half, wfrac in ((0, wfrac_lo), (1, 1.0 - wfrac_lo)):
            if half == 0:
                inside = xs[:, i] <= cut
            else:
                inside = xs[:, i] > cut
            _, _, psi = _node_scores(xs, fs, inside, wfrac, n_eff,
                                     params.sigma)
            if psi > best_score:
                best_score = psi
                best_dim = int(i)
                best_cut = cut

    i = best_dim
    cut1 = best_cut

    def make_child(lo, hi, rank_order):
        sel = np.ones(xs.shape[0], dtype=bool)
        sel &= (xs[:, i] >= lo[i]) & (xs[:, i] <= hi[i])
        wfrac = (hi[i] - lo[i]) / ext[i]
        omega, phi, psi = _node_scores(xs, fs, sel, wfrac, n_eff,
                                       params.sigma)
        child = Subdomain(lower=lo, upper=hi, omega=omega, phi=phi,
                          psi=psi, depth=node.depth + 1,
                          order=order_base + rank_order)
        child.best_f = float(fs[sel].min()) if sel.any() else math.inf
        return child

    lo_a, hi_a = lower.copy(), upper.copy()
    hi_a[i] = cut1
    lo_b, hi_b = lower.copy(), upper.copy()
    lo_b[i] = cut1

    if params.four_leaf_branching and dims.size > 1:
        # experimental: second cut along the runner-up dimension through
        # the best point, giving a 2 x 2 grid of leaves
        second = [d for d in dims if d != i][0]
        cut2 = _safe_cut(y_best[second], lower[second], upper[second])
        children = []
        rank = 0
        for lo_i, hi_i in ((lo_a, hi_a), (lo_b, hi_b)):
            for side in (0, 1):
                lo = lo_i.copy()
                hi = hi_i.copy()
                if side == 0:
                    hi[second] = cut2
                else:
                    lo[second] = cut2
                children.append(make_child(lo, hi, rank))
                rank += 1
        return children

    if y_best[i] <= cut1:
        split_lo, split_hi, other = lo_a, hi_a, (lo_b, hi_b)
    else:
        split_lo, split_hi, other = lo_b, hi_b, (lo_a, hi_a)
    cut2 = _safe_cut(y_best[i], split_lo[i], split_hi[i])
    lo_c, hi_c = split_lo.copy(), split_hi.copy()
    hi_c[i] = cut2
    lo_d, hi_d = split_lo.copy(), split_hi.copy()
    lo_d[i] = cut2
    return [make_child(other[0], other[1], 0),
            make_child(lo_c, hi_c, 1),
            make_child(lo_d, hi_d, 2)]


# ----------------------------------------------------------------------
# full search
# ----------------------------------------------------------------------
@dataclass
class SearchResult:
    archive: SolutionArchive
    evals_search: int
    evals_polish: int
    nodes_explored: int
    branchings: int
    leaves: list = field(default_factory=list)

    @property
    def best(self):
        return self.archive.best


def run_search(problem, params: SearchParams,
               decision_log: list | None = None) -> SearchResult:
    """Evolutionary search over a ranked tree of subdomains.

    The root box is evolved, branched into three leaves, and the leaf
    with the highest qualification index is explored next; the loop ends
    when the evaluation budget is spent or branch_levels consecutive
    branchings pass without improving the archive best. Every archive
    entry is then polished with a bounded pattern search (integer
    components frozen). The union of explored and open leaves always
    tiles the original box.

    ``problem`` needs lower/upper bound arrays, evaluate_many, and
    optionally integer_mask (true for integer-valued components).
    """
    lower = np.asarray(problem.lower, dtype=float)
    upper = np.asarray(problem.upper, dtype=float)
    int_mask = getattr(problem, "integer_mask", None)
    if int_mask is not None:
        int_mask = np.asarray(int_mask, dtype=bool)
    params.validate(lower.size)

    obj = _CountingObjective(problem.evaluate_many, params.max_evals)
    archive = SolutionArchive(lower, upper, params.crowding_threshold,
                              params.archive_capacity)
    root_ss = np.random.SeedSequence(params.seed)
    node_evals = params.resolved_node_evals()

    root = Subdomain(lower=lower.copy(), upper=upper.copy(), order=0)
    queue: list[Subdomain] = [root]
    closed: list[Subdomain] = []
    nodes_explored = 0
    branchings = 0
    stall_branchings = 0
    order_counter = 1

    while queue and obj.remaining > 0:
        # best node first: highest qualification index, insertion order
        # as the deterministic tie-break
        queue.sort(key=lambda nd: (-nd.psi, nd.order))
        node = queue.pop(0)
        prev_best = archive.best_f
        result = evolve(obj, node.lower, node.upper, params,
                        root_ss.spawn(1)[0], int_mask=int_mask,
                        budget=min(node_evals, obj.remaining),
                        archive=archive, decision_log=decision_log)
        node.explored = True
        node.best_f = min(node.best_f, result.archive.best_f)
        nodes_explored += 1
        improved = archive.best_f < prev_best

        if params.branch_levels <= 0:
            closed.append(node)
            break
        # The stall streak gates tree growth: after branch_levels
        # consecutive branchings without improving the archive best no
        # further cuts are made, but open leaves keep being explored
        # until the budget runs out, and any later improvement re-opens
        # branching.
        if improved:
            stall_branchings = 0
        if stall_branchings < params.branch_levels:
            children = branch(node, result.trace_y, result.trace_f,
                              params, int_mask=int_mask,
                              order_base=order_counter)
            if decision_log is not None:
                if children:
                    moved = ((children[0].lower != node.lower)
                             | (children[0].upper != node.upper))
                    dim = int(np.nonzero(moved)[0][0])
                else:
                    dim = -1
                decision_log.append(("branch", nodes_explored, dim,
                                     len(children)))
            order_counter += max(len(children), 1)
            if children:
                branchings += 1
                queue.extend(children)
            else:
                closed.append(node)
            if not improved:
                stall_branchings += 1
        else:
            closed.append(node)

    leaves = closed + queue

    evals_polish = 0
    if params.polish and archive.entries:
        polished = []
        for f, y in archive.entries:
            y2, f2, used = local_refine(
                y, problem.evaluate_many, lower, upper,
                tol=params.polish_tol, int_mask=int_mask,
                max_evals=params.polish_max_evals, f0=f)
            evals_polish += used
            polished.append((f2, y2))
        rebuilt = SolutionArchive(lower, upper, params.crowding_threshold,
                                  params.archive_capacity)
        rebuilt.offer_many([y for _, y in polished],
                           [f for f, _ in polished])
        archive = rebuilt

    return SearchResult(archive=archive, evals_search=obj.used,
                        evals_polish=evals_polish,
                        nodes_explored=nodes_explored,
                        branchings=branchings, leaves=leaves)


@dataclass
class BoxProblem:
    """Adapter exposing a plain batch function as a searchable problem."""

    lower: np.ndarray
    upper: np.ndarray
    fn: callable
    integer_mask: np.ndarray = None
    name: str = "box"

    def evaluate_many(self, ys):
        return self.fn(np.atleast_2d(np.asarray(ys, dtype=float)))
