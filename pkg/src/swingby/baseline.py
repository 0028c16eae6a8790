"""Latin-hypercube multistart with derivative-free local refinement.

The comparison method for the evolutionary search, and the source of its
final polish: stratified sampling over the box, then a bounded compass
pattern search from the best samples. The pattern search avoids
finite differencing through the kinks the Lambert iterations leave in
the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def latin_hypercube(n_samples: int, lower, upper,
                    rng: np.random.Generator) -> np.ndarray:
    """Stratified uniform samples: one point per stratum per dimension."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.size
    u = (rng.permuted(np.tile(np.arange(n_samples, dtype=float),
                              (n, 1)), axis=1).T
         + rng.random((n_samples, n))) / n_samples
    return lower + u * (upper - lower)


def local_refine(y0, evaluate_many, lower, upper, tol: float = 1e-6,
                 int_mask=None, max_evals: int = 10_000,
                 f0: float | None = None):
    """Bounded compass pattern search from y0.

    Polls +/- one step along every free dimension (normalized initial
    step 5% of each edge, contraction 0.5), moves to the best improving
    poll, and stops when the normalized step falls below tol or the
    evaluation budget runs out. Integer components stay frozen. Never
    returns a point worse than the start.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    y = np.clip(np.asarray(y0, dtype=float).copy(), lower, upper)
    scale = upper - lower
    free = scale > 0.0
    if int_mask is not None:
        free &= ~np.asarray(int_mask, dtype=bool)
    dims = np.nonzero(free)[0]
    used = 0
    if f0 is None:
        fy = float(evaluate_many(y[None, :])[0])
        used = 1
    else:
        fy = float(f0)
    if dims.size == 0:
        return y, fy, used

    step = 0.05
    while step >= tol and used < max_evals:
        polls = []
        for i in dims:
            h = step * scale[i]
            if y[i] + h <= upper[i]:
                p = y.copy()
                p[i] += h
                polls.append(p)
            if y[i] - h >= lower[i]:
                p = y.copy()
                p[i] -= h
                polls.append(p)
        if not polls:
            step *= 0.5
            continue
        if used + len(polls) > max_evals:
            polls = polls[:max_evals - used]
            if not polls:
                break
        batch = np.stack(polls)
        fs = evaluate_many(batch)
        used += len(polls)
        k = int(np.argmin(fs))
        if fs[k] < fy:
            fy = float(fs[k])
            y = batch[k]
        else:
            step *= 0.5
    return y, fy, used


@dataclass
class MultistartReport:
    """Aggregate of a multistart experiment."""

    samples_drawn: int
    evaluations: int
    minima: list = field(default_factory=list)   # (f, y), ascending
    run_best: list = field(default_factory=list)  # best f per run

    @property
    def best(self):
        return self.minima[0] if self.minima else None

    @property
    def best_f(self) -> float:
        return self.minima[0][0] if self.minima else math.inf


def multistart(problem, n_samples: int, n_best: int, n_runs: int,
               seed: int = 0, tol: float = 1e-6,
               refine_max_evals: int = 10_000,
               max_evals: int | None = None,
               crowding_threshold: float = 1e-3) -> MultistartReport:
    """Repeated stratified sampling plus local refinement of the best.

    Per run: draw n_samples Latin-hypercube points, evaluate, refine the
    n_best with the pattern search. Minima are aggregated across runs
    and deduplicated by normalized distance. An optional max_evals stops
    the experiment once the total evaluation budget is spent.
    """
    if n_best > n_samples:
        raise ValueError("n_best must not exceed n_samples")
    lower = np.asarray(problem.lower, dtype=float)
    upper = np.asarray(problem.upper, dtype=float)
    int_mask = getattr(problem, "integer_mask", None)
    if int_mask is not None:
        int_mask = np.asarray(int_mask, dtype=bool)
    scale = np.where(upper > lower, upper - lower, 1.0)
    live = upper > lower

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    minima: list[tuple[float, np.ndarray]] = []
    run_best: list[float] = []
    drawn = 0
    used = 0

    def budget_left() -> int:
        return (max_evals - used) if max_evals is not None else (1 << 62)

    for _ in range(n_runs):
        if budget_left() <= 0:
            break
        ys = latin_hypercube(n_samples, lower, upper, rng)
        if int_mask is not None and int_mask.any():
            for i in np.nonzero(int_mask)[0]:
                ys[:, i] = np.clip(np.round(ys[:, i]), lower[i], upper[i])
        take = min(len(ys), budget_left())
        ys = ys[:take]
        fs = np.asarray(problem.evaluate_many(ys), dtype=float)
        drawn += take
        used += take
        best_this_run = math.inf
        order = np.argsort(fs, kind="stable")[:n_best]
        for k in order:
            if budget_left() <= 0:
                break
            y_ref, f_ref, spent = local_refine(
                ys[k], problem.evaluate_many, lower, upper, tol=tol,
                int_mask=int_mask,
                max_evals=min(refine_max_evals, budget_left()),
                f0=float(fs[k]))
            used += spent
            best_this_run = min(best_this_run, f_ref)
            for i, (fe, ye) in enumerate(minima):
                d = (y_ref - ye) / scale
                if math.sqrt(float(np.sum(d[live] ** 2))) \
                        <= crowding_threshold:
                    if f_ref < fe:
                        minima[i] = (f_ref, y_ref)
                    break
            else:
                minima.append((f_ref, y_ref))
        if math.isfinite(best_this_run):
            run_best.append(best_this_run)

    minima.sort(key=lambda e: e[0])
    return MultistartReport(samples_drawn=drawn, evaluations=used,
                            minima=minima, run_best=run_best)
