"""First-order and quasi-Newton optimizers on flat parameter vectors."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fracpinn.errors import TrainingError

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class AdamConfig:
    lr0: float = 1e-3
    decay_rate: float = 0.5
    decay_every: int = 3000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 8000

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay_rate must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")

    def lr(self, iteration: int) -> float:
        return self.lr0 * self.decay_rate ** (iteration // self.decay_every)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(x: np.ndarray, grad: np.ndarray, state: AdamState, iteration: int, cfg: AdamConfig) -> np.ndarray:
    """One bias-corrected Adam update; ``state`` is advanced in place."""
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise TrainingError(f"non-finite gradient at iteration {iteration} (coordinate {bad})", iteration)
    state.t += 1
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = state.m / (1.0 - cfg.beta1**state.t)
    v_hat = state.v / (1.0 - cfg.beta2**state.t)
    return x - cfg.lr(iteration) * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass(frozen=True)
class EarlyStopConfig:
    tol: float = 1e-8
    patience: int = 500

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("early-stop tol must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class EarlyStopper:
    """Fires once the relative improvement over the best loss stays below
    ``tol`` for ``patience`` consecutive checks."""

    def __init__(self, cfg: EarlyStopConfig):
        self.cfg = cfg
        self.best = math.inf
        self.stale = 0

    def update(self, loss: float) -> bool:
        if math.isfinite(self.best):
            improvement = (self.best - loss) / max(abs(self.best), 1e-300)
        else:
            improvement = math.inf
        if improvement < self.cfg.tol:
            self.stale += 1
        else:
            self.stale = 0
        self.best = min(self.best, loss)
        return self.stale >= self.cfg.patience


@dataclass(frozen=True)
class LineSearchConfig:
    c1: float = 1e-4
    c2: float = 0.9
    max_evals: int = 25

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 500
    gtol: float = 1e-12
    ftol: float = 1e-15
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iters: int
    n_evals: int
    status: str  # converged | max_iters | line_search_failed | stopped
    values: list[float]


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic matching values and slopes at ``a`` and ``b``."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    sq = d1 * d1 - ga * gb
    if sq < 0:
        return None
    d2 = math.copysign(math.sqrt(sq), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _interpolate(lo, flo, glo, hi, fhi, ghi):
    lo_b, hi_b = min(lo, hi), max(lo, hi)
    width = hi_b - lo_b
    t = _cubic_min(lo, flo, glo, hi, fhi, ghi)
    if t is None or not (lo_b + 0.1 * width <= t <= hi_b - 0.1 * width):
        t = 0.5 * (lo + hi)
    return t


def strong_wolfe(phi, f0: float, g0: float, step0: float, cfg: LineSearchConfig):
    """Line search satisfying the strong Wolfe conditions.

    ``phi(a)`` returns ``(f, slope, payload)``.  Returns
    ``(step, f, payload, n_evals)`` or ``None`` on failure.
    """
    evals = 0
    prev_a, prev_f, prev_g = 0.0, f0, g0
    a = step0
    a_max = 1e10
    while evals < cfg.max_evals:
        fa, ga, payload = phi(a)
        evals += 1
        if not math.isfinite(fa):
            # stepped into a non-finite region, shrink toward the last point
            a = 0.5 * (prev_a + a)
            continue
        if fa > f0 + cfg.c1 * a * g0 or (evals > 1 and fa >= prev_f):
            return _zoom(phi, f0, g0, prev_a, prev_f, prev_g, a, fa, ga, cfg, evals)
        if abs(ga) <= -cfg.c2 * g0:
            return a, fa, payload, evals
        if ga >= 0:
            return _zoom(phi, f0, g0, a, fa, ga, prev_a, prev_f, prev_g, cfg, evals)
        prev_a, prev_f, prev_g = a, fa, ga
        a = min(2.0 * a, a_max)
    return None


def _zoom(phi, f0, g0, lo, flo, glo, hi, fhi, ghi, cfg, evals):
    while evals < cfg.max_evals:
        a = _interpolate(lo, flo, glo, hi, fhi, ghi)
        fa, ga, payload = phi(a)
        evals += 1
        if not math.isfinite(fa) or fa > f0 + cfg.c1 * a * g0 or fa >= flo:
            hi, fhi, ghi = a, (fa if math.isfinite(fa) else math.inf), ga
        else:
            if abs(ga) <= -cfg.c2 * g0:
                return a, fa, payload, evals
            if ga * (hi - lo) >= 0:
                hi, fhi, ghi = lo, flo, glo
            lo, flo, glo = a, fa, ga
        if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
            break
    return None


def lbfgs_optimize(
    objective: Objective,
    x0: np.ndarray,
    cfg: LbfgsConfig = LbfgsConfig(),
    callback: Callable[[int, np.ndarray, float, np.ndarray], bool] | None = None,
) -> LbfgsResult:
    """Limited-memory BFGS with a strong-Wolfe line search.

    Only steps satisfying both Wolfe conditions are accepted, so the recorded
    objective values never increase.  ``callback(it, x, f, g)`` may return
    True to stop early.  A failed line search returns the best point so far
    with ``status="line_search_failed"``.
    """
    x = np.array(x0, dtype=float)
    f, g = objective(x)
    n_evals = 1
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise TrainingError("L-BFGS started from a non-finite point", 0)
    s_hist: deque[np.ndarray] = deque(maxlen=cfg.memory)
    y_hist: deque[np.ndarray] = deque(maxlen=cfg.memory)
    rho_hist: deque[float] = deque(maxlen=cfg.memory)
    values = [f]
    status = "max_iters"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if np.max(np.abs(g)) <= cfg.gtol:
            status = "converged"
            it -= 1
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if s_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            step0 = 1.0
        else:
            step0 = min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += s * (a - b)
        d = -q
        slope = float(g @ d)
        if not slope < 0:
            # lost descent; restart from steepest descent
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()
            d = -g
            slope = float(g @ d)
            step0 = min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))

        def phi(step, x=x, d=d):
            xs = x + step * d
            fs, gs = objective(xs)
            return fs, float(gs @ d) if np.all(np.isfinite(gs)) else math.nan, (xs, gs)

        found = strong_wolfe(phi, f, slope, step0, cfg.line_search)
        if found is None:
            log.warning("L-BFGS line search failed at iteration %d; keeping best point", it)
            status = "line_search_failed"
            it -= 1
            break
        step, f_new, (x_new, g_new), evals = found
        n_evals += evals
        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * float(y_vec @ y_vec):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)
        f_old = f
        x, f, g = x_new, f_new, g_new
        values.append(f)
        if callback is not None and callback(it, x, f, g):
            status = "stopped"
            break
        if abs(f_old - f) <= cfg.ftol * max(abs(f_old), abs(f), 1.0):
            status = "converged"
            break
    return LbfgsResult(x=x, f=f, grad=g, n_iters=it, n_evals=n_evals, status=status, values=values)
