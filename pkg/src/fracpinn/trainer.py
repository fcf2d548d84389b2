"""Staged PINN training: data pretraining at alpha = 1, then joint Adam + L-BFGS."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fracpinn.errors import ConsistencyError, TrainingError
from fracpinn.loss import LossBreakdown, LossWeights, ObservationSet, PinnProblem, loss_total, predict
from fracpinn.model import RATE_NAMES, EpidemicParams, ParamBounds, RawParams, SimplexState, unconstrain
from fracpinn.net import Network, init_xavier, save_checkpoint
from fracpinn.optim import (
    AdamConfig,
    AdamState,
    EarlyStopConfig,
    EarlyStopper,
    LbfgsConfig,
    adam_step,
    lbfgs_optimize,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "phase", "total", "data", "phys", "ic", "cons", "reg", "alpha", "beta", "sigma", "gamma", "mu")

# Fallback starting rates: midpoints of the Mpox literature ranges.
DEFAULT_INIT_RATES = {"beta": 0.2, "sigma": 0.1385, "gamma_r": 0.0535, "mu": 0.0155}


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    pretrain_iters: int = 2000
    pretrain_lr: float = 1e-3
    early_stop: EarlyStopConfig = field(default_factory=EarlyStopConfig)
    lambdas: LossWeights = field(default_factory=LossWeights)
    alpha_min: float = 0.5
    beta_max: float = 1.0
    rate_bounds: dict | None = None
    init_rates: dict | None = None
    alpha_init: float = 0.99
    hidden: tuple[int, ...] = (64, 64, 64)
    head: str = "softmax"
    colloc_n: int | None = None
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.pretrain_iters < 0:
            raise ConsistencyError("pretrain_iters must be >= 0")
        if not self.alpha_min < self.alpha_init < 1.0:
            raise ConsistencyError("alpha_init must lie strictly inside (alpha_min, 1)")

    @property
    def bounds(self) -> ParamBounds:
        return ParamBounds(self.alpha_min, self.beta_max, self.rate_bounds)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (1, *self.hidden, 5)

    def initial_raw(self) -> RawParams:
        bounds = self.bounds
        rates = dict(DEFAULT_INIT_RATES)
        for name in RATE_NAMES:
            box = bounds.box(name)
            if box is not None:
                rates[name] = 0.5 * (box[0] + box[1])
        if self.init_rates:
            rates.update(self.init_rates)
        return unconstrain(EpidemicParams(**rates, alpha=self.alpha_init), bounds)


@dataclass
class FitResult:
    params_hat: EpidemicParams
    raw: np.ndarray
    network: Network
    history: list[dict]
    phase_boundaries: list[int]
    stop_reason: str
    final: LossBreakdown
    problem: PinnProblem = field(repr=False)
    alpha_fixed: float | None = None
    tag: str = ""

    def trajectory(self) -> np.ndarray:
        """Network prediction on the full grid, shape ``(N + 1, 5)``."""
        return predict(self.network, self.problem)

    def to_json_dict(self, checkpoint_path: str | None = None) -> dict:
        p = self.params_hat
        return {
            "params": {"alpha": p.alpha, "beta": p.beta, "sigma": p.sigma, "gamma": p.gamma_r, "mu": p.mu},
            "stop_reason": self.stop_reason,
            "iterations": len(self.history),
            "phase_boundaries": self.phase_boundaries,
            "final_loss": self.final.as_dict(),
            "alpha_fixed": self.alpha_fixed,
            "tag": self.tag,
            "checkpoint": checkpoint_path,
        }

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for row in self.history:
                w.writerow([row["iter"], row["phase"]] + [f"{row[c]:.17g}" for c in LOG_COLUMNS[2:]])

    def write_json(self, path: str | Path, checkpoint_path: str | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(checkpoint_path), indent=2, sort_keys=True) + "\n")

    def save_checkpoint(self, path: str | Path) -> None:
        save_checkpoint(path, self.network, self.raw)


class _Run:
    """Mutable training state shared by the phases."""

    def __init__(self, problem: PinnProblem, cfg: TrainConfig, net: Network, raw: np.ndarray, alpha_fixed):
        self.problem = problem
        self.cfg = cfg
        self.net = net
        self.raw = raw
        self.alpha_fixed = alpha_fixed
        self.history: list[dict] = []
        self.initial_total: float | None = None
        self.last: LossBreakdown | None = None

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.net.theta, self.raw])

    def set_x(self, x: np.ndarray) -> None:
        self.net.theta[:] = x[: self.net.size]
        self.raw = np.array(x[self.net.size :])

    def evaluate(self, mode: str, x: np.ndarray | None = None):
        if x is not None:
            self.set_x(x)
        breakdown, g_theta, g_raw = loss_total(
            self.net, self.raw, self.problem, self.cfg.lambdas, mode, self.alpha_fixed
        )
        return breakdown, np.concatenate([g_theta, g_raw])

    def record(self, phase: str, breakdown: LossBreakdown) -> None:
        it = len(self.history)
        terms = breakdown.as_dict()
        for name, value in terms.items():
            if not math.isfinite(value):
                raise TrainingError(f"{name} loss became non-finite at iteration {it}", it, name)
        if self.initial_total is None:
            self.initial_total = max(breakdown.total, 1e-300)
        elif breakdown.total > self.cfg.divergence_factor * self.initial_total:
            worst = max(("data", "phys", "ic", "cons", "reg"), key=lambda k: terms[k])
            raise TrainingError(
                f"loss diverged at iteration {it}: total {breakdown.total:.3e} "
                f"exceeds {self.cfg.divergence_factor:.0e} x initial (largest term: {worst})",
                it,
                worst,
            )
        p = self.params(phase)
        if not self.cfg.bounds.contains(p) and self.alpha_fixed is None:
            raise TrainingError(f"parameters left the admissible region at iteration {it}", it)
        self.history.append(
            {"iter": it, "phase": phase, **terms, "alpha": p.alpha, "beta": p.beta,
             "sigma": p.sigma, "gamma": p.gamma_r, "mu": p.mu}
        )
        self.last = breakdown

    def params(self, phase: str = "joint") -> EpidemicParams:
        from fracpinn.model import constrain

        p = constrain(RawParams.from_array(self.raw), self.cfg.bounds)
        if phase == "pretrain":
            return p.replace(alpha=1.0)
        if self.alpha_fixed is not None:
            return p.replace(alpha=self.alpha_fixed)
        return p


def _adam_phase(run: _Run, phase: str, mode: str, n_iters: int, adam: AdamConfig, trainable: np.ndarray) -> bool:
    """Run Adam for up to ``n_iters`` steps; returns True if early stopping fired."""
    state = AdamState.zeros(int(trainable.sum()))
    stopper = EarlyStopper(run.cfg.early_stop)
    x = run.x
    for it in range(n_iters):
        breakdown, grad = run.evaluate(mode, x)
        run.record(phase, breakdown)
        if stopper.update(breakdown.total):
            return True
        try:
            x_new = adam_step(x[trainable], grad[trainable], state, it, adam)
        except TrainingError as exc:
            raise TrainingError(f"{exc} (phase {phase}, global iteration {len(run.history) - 1})",
                                len(run.history) - 1) from exc
        frozen = x[~trainable].copy()
        x = x.copy()
        x[trainable] = x_new
        assert np.array_equal(x[~trainable], frozen)
    run.set_x(x)
    return False


def fit(
    obs: ObservationSet,
    ic: SimplexState,
    cfg: TrainConfig,
    dt: float,
    n_steps: int | None = None,
    *,
    alpha_fixed: float | None = None,
    warm_start: tuple[Network, np.ndarray] | None = None,
    tag: str = "",
) -> FitResult:
    """Fit network and parameters to ``obs``.

    Phase 1 pretrains the network on the data and initial-condition terms
    with alpha held at 1.  Phase 2 releases alpha (unless ``alpha_fixed``)
    and minimizes the full loss with Adam, then L-BFGS over every trainable.
    The grid is ``t_j = j * dt`` up to ``n_steps`` (default: last observation).
    """
    if len(obs) == 0:
        raise ConsistencyError("cannot fit without observations")
    if ic.e == 0.0 and ic.i == 0.0:
        raise ConsistencyError("disease-free initial state: the data carry no signal about the rates")
    if n_steps is None:
        n_steps = int(round(obs.times[-1] / dt))
    if alpha_fixed is not None and not cfg.alpha_min < alpha_fixed <= 1.0:
        raise ConsistencyError(f"alpha_fixed={alpha_fixed} outside (alpha_min, 1]")
    problem = PinnProblem(obs, ic, dt, n_steps, cfg.bounds, cfg.colloc_n)

    if warm_start is not None:
        net, raw = warm_start[0].copy(), np.array(warm_start[1], dtype=float)
    else:
        net = init_xavier(cfg.layer_dims, cfg.seed, cfg.head)
        raw = cfg.initial_raw().as_array()
    run = _Run(problem, cfg, net, raw, alpha_fixed)
    n_total = net.size + 5
    boundaries: list[int] = []

    if warm_start is None and cfg.pretrain_iters > 0:
        # only network weights move while alpha is held at 1
        trainable = np.zeros(n_total, dtype=bool)
        trainable[: net.size] = True
        pre_adam = AdamConfig(lr0=cfg.pretrain_lr, decay_rate=1.0, decay_every=1, beta1=cfg.adam.beta1,
                              beta2=cfg.adam.beta2, eps=cfg.adam.eps, max_iters=cfg.pretrain_iters)
        z_alpha = run.raw[4]
        _adam_phase(run, "pretrain", "pretrain", cfg.pretrain_iters, pre_adam, trainable)
        assert run.raw[4] == z_alpha
    boundaries.append(len(run.history))

    trainable = np.ones(n_total, dtype=bool)
    if alpha_fixed is not None:
        trainable[-1] = False
    stop_reason = "max_iters"
    if _adam_phase(run, "adam", "joint", cfg.adam.max_iters, cfg.adam, trainable):
        stop_reason = "early_stop"
    boundaries.append(len(run.history))

    if cfg.lbfgs.max_iters > 0:
        stopper = EarlyStopper(cfg.early_stop)
        cache = {}

        def objective(x):
            x_full = run.x
            x_full[trainable] = x
            breakdown, grad = run.evaluate("joint", x_full)
            cache["last"] = breakdown
            return breakdown.total, grad[trainable]

        def callback(it, x, f, g):
            x_full = run.x
            x_full[trainable] = x
            run.set_x(x_full)
            run.record("lbfgs", cache["last"] if cache["last"].total == f else run.evaluate("joint")[0])
            return stopper.update(f)

        x0 = run.x[trainable]
        result = lbfgs_optimize(objective, x0, cfg.lbfgs, callback)
        x_full = run.x
        x_full[trainable] = result.x
        run.set_x(x_full)
        stop_reason = {"stopped": "early_stop", "converged": "converged"}.get(result.status, stop_reason)
        if result.status == "max_iters":
            stop_reason = "max_iters"
        elif result.status == "line_search_failed":
            stop_reason = "converged"
    boundaries.append(len(run.history))

    final, _ = run.evaluate("joint")
    params_hat = run.params("joint")
    return FitResult(
        params_hat=params_hat,
        raw=run.raw.copy(),
        network=run.net,
        history=run.history,
        phase_boundaries=boundaries,
        stop_reason=stop_reason,
        final=final,
        problem=problem,
        alpha_fixed=alpha_fixed,
        tag=tag,
    )
