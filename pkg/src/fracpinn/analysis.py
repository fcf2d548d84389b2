"""Identifiability and uncertainty tooling built on repeated fits.

* :func:`profile_alpha` refits with alpha frozen on a grid of values.
* :func:`bootstrap` runs a residual bootstrap around a point fit.
* :func:`ablation` refits with selected loss terms switched off.

Independent fits can be spread over worker processes with ``jobs > 1``;
every fit owns its seed, so results do not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fracpinn.errors import ConsistencyError, FracPinnError
from fracpinn.loss import ObservationSet
from fracpinn.model import EpidemicParams, SimplexState
from fracpinn.trainer import FitResult, TrainConfig, fit

log = logging.getLogger(__name__)

PARAM_KEYS = ("alpha", "beta", "sigma", "gamma", "mu")
ABLATABLE = ("phys", "cons", "ic_term", "reg")


def _param_vector(p: EpidemicParams) -> np.ndarray:
    return np.array([p.alpha, p.beta, p.sigma, p.gamma_r, p.mu])


@dataclass(frozen=True)
class ProfilePoint:
    alpha_fixed: float
    refit_params: EpidemicParams | None
    terminal_loss: float
    error: str | None = None


@dataclass(frozen=True)
class BootstrapSummary:
    n_replicates: int
    n_failed: int
    point: dict[str, float]
    lower: dict[str, float]
    upper: dict[str, float]
    replicates: list[dict[str, float]]

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")


def _map(fn, items: Sequence, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _profile_one(args) -> ProfilePoint:
    obs, ic, cfg, dt, n_steps, alpha = args
    try:
        res = fit(obs, ic, cfg, dt, n_steps, alpha_fixed=alpha, tag=f"profile:{alpha:g}")
    except FracPinnError as exc:
        log.warning("profile point alpha=%g failed: %s", alpha, exc)
        return ProfilePoint(alpha, None, float("nan"), str(exc))
    return ProfilePoint(alpha, res.params_hat, res.final.total)


def profile_alpha(
    obs: ObservationSet,
    ic: SimplexState,
    cfg: TrainConfig,
    alpha_grid: Iterable[float],
    dt: float,
    n_steps: int | None = None,
    jobs: int = 1,
) -> list[ProfilePoint]:
    """Terminal loss of fits with alpha frozen at each grid value.

    Point ``k`` is trained with seed ``cfg.seed + k``.  Failed fits are
    recorded with ``error`` set instead of aborting the sweep.
    """
    grid = [float(a) for a in alpha_grid]
    for a in grid:
        if not cfg.alpha_min < a <= 1.0:
            raise ConsistencyError(f"profile value {a} outside (alpha_min, 1]")
    tasks = [
        (obs, ic, dataclasses.replace(cfg, seed=cfg.seed + k), dt, n_steps, a) for k, a in enumerate(grid)
    ]
    return _map(_profile_one, tasks, jobs)


def write_profile_csv(points: Sequence[ProfilePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("alpha", "loss", "beta", "sigma", "gamma", "mu"))
        for pt in points:
            p = pt.refit_params
            rates = ["", "", "", ""] if p is None else [f"{v:.17g}" for v in (p.beta, p.sigma, p.gamma_r, p.mu)]
            w.writerow([f"{pt.alpha_fixed:.17g}", f"{pt.terminal_loss:.17g}"] + rates)


def _refit_replicate(args):
    obs, ic, cfg, dt, n_steps, warm = args
    try:
        res = fit(obs, ic, cfg, dt, n_steps, warm_start=warm, tag="bootstrap")
    except FracPinnError as exc:
        log.warning("bootstrap replicate failed: %s", exc)
        return None
    return _param_vector(res.params_hat)


def bootstrap(
    obs: ObservationSet,
    ic: SimplexState,
    cfg: TrainConfig,
    n_replicates: int,
    seed: int,
    dt: float,
    n_steps: int | None = None,
    jobs: int = 1,
    point_fit: FitResult | None = None,
) -> BootstrapSummary:
    """Residual bootstrap with percentile 95% intervals.

    Residuals at the observation times are resampled by row (all observed
    compartments of one time point travel together) and added back onto the
    fitted values.  Replicates are warm-started from the point fit.  The
    point estimate joins the replicate cloud before the percentiles are
    taken, and the interval is widened to contain it if needed.
    """
    if n_replicates < 2:
        raise ConsistencyError("need at least two bootstrap replicates")
    if point_fit is None:
        point_fit = fit(obs, ic, cfg, dt, n_steps, tag="bootstrap:point")
    fitted = point_fit.trajectory()[point_fit.problem.obs_index]
    mask = obs.mask_array
    resid = np.where(mask, obs.values - fitted, 0.0)

    rng = np.random.default_rng(seed)
    tasks = []
    for k in range(n_replicates):
        rows = rng.integers(0, len(obs), size=len(obs))
        values = np.where(mask, fitted + resid[rows], np.nan)
        rep_obs = ObservationSet(obs.times, values, obs.observed_mask, strict=False)
        rep_cfg = dataclasses.replace(cfg, seed=seed + k + 1)
        warm = (point_fit.network, point_fit.raw)
        tasks.append((rep_obs, ic, rep_cfg, dt, point_fit.problem.n_steps, warm))
    results = _map(_refit_replicate, tasks, jobs)
    cloud = [r for r in results if r is not None]
    n_failed = n_replicates - len(cloud)
    if n_failed > n_replicates / 2:
        raise FracPinnError(f"{n_failed} of {n_replicates} bootstrap replicates failed")

    point = _param_vector(point_fit.params_hat)
    stacked = np.vstack(cloud + [point])
    lo = np.minimum(np.percentile(stacked, 2.5, axis=0), point)
    hi = np.maximum(np.percentile(stacked, 97.5, axis=0), point)
    return BootstrapSummary(
        n_replicates=n_replicates,
        n_failed=n_failed,
        point=dict(zip(PARAM_KEYS, point.tolist())),
        lower=dict(zip(PARAM_KEYS, lo.tolist())),
        upper=dict(zip(PARAM_KEYS, hi.tolist())),
        replicates=[dict(zip(PARAM_KEYS, r.tolist())) for r in cloud],
    )


def ablation(
    obs: ObservationSet,
    ic: SimplexState,
    cfg: TrainConfig,
    disable: Iterable[str],
    dt: float,
    n_steps: int | None = None,
) -> FitResult:
    """Fit with the named loss terms given zero weight.

    Valid names are ``phys``, ``cons``, ``ic_term`` and ``reg``.
    """
    disable = sorted(set(disable))
    unknown = set(disable) - set(ABLATABLE)
    if unknown:
        raise ConsistencyError(f"cannot ablate {sorted(unknown)}; choose from {ABLATABLE}")
    ablated = dataclasses.replace(cfg, lambdas=cfg.lambdas.with_disabled(disable))
    tag = "ablate:" + ("+".join(disable) if disable else "none")
    return fit(obs, ic, ablated, dt, n_steps, tag=tag)
