"""Forward simulation of the normalized fractional SEIRD system.

The L1 relation at node ``n`` is solved for ``x_n``:

    x_n = x_{n-1} - sum_{k=1}^{n-1} (c_k/c_0) (x_{n-k} - x_{n-k-1}) + (dt**alpha / c_0) F(x_*)

with ``x_* = x_{n-1}`` (explicit) or ``x_* = x_n`` (implicit, by fixed-point
iteration).  No projection back onto the simplex is applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from fracpinn.errors import DomainError, NonConvergenceError, SingularityError
from fracpinn.fracops import l1_weights
from fracpinn.model import COMPARTMENTS, SINGULARITY_GUARD, EpidemicParams, SimplexState, rhs


@dataclass(frozen=True)
class SolverConfig:
    scheme: Literal["implicit", "explicit"] = "implicit"
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 50

    def __post_init__(self):
        if self.scheme not in ("implicit", "explicit"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if not self.fixed_point_tol > 0:
            raise DomainError("fixed_point_tol must be > 0")
        if self.fixed_point_max_iter < 1:
            raise DomainError("fixed_point_max_iter must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """States on the grid ``t_j = j * dt``; ``states`` has shape ``(N + 1, 5)``."""

    dt: float
    states: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt

    def column(self, name: str) -> np.ndarray:
        return self.states[:, COMPARTMENTS.index(name)]

    def to_csv(self, path: str | Path) -> None:
        """Write ``t,s,e,i,r,d`` rows at 17 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t",) + COMPARTMENTS)
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        dt = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 1.0
        return cls(dt=dt, states=data[:, 1:])


def _check_inputs(ic: SimplexState, dt: float, n_steps: int) -> np.ndarray:
    if not (np.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be finite and positive, got {dt!r}")
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    if not isinstance(ic, SimplexState):
        ic = SimplexState.from_array(ic)
    return ic.as_array()


def _guard(x: np.ndarray, n: int) -> None:
    if 1.0 - x[4] < SINGULARITY_GUARD:
        raise SingularityError(f"d reached {x[4]!r} at step {n}")


def simulate(
    ic: SimplexState,
    params: EpidemicParams,
    dt: float,
    n_steps: int,
    cfg: SolverConfig = SolverConfig(),
) -> Trajectory:
    """Integrate the fractional system with the L1 scheme at order ``params.alpha``."""
    x0 = _check_inputs(ic, dt, n_steps)
    stencil = l1_weights(params.alpha, dt, n_steps)
    ratios = stencil.weights / stencil.weights[0]
    h = dt**params.alpha / stencil.weights[0]

    states = np.empty((n_steps + 1, 5))
    states[0] = x0
    diffs = np.empty((n_steps, 5))  # diffs[m-1] = x_m - x_{m-1}
    implicit = cfg.scheme == "implicit"
    for n in range(1, n_steps + 1):
        prev = states[n - 1]
        if n > 1:
            # sum_{k=1}^{n-1} b_k * diffs[n-k-1]
            memory = ratios[1:n] @ diffs[n - 2 :: -1]
            base = prev - memory
        else:
            base = prev.copy()
        x = base + h * rhs(prev, params)
        if implicit:
            for it in range(cfg.fixed_point_max_iter):
                _guard(x, n)
                x_new = base + h * rhs(x, params)
                change = np.max(np.abs(x_new - x))
                x = x_new
                if change <= cfg.fixed_point_tol:
                    break
            else:
                raise NonConvergenceError(
                    f"fixed-point iteration stalled at step {n} (last change {change:.3e})"
                )
        _guard(x, n)
        states[n] = x
        diffs[n - 1] = x - prev
    return Trajectory(dt=float(dt), states=states)


def simulate_classical_rk4(
    ic: SimplexState, params: EpidemicParams, dt: float, n_steps: int
) -> Trajectory:
    """Classical fourth-order Runge-Kutta for the integer-order system (alpha ignored)."""
    x = _check_inputs(ic, dt, n_steps)
    states = np.empty((n_steps + 1, 5))
    states[0] = x
    for n in range(1, n_steps + 1):
        k1 = rhs(x, params)
        k2 = rhs(x + 0.5 * dt * k1, params)
        k3 = rhs(x + 0.5 * dt * k2, params)
        k4 = rhs(x + dt * k3, params)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _guard(x, n)
        states[n] = x
    return Trajectory(dt=float(dt), states=states)


def peak_time(traj: Trajectory) -> float:
    """Time of the largest infectious fraction (earliest node on ties)."""
    if len(traj.states) == 0:
        raise DomainError("empty trajectory")
    return float(np.argmax(traj.column("i")) * traj.dt)


def peak_height(traj: Trajectory) -> float:
    return float(np.max(traj.column("i")))
