"""Composite PINN loss and its exact gradient.

All terms are evaluated on a uniform grid ``t_j = j * dt``, ``j = 0..N``.
The network sees scaled time ``t / T`` with ``T = N * dt``.  Collocation
nodes are grid nodes ``1..colloc_n``; observation times must be grid nodes.

Each ``*_term`` function works on the array of network outputs and returns
the value together with its cotangent, so :func:`loss_total` can chain them
through one reverse sweep of the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Literal

import numpy as np

from fracpinn.errors import ConsistencyError, GridMismatchError
from fracpinn.fracops import L1Stencil, caputo_l1_all, caputo_l1_all_vjp, l1_weights
from fracpinn.model import (
    COMPARTMENTS,
    EpidemicParams,
    ParamBounds,
    RawParams,
    SimplexState,
    constrain,
    constrain_grad,
    rhs,
    rhs_jacobian,
)
from fracpinn.net import Network, backward, forward

TERMS = ("data", "phys", "ic", "cons", "reg")


@dataclass(frozen=True)
class LossWeights:
    lambda_data: float = 1.0
    lambda_phys: float = 1.0
    lambda_ic: float = 10.0
    lambda_cons: float = 0.0
    lambda_reg_theta: float = 1e-6
    lambda_reg_params: float = 0.0

    def __post_init__(self):
        vals = [getattr(self, f.name) for f in fields(self)]
        if any(not (math.isfinite(v) and v >= 0) for v in vals):
            raise ConsistencyError("loss weights must be finite and >= 0")
        if not any(v > 0 for v in vals):
            raise ConsistencyError("at least one loss weight must be positive")

    def with_disabled(self, terms) -> "LossWeights":
        key = {"phys": "lambda_phys", "cons": "lambda_cons", "ic_term": "lambda_ic", "ic": "lambda_ic",
               "data": "lambda_data"}
        changes = {}
        for term in terms:
            if term == "reg":
                changes["lambda_reg_theta"] = 0.0
                changes["lambda_reg_params"] = 0.0
            elif term in key:
                changes[key[term]] = 0.0
            else:
                raise ConsistencyError(f"unknown loss term {term!r}")
        return LossWeights(**{**self.__dict__, **changes})


@dataclass(frozen=True)
class ObservationSet:
    """Observed fractions; ``values`` is ``(M, 5)`` with NaN where unobserved.

    With ``strict`` (the default) observed values must lie in ``[0, 1]``;
    unclipped noisy data is built with ``strict=False``.
    """

    times: np.ndarray
    values: np.ndarray
    observed_mask: tuple[bool, bool, bool, bool, bool] = (True,) * 5
    strict: bool = True

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(len(times), 5)
        mask = tuple(bool(m) for m in self.observed_mask)
        if len(mask) != 5:
            raise ConsistencyError("observed_mask needs five entries")
        if np.any(np.diff(times) <= 0):
            raise ConsistencyError("observation times must be strictly increasing")
        if len(times) and times[0] < 0:
            raise ConsistencyError("observation times must be >= 0")
        obs = values[:, list(np.flatnonzero(mask))]
        if np.any(~np.isfinite(obs)):
            raise ConsistencyError("observed compartments contain missing values")
        if self.strict and np.any((obs < 0) | (obs > 1)):
            raise ConsistencyError("observed values must lie in [0, 1]")
        values = values.copy()
        values[:, ~np.array(mask)] = np.nan
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed_mask", mask)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def mask_array(self) -> np.ndarray:
        return np.array(self.observed_mask)

    @property
    def observed_names(self) -> tuple[str, ...]:
        return tuple(c for c, m in zip(COMPARTMENTS, self.observed_mask) if m)

    def grid_indices(self, dt: float) -> np.ndarray:
        idx = np.rint(self.times / dt).astype(int)
        if np.any(np.abs(idx * dt - self.times) > 1e-9 * np.maximum(1.0, self.times)):
            raise GridMismatchError(f"observation times are not nodes of the dt={dt} grid")
        return idx


@dataclass(frozen=True)
class LossBreakdown:
    data: float
    phys: float
    ic: float
    cons: float
    reg: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class PinnProblem:
    """Everything the loss needs besides the trainables."""

    obs: ObservationSet
    ic: SimplexState
    dt: float
    n_steps: int
    bounds: ParamBounds = ParamBounds()
    colloc_n: int | None = None
    obs_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.obs) == 0:
            raise ConsistencyError("no observations")
        if not (self.dt > 0 and self.n_steps >= 1):
            raise GridMismatchError("grid needs dt > 0 and at least one step")
        idx = self.obs.grid_indices(self.dt)
        if idx[-1] > self.n_steps:
            raise GridMismatchError("observations extend beyond the grid horizon")
        colloc = self.n_steps if self.colloc_n is None else int(self.colloc_n)
        if not 1 <= colloc <= self.n_steps:
            raise GridMismatchError(f"colloc_n must lie in 1..{self.n_steps}")
        object.__setattr__(self, "colloc_n", colloc)
        object.__setattr__(self, "obs_index", idx)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def scaled_times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_steps


# ---------------------------------------------------------------------------
# individual terms on network outputs


def data_term(outputs: np.ndarray, obs_index: np.ndarray, obs: ObservationSet):
    """Mean over observation times of the masked squared error."""
    if len(obs) == 0:
        raise ConsistencyError("no observations")
    mask = obs.mask_array
    resid = np.zeros((len(obs), 5))
    resid[:, mask] = outputs[obs_index][:, mask] - obs.values[:, mask]
    value = float(np.sum(resid**2)) / len(obs)
    cot = np.zeros_like(outputs)
    np.add.at(cot, obs_index, 2.0 * resid / len(obs))
    return value, cot


def physics_term(outputs: np.ndarray, stencil: L1Stencil, params: EpidemicParams, colloc_n: int):
    """Mean squared L1 residual over nodes ``1..colloc_n``.

    Returns ``(value, cot_outputs, d_alpha, d_rates)``.
    """
    n_nodes = outputs.shape[0]
    if stencil.n_max < n_nodes - 1:
        raise GridMismatchError("stencil shorter than the grid")
    used = outputs[: colloc_n + 1]
    frac = caputo_l1_all(used, stencil)
    state = used[1:]
    resid = frac - rhs(state, params)
    value = float(np.sum(resid**2)) / colloc_n

    g = 2.0 * resid / colloc_n
    cot_used, d_alpha = caputo_l1_all_vjp(g, used, stencil)
    js, jr = rhs_jacobian(state, params)
    cot_used[1:] -= np.einsum("ni,nij->nj", g, js)
    d_rates = -np.einsum("ni,nij->j", g, jr)
    cot = np.zeros_like(outputs)
    cot[: colloc_n + 1] = cot_used
    return value, cot, d_alpha, d_rates


def ic_term(outputs: np.ndarray, ic: SimplexState):
    diff = outputs[0] - ic.as_array()
    cot = np.zeros_like(outputs)
    cot[0] = 2.0 * diff
    return float(np.sum(diff**2)), cot


def conservation_term(outputs: np.ndarray, colloc_n: int):
    """Mean of ``(sum of compartments - 1)**2`` over nodes ``1..colloc_n``."""
    excess = outputs[1 : colloc_n + 1].sum(axis=1) - 1.0
    cot = np.zeros_like(outputs)
    cot[1 : colloc_n + 1] = (2.0 * excess / colloc_n)[:, None]
    return float(np.sum(excess**2)) / colloc_n, cot


def reg_term(net: Network, raw: np.ndarray, lambdas: LossWeights):
    """``lambda_theta * ||W||^2 + lambda_params * ||z||^2`` and its gradients."""
    wmask = net.weight_mask()
    w = np.where(wmask, net.theta, 0.0)
    value = lambdas.lambda_reg_theta * float(w @ w) + lambdas.lambda_reg_params * float(raw @ raw)
    return value, 2.0 * lambdas.lambda_reg_theta * w, 2.0 * lambdas.lambda_reg_params * raw


# ---------------------------------------------------------------------------
# network-level wrappers


def predict(net: Network, problem: PinnProblem) -> np.ndarray:
    """Network outputs on every grid node, shape ``(N + 1, 5)``."""
    return forward(net, problem.scaled_times)[0]


def loss_data(net: Network, problem: PinnProblem) -> float:
    return data_term(predict(net, problem), problem.obs_index, problem.obs)[0]


def loss_physics(net: Network, stencil: L1Stencil, params: EpidemicParams, problem: PinnProblem) -> float:
    if not math.isclose(stencil.dt, problem.dt, rel_tol=1e-12):
        raise GridMismatchError("stencil dt differs from the problem grid")
    return physics_term(predict(net, problem), stencil, params, problem.colloc_n)[0]


def loss_ic(net: Network, ic: SimplexState) -> float:
    return ic_term(forward(net, np.array([0.0]))[0], ic)[0]


def loss_conservation(net: Network, problem: PinnProblem) -> float:
    return conservation_term(predict(net, problem), problem.colloc_n)[0]


def loss_reg(net: Network, raw: RawParams, lambdas: LossWeights) -> float:
    return reg_term(net, raw.as_array(), lambdas)[0]


def current_params(raw, bounds: ParamBounds, alpha_fixed: float | None = None) -> EpidemicParams:
    raw = raw if isinstance(raw, RawParams) else RawParams.from_array(raw)
    params = constrain(raw, bounds)
    if alpha_fixed is not None:
        params = params.replace(alpha=float(alpha_fixed))
    return params


def loss_total(
    net: Network,
    raw,
    problem: PinnProblem,
    lambdas: LossWeights,
    mode: Literal["pretrain", "joint"] = "joint",
    alpha_fixed: float | None = None,
) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """Weighted loss with gradients ``(breakdown, grad_theta, grad_raw)``.

    ``pretrain`` sums only the data and initial-condition terms, with alpha
    held at 1.  In ``joint`` mode all five terms are summed; ``alpha_fixed``
    pins alpha (its raw coordinate then receives no gradient).
    """
    raw = np.asarray(raw.as_array() if isinstance(raw, RawParams) else raw, dtype=float)
    if mode not in ("pretrain", "joint"):
        raise ValueError(f"unknown mode {mode!r}")
    outputs, tape = forward(net, problem.scaled_times)
    grad_raw = np.zeros(5)

    data, cot_data = data_term(outputs, problem.obs_index, problem.obs)
    ic, cot_ic = ic_term(outputs, problem.ic)
    cot = lambdas.lambda_data * cot_data + lambdas.lambda_ic * cot_ic
    phys = cons = reg = 0.0
    grad_theta_extra = 0.0

    if mode == "joint":
        params = current_params(raw, problem.bounds, alpha_fixed)
        stencil = l1_weights(params.alpha, problem.dt, problem.n_steps)
        phys, cot_phys, d_alpha, d_rates = physics_term(outputs, stencil, params, problem.colloc_n)
        cons, cot_cons = conservation_term(outputs, problem.colloc_n)
        reg, grad_theta_extra, grad_raw_reg = reg_term(net, raw, lambdas)
        cot += lambdas.lambda_phys * cot_phys + lambdas.lambda_cons * cot_cons

        jac = constrain_grad(RawParams.from_array(raw), problem.bounds)
        grad_raw[:4] = lambdas.lambda_phys * d_rates * jac[:4]
        if alpha_fixed is None:
            grad_raw[4] = lambdas.lambda_phys * d_alpha * jac[4]
        grad_raw += grad_raw_reg
        if alpha_fixed is not None:
            grad_raw[4] = 0.0

    total = (
        lambdas.lambda_data * data
        + lambdas.lambda_phys * phys
        + lambdas.lambda_ic * ic
        + lambdas.lambda_cons * cons
        + reg
    )
    grad_theta, _ = backward(net, tape, cot)
    grad_theta = grad_theta + grad_theta_extra
    return LossBreakdown(data, phys, ic, cons, reg, total), grad_theta, grad_raw
