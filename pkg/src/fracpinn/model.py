"""Normalized fractional SEIRD system and its parameter transforms.

State vectors are ordered ``(s, e, i, r, d)`` and are population fractions.
The right-hand side is

    F = (-b*s*i/(1-d), b*s*i/(1-d) - sig*e, sig*e - (gam+mu)*i, gam*i, mu*i)

Rates are trained in unconstrained coordinates.  By default each rate is
``softplus(z)`` (beta additionally soft-capped at ``beta_max``); a finite box
``(lo, hi)`` may be configured per rate, in which case the rate is
``lo + (hi - lo) * sigmoid(z)``.  The memory order is always
``alpha_min + (1 - alpha_min) * sigmoid(z_alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np
from scipy.special import expit

from fracpinn.errors import ConsistencyError, DomainError, SingularityError

COMPARTMENTS = ("s", "e", "i", "r", "d")
RATE_NAMES = ("beta", "sigma", "gamma_r", "mu")
SINGULARITY_GUARD = 1e-12
SIMPLEX_TOL = 1e-9

# Sharpness of the log-space soft cap on beta.
_CAP_SHARPNESS = 100.0


@dataclass(frozen=True)
class SimplexState:
    s: float
    e: float
    i: float
    r: float
    d: float

    def __post_init__(self):
        x = self.as_array()
        if not np.all(np.isfinite(x)):
            raise ConsistencyError(f"non-finite state {x}")
        if np.any(x < 0):
            raise ConsistencyError(f"negative compartment in {x}")
        if abs(x.sum() - 1.0) > SIMPLEX_TOL:
            raise ConsistencyError(f"compartments sum to {x.sum()!r}, expected 1")
        if self.d >= 1.0:
            raise ConsistencyError("d must be < 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.e, self.i, self.r, self.d], dtype=float)

    @classmethod
    def from_array(cls, x) -> "SimplexState":
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict[str, float]:
        return dict(zip(COMPARTMENTS, self.as_array().tolist()))


@dataclass(frozen=True)
class EpidemicParams:
    beta: float
    sigma: float
    gamma_r: float
    mu: float
    alpha: float = 1.0

    def __post_init__(self):
        for name in RATE_NAMES:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    @property
    def rates(self) -> np.ndarray:
        return np.array([self.beta, self.sigma, self.gamma_r, self.mu])

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **changes) -> "EpidemicParams":
        return EpidemicParams(**{**self.to_dict(), **changes})


@dataclass(frozen=True)
class RawParams:
    z_beta: float
    z_sigma: float
    z_gamma: float
    z_mu: float
    z_alpha: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise DomainError("raw parameters must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.z_beta, self.z_sigma, self.z_gamma, self.z_mu, self.z_alpha])

    @classmethod
    def from_array(cls, z) -> "RawParams":
        return cls(*(float(v) for v in z))


@dataclass(frozen=True)
class ParamBounds:
    """Admissible region for the trainable parameters.

    ``rate_bounds`` maps a rate name to ``(lo, hi)``; rates absent from it use
    the softplus map.
    """

    alpha_min: float = 0.5
    beta_max: float = 1.0
    rate_bounds: Mapping[str, tuple[float, float]] | None = None

    def __post_init__(self):
        if not (0.0 <= self.alpha_min < 1.0):
            raise DomainError(f"alpha_min must lie in [0, 1), got {self.alpha_min!r}")
        if not self.beta_max > 0:
            raise DomainError(f"beta_max must be > 0, got {self.beta_max!r}")
        for name, (lo, hi) in (self.rate_bounds or {}).items():
            if name not in RATE_NAMES:
                raise DomainError(f"unknown rate {name!r} in rate_bounds")
            if not (0.0 <= lo < hi):
                raise DomainError(f"bad bounds for {name}: ({lo}, {hi})")
            if name == "beta" and hi > self.beta_max:
                raise DomainError("beta upper bound exceeds beta_max")

    def box(self, name: str) -> tuple[float, float] | None:
        if self.rate_bounds and name in self.rate_bounds:
            lo, hi = self.rate_bounds[name]
            return float(lo), float(hi)
        return None

    def contains(self, params: EpidemicParams) -> bool:
        if not (self.alpha_min < params.alpha <= 1.0) or params.beta > self.beta_max:
            return False
        for name in RATE_NAMES:
            box = self.box(name)
            if box is not None and not (box[0] <= getattr(params, name) <= box[1]):
                return False
        return True


def softplus(z):
    return np.logaddexp(0.0, z)


sigmoid = expit


def softplus_inv(y: float) -> float:
    if not y > 0:
        raise DomainError(f"softplus inverse needs y > 0, got {y!r}")
    return float(y + np.log(-np.expm1(-y)))


def logit(p: float) -> float:
    if not 0 < p < 1:
        raise DomainError(f"logit needs p in (0, 1), got {p!r}")
    return float(math.log(p) - math.log1p(-p))


def _capped(x: float, cap: float) -> tuple[float, float]:
    """Soft minimum of ``x > 0`` and ``cap`` in log space, with its derivative."""
    gap = math.log(cap) - math.log(x)
    k = _CAP_SHARPNESS
    lifted = float(softplus(k * gap)) / k
    y = cap * math.exp(-lifted)
    return y, y / x * float(sigmoid(k * gap))


def _uncapped(y: float, cap: float) -> float:
    lifted = math.log(cap) - math.log(y)
    k = _CAP_SHARPNESS
    gap = lifted + math.log(-math.expm1(-k * lifted)) / k
    return cap * math.exp(-gap)


def _rate_forward(name: str, z: float, bounds: ParamBounds) -> tuple[float, float]:
    box = bounds.box(name)
    if box is not None:
        lo, hi = box
        sg = float(sigmoid(z))
        return lo + (hi - lo) * sg, (hi - lo) * sg * (1.0 - sg)
    y = float(softplus(z))
    dy = float(sigmoid(z))
    if name == "beta":
        y, dcap = _capped(y, bounds.beta_max)
        dy *= dcap
    return y, dy


def _rate_inverse(name: str, y: float, bounds: ParamBounds) -> float:
    box = bounds.box(name)
    if box is not None:
        lo, hi = box
        return logit((y - lo) / (hi - lo))
    if name == "beta":
        if not y < bounds.beta_max:
            raise DomainError(f"beta={y} is not below beta_max={bounds.beta_max}")
        y = _uncapped(y, bounds.beta_max)
    return softplus_inv(y)


def constrain(raw: RawParams, bounds: ParamBounds = ParamBounds()) -> EpidemicParams:
    """Map optimizer coordinates to admissible epidemiological parameters."""
    z = raw.as_array()
    rates = [_rate_forward(name, z[k], bounds)[0] for k, name in enumerate(RATE_NAMES)]
    alpha = bounds.alpha_min + (1.0 - bounds.alpha_min) * float(sigmoid(z[4]))
    return EpidemicParams(*rates, alpha=alpha)


def constrain_grad(raw: RawParams, bounds: ParamBounds = ParamBounds()) -> np.ndarray:
    """Diagonal of the Jacobian of :func:`constrain`, ordered like ``RawParams``."""
    z = raw.as_array()
    out = np.empty(5)
    for k, name in enumerate(RATE_NAMES):
        out[k] = _rate_forward(name, z[k], bounds)[1]
    sg = float(sigmoid(z[4]))
    out[4] = (1.0 - bounds.alpha_min) * sg * (1.0 - sg)
    return out


def unconstrain(params: EpidemicParams, bounds: ParamBounds = ParamBounds()) -> RawParams:
    """Inverse of :func:`constrain` for parameters strictly inside the bounds."""
    zs = [_rate_inverse(name, getattr(params, name), bounds) for name in RATE_NAMES]
    frac = (params.alpha - bounds.alpha_min) / (1.0 - bounds.alpha_min)
    if frac >= 1.0:
        raise DomainError("alpha = 1 is only reached in the limit z_alpha -> inf")
    zs.append(logit(frac))
    return RawParams(*zs)


def _split(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1], x[..., 2], x[..., 3], x[..., 4]


def _living(d):
    living = 1.0 - d
    if np.any(living < SINGULARITY_GUARD):
        raise SingularityError("living fraction 1 - d fell below 1e-12")
    return living


def rhs(state, params: EpidemicParams) -> np.ndarray:
    """Right-hand side ``F(x)``; ``state`` may be a SimplexState or an array ``(..., 5)``."""
    x = state.as_array() if isinstance(state, SimplexState) else state
    s, e, i, r, d = _split(x)
    force = params.beta * s * i / _living(d)
    out = np.empty(np.shape(x), dtype=float)
    out[..., 0] = -force
    out[..., 1] = force - params.sigma * e
    out[..., 2] = params.sigma * e - (params.gamma_r + params.mu) * i
    out[..., 3] = params.gamma_r * i
    out[..., 4] = params.mu * i
    return out


def rhs_jacobian(state, params: EpidemicParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact Jacobians of :func:`rhs`.

    Returns ``(J_state, J_rates)`` with shapes ``(..., 5, 5)`` and
    ``(..., 5, 4)``; the rate columns are ``(beta, sigma, gamma_r, mu)``.
    """
    x = state.as_array() if isinstance(state, SimplexState) else np.asarray(state, dtype=float)
    s, e, i, r, d = _split(x)
    living = _living(d)
    b = params.beta
    lead = x.shape[:-1]
    js = np.zeros(lead + (5, 5))
    jr = np.zeros(lead + (5, 4))

    dfs = b * i / living  # d force / d s
    dfi = b * s / living
    dfd = b * s * i / living**2
    for row, sign in ((0, -1.0), (1, 1.0)):
        js[..., row, 0] = sign * dfs
        js[..., row, 2] = sign * dfi
        js[..., row, 4] = sign * dfd
    js[..., 1, 1] = -params.sigma
    js[..., 2, 1] = params.sigma
    js[..., 2, 2] = -(params.gamma_r + params.mu)
    js[..., 3, 2] = params.gamma_r
    js[..., 4, 2] = params.mu

    force_per_beta = s * i / living
    jr[..., 0, 0] = -force_per_beta
    jr[..., 1, 0] = force_per_beta
    jr[..., 1, 1] = -e
    jr[..., 2, 1] = e
    jr[..., 2, 2] = -i
    jr[..., 2, 3] = -i
    jr[..., 3, 2] = i
    jr[..., 4, 3] = i
    return js, jr
