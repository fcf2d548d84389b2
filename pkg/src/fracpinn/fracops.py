"""L1 discretization of the left-sided Caputo derivative on a uniform grid.

For ``0 < alpha <= 1`` and nodes ``t_j = j * dt`` the operator is

    D^alpha psi(t_n) ~= dt**-alpha * sum_{k=0}^{n-1} c_k * (psi[n-k] - psi[n-k-1])

with ``c_k = ((k+1)**(1-alpha) - k**(1-alpha)) / Gamma(2-alpha)``.  Besides
the forward operator this module supplies exact derivatives with respect to
the sampled values and to ``alpha``, so the operator can sit inside a
gradient-trained loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from fracpinn.errors import DomainError, GridMismatchError
from fracpinn.specfun import digamma, gamma

__all__ = [
    "L1Stencil",
    "SampledSeries",
    "l1_weights",
    "caputo_l1",
    "caputo_l1_grad",
    "caputo_l1_all",
    "caputo_l1_all_vjp",
]


@dataclass(frozen=True)
class L1Stencil:
    """Weights ``c_k`` and their alpha-derivatives for one ``(alpha, dt)``."""

    alpha: float
    dt: float
    weights: np.ndarray = field(repr=False)
    dweights_dalpha: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return len(self.weights)

    @property
    def scale(self) -> float:
        """The prefactor ``dt**-alpha``."""
        return self.dt ** (-self.alpha)


@dataclass(frozen=True)
class SampledSeries:
    """Values of a scalar function on the uniform grid ``t_j = j * dt``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ValueError("a sampled series needs at least two values")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be finite and positive, got {self.dt!r}")
        object.__setattr__(self, "values", values)

    @property
    def n_nodes(self) -> int:
        return len(self.values)


def _check_alpha_dt(alpha: float, dt: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not (math.isfinite(dt) and dt > 0.0):
        raise DomainError(f"dt must be finite and positive, got {dt!r}")


@lru_cache(maxsize=64)
def _weights_cached(alpha: float, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    a = 1.0 - alpha
    k = np.arange(n_max, dtype=float)
    b = np.empty(n_max)
    db = np.empty(n_max)  # d b_k / d alpha
    b[0] = 1.0
    db[0] = 0.0  # d/dalpha of 1**a
    if n_max > 1:
        kk = k[1:]
        log_k = np.log(kk)
        log_k1 = np.log1p(kk)
        # (k+1)^a - k^a = k^a * expm1(a * log1p(1/k)), free of cancellation
        ka = np.exp(a * log_k)
        b[1:] = ka * np.expm1(a * np.log1p(1.0 / kk))
        db[1:] = -(np.exp(a * log_k1) * log_k1 - ka * log_k)
    g = gamma(2.0 - alpha)
    psi = digamma(2.0 - alpha)
    c = b / g
    # d/dalpha [1 / Gamma(2 - alpha)] = psi(2 - alpha) / Gamma(2 - alpha)
    dc = db / g + c * psi
    c.setflags(write=False)
    dc.setflags(write=False)
    return c, dc


def l1_weights(alpha: float, dt: float, n_max: int) -> L1Stencil:
    """Build the L1 stencil for ``k = 0 .. n_max - 1``.

    The weights are cached per ``(alpha, n_max)``; ``dt`` only enters the
    prefactor, so changing it is free.
    """
    alpha = float(alpha)
    dt = float(dt)
    _check_alpha_dt(alpha, dt)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    c, dc = _weights_cached(alpha, int(n_max))
    return L1Stencil(alpha=alpha, dt=dt, weights=c, dweights_dalpha=dc)


def _check_pair(series: SampledSeries, stencil: L1Stencil, n: int) -> None:
    if not math.isclose(series.dt, stencil.dt, rel_tol=1e-12, abs_tol=0.0):
        raise GridMismatchError(f"series dt={series.dt} differs from stencil dt={stencil.dt}")
    if not (1 <= n <= series.n_nodes - 1):
        raise IndexError(f"node index {n} outside 1..{series.n_nodes - 1}")
    if n > stencil.n_max:
        raise IndexError(f"stencil holds {stencil.n_max} weights, node {n} needs {n}")


def caputo_l1(series: SampledSeries, stencil: L1Stencil, n: int) -> float:
    """L1 approximation of the Caputo derivative at node ``n``."""
    _check_pair(series, stencil, n)
    v = series.values
    diffs = v[n:0:-1] - v[n - 1 :: -1][:n]  # psi[n-k] - psi[n-k-1], k = 0..n-1
    return float(stencil.scale * np.dot(stencil.weights[:n], diffs))


def caputo_l1_grad(series: SampledSeries, stencil: L1Stencil, n: int) -> tuple[np.ndarray, float]:
    """Gradient of :func:`caputo_l1` at node ``n``.

    Returns ``(dvalues, dalpha)`` where ``dvalues`` has one entry per grid
    node (zeros beyond ``n``) and ``dalpha`` includes the derivative of the
    ``dt**-alpha`` prefactor.
    """
    _check_pair(series, stencil, n)
    c = stencil.weights[:n]
    dvalues = np.zeros(series.n_nodes)
    # psi[j] picks up +c_{n-j} and -c_{n-j-1}
    dvalues[n] += c[0]
    if n > 1:
        dvalues[1:n] += c[n - 1 : 0 : -1] - c[n - 2 :: -1][: n - 1]
    dvalues[0] -= c[n - 1]
    dvalues *= stencil.scale

    v = series.values
    diffs = v[n:0:-1] - v[n - 1 :: -1][:n]
    raw = np.dot(c, diffs)
    draw = np.dot(stencil.dweights_dalpha[:n], diffs)
    dalpha = stencil.scale * (draw - math.log(stencil.dt) * raw)
    return dvalues, float(dalpha)


def _causal_conv(weights: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    # out[m] = sum_{k<=m} weights[k] * diffs[m-k], column-wise
    m = diffs.shape[0]
    out = np.empty_like(diffs)
    for j in range(diffs.shape[1]):
        out[:, j] = np.convolve(weights[:m], diffs[:, j])[:m]
    return out


def _causal_corr(weights: np.ndarray, cot: np.ndarray) -> np.ndarray:
    # adjoint of _causal_conv: out[m] = sum_{n>=m} weights[n-m] * cot[n]
    m = cot.shape[0]
    out = np.empty_like(cot)
    for j in range(cot.shape[1]):
        out[:, j] = np.convolve(weights[:m][::-1], cot[:, j])[m - 1 :]
    return out


def caputo_l1_all(values: np.ndarray, stencil: L1Stencil) -> np.ndarray:
    """Apply the L1 operator at every node ``n = 1 .. N``.

    ``values`` has shape ``(N + 1,)`` or ``(N + 1, m)``; the result has
    shape ``(N,)`` or ``(N, m)`` with row ``n - 1`` holding node ``n``.
    """
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    n_nodes = v.shape[0] - 1
    if n_nodes < 1:
        raise ValueError("need at least two grid nodes")
    if stencil.n_max < n_nodes:
        raise IndexError(f"stencil holds {stencil.n_max} weights, grid needs {n_nodes}")
    out = stencil.scale * _causal_conv(stencil.weights, np.diff(v, axis=0))
    return out[:, 0] if squeeze else out


def caputo_l1_all_vjp(
    cotangent: np.ndarray, values: np.ndarray, stencil: L1Stencil
) -> tuple[np.ndarray, float]:
    """Vector-Jacobian product of :func:`caputo_l1_all`.

    Given ``cotangent`` shaped like the operator output, returns the
    cotangent on ``values`` and the scalar derivative with respect to alpha.
    """
    v = np.asarray(values, dtype=float)
    g = np.asarray(cotangent, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
        g = g[:, None]
    diffs = np.diff(v, axis=0)
    scale = stencil.scale

    g_diffs = scale * _causal_corr(stencil.weights, g)
    g_values = np.zeros_like(v)
    g_values[1:] += g_diffs
    g_values[:-1] -= g_diffs

    raw = _causal_conv(stencil.weights, diffs)
    draw = _causal_conv(stencil.dweights_dalpha, diffs)
    dalpha = scale * float(np.sum(g * (draw - math.log(stencil.dt) * raw)))
    return (g_values[:, 0] if squeeze else g_values), dalpha
