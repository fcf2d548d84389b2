"""Gamma, log-Gamma and digamma on the positive real axis.

Only real arguments ``x > 0`` are supported; that is all the L1 weights need
(``Gamma(2 - alpha)`` with ``alpha`` in ``(0, 1]``).
"""

from __future__ import annotations

import math

from fracpinn.errors import DomainError

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli terms B_{2k} / (2k) for the digamma asymptotic series.
_DIGAMMA_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_DIGAMMA_SHIFT = 10.0


def _check_positive(x: float, name: str) -> float:
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"{name} requires a finite argument > 0, got {x!r}")
    return x


def _lanczos_lgamma(x: float) -> float:
    # valid for x >= 0.5
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for k in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (x + 0.5) * math.log(t) - t + math.log(acc)


def lgamma(x: float) -> float:
    """Natural log of the Gamma function for ``x > 0``."""
    x = _check_positive(x, "lgamma")
    if x < 0.5:
        # Gamma(x) = Gamma(x + 1) / x
        return _lanczos_lgamma(x + 1.0) - math.log(x)
    return _lanczos_lgamma(x)


def gamma(x: float) -> float:
    """Gamma function for ``x > 0``.

    Raises
    ------
    DomainError
        If ``x <= 0`` or is not finite.
    """
    x = _check_positive(x, "gamma")
    if x == round(x) and x <= 30:
        return float(math.factorial(int(x) - 1))
    return math.exp(lgamma(x))


def digamma(x: float) -> float:
    """Logarithmic derivative of Gamma, ``psi(x) = Gamma'(x) / Gamma(x)``.

    The argument is shifted up with ``psi(x) = psi(x + 1) - 1/x`` until it
    reaches 10, then the asymptotic expansion is summed.
    """
    x = _check_positive(x, "digamma")
    shift = 0.0
    while x < _DIGAMMA_SHIFT:
        shift -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coef in _DIGAMMA_ASYMPTOTIC:
        series += coef * power
        power *= inv2
    return shift + math.log(x) - 0.5 / x - series
