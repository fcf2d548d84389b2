import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracpinn.errors import DomainError
from fracpinn.specfun import digamma, gamma, lgamma

mpmath.mp.dps = 40
GRID = np.linspace(0.5, 20.0, 200)


class TestGamma:
    def test_integers(self):
        assert gamma(1.0) == 1.0
        assert gamma(5.0) == 24.0

    def test_half(self):
        assert abs(gamma(0.5) - 1.7724538509055160) < 1e-14
        assert abs(gamma(0.5) - math.sqrt(math.pi)) < 1e-12

    def test_matches_mpmath_on_working_range(self):
        xs = np.concatenate([np.linspace(0.1, 30.0, 400), [1.5, 1.9, 1.01, 2.0 - 1e-9]])
        worst = max(abs(gamma(x) / float(mpmath.gamma(x)) - 1.0) for x in xs)
        assert worst < 1e-12

    def test_recurrence(self):
        for x in GRID:
            assert abs(gamma(x + 1) - x * gamma(x)) / gamma(x + 1) < 1e-12

    def test_lgamma_consistent(self):
        for x in (0.3, 1.7, 12.5, 29.0):
            assert lgamma(x) == pytest.approx(math.log(gamma(x)), abs=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0, -0.5, float("nan"), float("inf")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            gamma(bad)

    @given(st.floats(0.1, 30.0))
    def test_log_convex(self, x):
        h = 1e-3
        assert lgamma(x + h) + lgamma(x - h / 2) - 2 * lgamma(x + h / 4) > -1e-9


class TestDigamma:
    @pytest.mark.parametrize(
        "x, expected",
        [(1.0, -0.5772156649015329), (2.0, 0.4227843350984671), (0.5, -1.9635100260214235)],
    )
    def test_known_values(self, x, expected):
        assert digamma(x) == pytest.approx(expected, abs=1e-13)

    def test_matches_mpmath(self):
        xs = np.linspace(0.5, 30.0, 300)
        worst = max(abs(digamma(x) - float(mpmath.digamma(x))) for x in xs)
        assert worst < 1e-10

    def test_recurrence(self):
        for x in GRID:
            assert abs(digamma(x + 1) - digamma(x) - 1.0 / x) < 1e-10

    def test_is_derivative_of_lgamma(self):
        h = 1e-5
        for x in np.linspace(0.6, 25.0, 50):
            fd = (lgamma(x + h) - lgamma(x - h)) / (2 * h)
            assert abs(fd - digamma(x)) < 1e-6

    @pytest.mark.parametrize("bad", [0.0, -2.0, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            digamma(bad)

    @given(st.floats(0.5, 30.0), st.floats(0.5, 30.0))
    def test_monotone(self, a, b):
        if a < b:
            assert digamma(a) < digamma(b)
