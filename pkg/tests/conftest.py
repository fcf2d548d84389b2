import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fracpinn.model import EpidemicParams, SimplexState

settings.register_profile(
    "fracpinn", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fracpinn")

# Mpox truth rates used throughout the synthetic experiments.
MPOX = dict(beta=0.25, sigma=0.13, gamma_r=0.052, mu=0.005)
MPOX_IC = SimplexState(0.98, 0.01, 0.01, 0.0, 0.0)
MPOX_BOUNDS = {"beta": (0.1, 0.3), "sigma": (0.077, 0.2), "gamma_r": (0.036, 0.071), "mu": (0.001, 0.03)}
COVID_BOUNDS = {"beta": (0.2, 0.4), "sigma": (0.1, 0.3), "gamma_r": (0.05, 0.1), "mu": (0.001, 0.01)}


def mpox_params(alpha: float = 1.0) -> EpidemicParams:
    return EpidemicParams(**MPOX, alpha=alpha)


def random_simplex(rng: np.random.Generator, d_max: float = 0.5) -> SimplexState:
    x = rng.dirichlet(np.ones(5))
    if x[4] > d_max:
        x[4], x[0] = x[0], x[4]
    return SimplexState.from_array(x / x.sum())


def rel_err(a, b, floor: float = 1e-10) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def alpha09_problem():
    """Noise-free alpha = 0.9 observations on the full dt = 0.5, T = 300 grid."""
    from fracpinn.data import make_synthetic
    from fracpinn.fracsolver import simulate

    traj = simulate(MPOX_IC, mpox_params(0.9), 0.5, 600)
    return traj, make_synthetic(traj)


@pytest.fixture(scope="session")
def alpha09_fit(alpha09_problem):
    """Joint fit with the default run configuration (Mpox rate box)."""
    from fracpinn.config import RunConfig
    from fracpinn.trainer import fit

    _, obs = alpha09_problem
    cfg = RunConfig().train_config()
    return cfg, fit(obs, MPOX_IC, cfg, 0.5, 600)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
