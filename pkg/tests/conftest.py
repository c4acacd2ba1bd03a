import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from doubleris.channel import ChannelModel, ChannelParams, ChannelRealization, UpaSpec
from doubleris.geometry import build_scenario

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# lines reported by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_realization(rng, nt=3, nr=2, k1=2, k2=3):
    return ChannelRealization(
        H1=cn(rng, k1, nt), H2=cn(rng, k2, nt), G1=cn(rng, nr, k1), G2=cn(rng, nr, k2), D=cn(rng, k2, k1)
    )


def section5_params(kv=8, kappa=0.0, sc=15, **kw):
    """Evaluation setting: 16x16 MIMO, two kv x kv surfaces."""
    return ChannelParams(
        nt=16, nr=16, ris1=UpaSpec(kv, kv), ris2=UpaSpec(kv, kv), kappa=kappa, n_scatterers=sc, **kw
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def layout():
    return build_scenario(100.0, 200.0, 2.0)


@pytest.fixture(scope="session")
def small_model():
    params = ChannelParams(
        nt=3, nr=2, ris1=UpaSpec(2, 1), ris2=UpaSpec(1, 2),
        kappa={"H1": 1.5, "H2": 0.7, "G1": 2.0, "G2": 0.5, "D": 3.0},
        n_scatterers={"H1": 2, "H2": 3, "G1": 1, "G2": 4, "D": 2},
        pathloss={"H1": 1.0, "H2": 0.5, "G1": 0.8, "G2": 1.2, "D": 0.9},
    )
    return ChannelModel(build_scenario(30.0, 40.0, 3.0), params)
