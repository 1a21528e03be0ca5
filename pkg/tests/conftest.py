import numpy as np
import pytest

from maxent_chest.model import NoiseModel, PilotPattern, build_q
from maxent_chest.oracle import ObservedSequence
from maxent_chest.simulate import draw_correlated_chain, make_rng, observe

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def seq(pattern, lam, noise):
    """Oracle description of one pilot sequence."""
    return ObservedSequence(pattern.indices, lam, noise.pilot_covariance(pattern))


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def n8_pair():
    """N=8, L=2, sigma2=0.01 with two disjoint 4-pilot sequences and correlation 0.9."""
    n, l, lam = 8, 2, 0.9
    p1 = PilotPattern(n, (0, 2, 4, 6))
    p2 = PilotPattern(n, (1, 3, 5, 7))
    noise = NoiseModel.homogeneous(0.01)
    ref, (aux,) = draw_correlated_chain(l, n, [lam], seed=7)
    o2 = observe(ref, p2, noise, seed=8)
    o1 = observe(aux, p1, noise, seed=9)
    return dict(n=n, l=l, lam=lam, p1=p1, p2=p2, noise=noise, o1=o1, o2=o2, q=build_q(n, l), h=ref.h)
