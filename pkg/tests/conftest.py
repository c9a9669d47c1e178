import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from catlm.finstoch import FiniteDistribution, FiniteKernel, SpaceLabel


def simplex(n, min_value=0.0):
    """Hypothesis strategy for probability vectors of length ``n``."""
    raw = arrays(np.float64, n, elements=st.floats(min_value, 1.0, allow_nan=False, allow_infinity=False))
    return raw.filter(lambda w: w.sum() > 1e-3).map(lambda w: w / w.sum())


@st.composite
def distributions(draw, n=None, min_value=0.0):
    n = n or draw(st.integers(2, 6))
    return FiniteDistribution(SpaceLabel.range(n), draw(simplex(n, min_value)))


@st.composite
def kernels(draw, src=None, tgt=None, min_value=0.0):
    src = src or SpaceLabel.range(draw(st.integers(1, 5)))
    tgt = tgt or SpaceLabel.range(draw(st.integers(1, 5)))
    rows = np.stack([draw(simplex(len(tgt), min_value)) for _ in src])
    return FiniteKernel(src, tgt, rows)


def random_kernel(rng, n, m, alpha=1.0, src=None, tgt=None):
    return FiniteKernel(src or SpaceLabel.range(n), tgt or SpaceLabel.range(m),
                        rng.dirichlet(np.full(m, alpha), size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
