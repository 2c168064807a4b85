import time

import numpy as np
import pytest

from turbidostat import _pykernels
from turbidostat.dqn import TrainConfig, train
from turbidostat.model import GrowthParams

try:
    from turbidostat import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python"),
            pytest.param(_ckernels, id="cython",
                         marks=pytest.mark.skipif(_ckernels is None, reason="extension not built"))]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


TRAIN_SECONDS: dict[int, float] = {}


@pytest.fixture(scope="session")
def trained():
    """Default-config training runs for seeds 1-3, shared across test modules."""
    p = GrowthParams()
    out = {}
    for seed in (1, 2, 3):
        t0 = time.perf_counter()
        out[seed] = train(p, TrainConfig(seed=seed))
        TRAIN_SECONDS[seed] = time.perf_counter() - t0
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for the acceptance summary."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
