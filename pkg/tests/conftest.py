from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sparsedim.constructor import build_sparse, build_wholeline
from sparsedim.potential import PotentialSpec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance results: criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
N_CRITERIA = 14
# wall time of session-scoped builds, charged to the criteria that use them
BUILD_SECONDS: dict[str, float] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")


def random_sparse(rng: np.random.Generator, max_site: int = 60, n_max: int = 4,
                  lo: float = 0.2, hi: float = 8.0) -> PotentialSpec:
    """Half-line spec with a few moderate barriers."""
    n = int(rng.integers(1, n_max + 1))
    sites = rng.choice(np.arange(1, max_site + 1), size=n, replace=False)
    vals = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    return PotentialSpec.from_values(zip((int(s) for s in sites), (float(v) for v in vals)))


@pytest.fixture(scope="session")
def free():
    return PotentialSpec.free()


@pytest.fixture(scope="session")
def sparse4():
    return build_sparse()


@pytest.fixture(scope="session")
def wholeline():
    """Three stages per side; about 20 s to build."""
    start = time.perf_counter()
    built = build_wholeline(3)
    BUILD_SECONDS["wholeline"] = time.perf_counter() - start
    return built
