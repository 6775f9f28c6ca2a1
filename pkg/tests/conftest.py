import numpy as np
import pytest

from depthguide import DepthFrame, generate_suite


@pytest.fixture(scope="session")
def small_suite():
    return generate_suite(3, base_seed=11, width=48, height=36)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, h, w, lo=1.0, hi=20.0, invalid_frac=0.0):
    d = rng.uniform(lo, hi, (h, w)).astype(np.float32)
    valid = rng.random((h, w)) >= invalid_frac
    return DepthFrame(np.where(valid, d, 0), valid)


ACCEPTANCE: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
