import numpy as np
import pytest

from mre.params import beta_from_R, derive_params


def params_for(R, S=0.1):
    return derive_params(beta_from_R(R), S)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(cid, ok, detail, seconds):
    ACCEPTANCE[cid] = (bool(ok), detail, seconds)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail, seconds = ACCEPTANCE[cid]
        terminalreporter.write_line(f"C{cid:02d} {'PASS' if ok else 'FAIL'}  {detail}  "
                                    f"[{seconds:.1f} s]")
