import pytest

from foodchain.model import ModelParams, State
from foodchain.ode import IntegratorConfig, integrate
from foodchain.oracle import blowup_oracle

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def ref():
    return ModelParams.reference()


@pytest.fixture(scope="session")
def oracle_cfg(ref):
    return blowup_oracle(ref)


@pytest.fixture(scope="session")
def blowup_traj(ref, oracle_cfg):
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, t_end=100.0,
                           sample_stride=oracle_cfg.window / 200)
    return integrate(ref, State(1.0, oracle_cfg.v1_0, oracle_cfg.r1_0), cfg)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ok, label, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
