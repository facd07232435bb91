import pytest

# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from uss_sim.params import ProtocolParams, validate_params

STANDARD_S = {-1: "0.45", 0: "0.35", 1: "0.25", 2: "0.15"}


def make_params(N=8, n=64, M=2, d_f="1/8", l_max=2, s=None, seed=0):
    return validate_params(ProtocolParams(
        num_recipients=N, n=n, num_messages=M, dishonest_fraction=d_f,
        l_max=l_max, s_thresholds=STANDARD_S if s is None else s, master_seed=seed,
    ))


@pytest.fixture
def standard():
    return make_params()


@pytest.fixture
def tiny():
    # m = 2 and s_0 = 0.49: a fragment test passes iff every tested bit agrees
    return make_params(N=2, n=4, M=1, d_f=0, l_max=0, s={-1: "0.495", 0: "0.49"})


@pytest.fixture
def forge_tiny():
    return make_params(N=4, n=16, M=1, d_f="1/4", l_max=0, s={-1: "0.49", 0: "0.45"})
