import mpmath
import pytest

mpmath.mp.dps = 50


def mp_poisson_tail_above(lam, n_th):
    """P(N > n_th) in 50-digit arithmetic by direct term summation."""
    lam = mpmath.mpf(lam)
    if n_th < 0:
        return mpmath.mpf(1)
    below = mpmath.fsum(mpmath.exp(-lam) * lam**k / mpmath.factorial(k) for k in range(n_th + 1))
    return 1 - below


@pytest.fixture
def mp_tail():
    return mp_poisson_tail_above


ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL summary line for an acceptance criterion."""
    name = request.node.name
    state = {}

    def report(label, passed, detail=""):
        state["line"] = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        print(state["line"])
        return passed

    yield report
    if "line" in state:
        ACCEPTANCE_LINES[name] = state["line"]
    else:
        ACCEPTANCE_LINES[name] = f"FAIL {name}: did not complete"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for name in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[name])
