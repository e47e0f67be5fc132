import warnings

import pytest

from dicke_dtc.model import ModelParams


@pytest.fixture
def dtc_point():
    """delta_c = kappa = 1, Delta = 0.1, g0 = g_c/2, g1 = 0.2 g0, omega = 2 omega_res."""
    return ModelParams.from_ratios(n_atoms=10, g1_over_g0=0.2)


@pytest.fixture
def static_point():
    return ModelParams.from_ratios(n_atoms=10, g1_over_g0=0.0, omega_over_2wres=1.0)


@pytest.fixture(autouse=True)
def _quiet_supercritical():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*static threshold.*", category=RuntimeWarning)
        yield


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line PASS/FAIL verdict; all verdicts are repeated in the terminal summary."""

    def _report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
