import warnings

import numpy as np
import pytest

from evib import plantsim
from evib.models import SetupModel
from evib.plantsim import PlantConfig, TrialProtocol


@pytest.fixture(scope="session")
def setup_model():
    return SetupModel.load()


@pytest.fixture(scope="session")
def clean_plant():
    return PlantConfig().noiseless()


@pytest.fixture(scope="session")
def clean_trial(clean_plant):
    """Noise-free 100 Hz trial at 40 mm/s, 0.3 N."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return plantsim.simulate_trial(clean_plant, TrialProtocol(100.0, 40.0, 0.3), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance summary: one pass/fail line per criterion ------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split("_")[2])):
        outcome, detail = _CRITERIA[name]
        num = name.split("_")[2]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:>2}: {verdict}  {detail}")
