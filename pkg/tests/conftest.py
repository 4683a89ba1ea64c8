import numpy as np
import pytest

from domdiv.data import SyntheticConfig, generate_synthetic
from domdiv.pipeline import ExperimentConfig, fit_model, train_test

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, title): release acceptance criterion exercised by the test"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        state = "PASS" if rep.passed else ("SKIPPED" if rep.skipped else "FAIL")
        _outcomes.setdefault(number, (title, []))[1].append(state)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        title, states = _outcomes[number]
        if "FAIL" in states:
            verdict = "FAIL"
        elif all(s == "SKIPPED" for s in states):
            verdict = "SKIPPED"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict:<7} {title}")


@pytest.fixture(scope="session")
def small_synthetic():
    """Default-sized synthetic problem shared by the slower module tests."""
    return generate_synthetic(SyntheticConfig(overlap=0.5, rng_seed=3))


@pytest.fixture(scope="session")
def small_model(small_synthetic):
    dataset, split, prototypes = small_synthetic
    train, test = train_test(dataset, split)
    cfg = ExperimentConfig(synthetic=SyntheticConfig(overlap=0.5, rng_seed=3), seed=3)
    return fit_model(train, split, prototypes, cfg), train, test


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
