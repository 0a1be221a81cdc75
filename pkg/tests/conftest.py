from pathlib import Path

import hypothesis
import numpy as np
import pytest

from adrscan.ingestion import load_code_tree, load_cohort
from adrscan.model import Cohort

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.load_profile("default")

DATA = Path(__file__).parent / "data"
WORKED = DATA / "worked"

# Codes overlap on 2- and 3-character prefixes so the level ratios have real classes.
RANDOM_CODES = ["A11a.", "A11b.", "A12..", "A1...", "B21..", "B22..", "C1...", "D25.."]
RANDOM_DRUGS = ["111111111", "222222222", "333333333"]


@pytest.fixture
def worked():
    return load_cohort(
        WORKED / "patients.csv",
        WORKED / "medical.csv",
        WORKED / "therapy.csv",
        code_tree=load_code_tree(WORKED / "codes.csv"),
    )


def random_rows(seed, n_patients=40, span=2500, n_events=60, n_rx=6):
    """Dense random rows: prescriptions cluster in bursts so repeats, <30-day and >=386-day gaps all occur."""
    rng = np.random.default_rng(seed)
    patients = [(f"q{i:03d}", int(rng.integers(0, 200))) for i in range(n_patients)]
    events, rx = [], []
    for pid, _ in patients:
        for _ in range(int(rng.integers(0, n_events))):
            events.append((pid, int(rng.integers(0, span)), RANDOM_CODES[int(rng.integers(len(RANDOM_CODES)))]))
        for _ in range(int(rng.integers(0, n_rx))):
            drug = RANDOM_DRUGS[int(rng.integers(len(RANDOM_DRUGS)))]
            start = int(rng.integers(0, span))
            rx.append((pid, start, drug))
            for _ in range(int(rng.integers(0, 3))):
                start += int(rng.choice([1, 20, 29, 30, 385, 386, 400]))
                rx.append((pid, start, drug))
    return patients, events, rx


def random_cohort(seed, **kw) -> Cohort:
    return Cohort.from_rows(*random_rows(seed, **kw))


@pytest.fixture
def make_random_cohort():
    return random_cohort


SCENARIO_SEED, SCENARIO_N = 1, 10_000


@pytest.fixture(scope="session")
def scenario_raw():
    from adrscan import scenarios
    from adrscan.ingestion import generate_synthetic

    return generate_synthetic(scenarios.injection_spec(SCENARIO_SEED, SCENARIO_N))


@pytest.fixture(scope="session")
def scenario_cohort(scenario_raw):
    from adrscan.model import preprocess

    return preprocess(scenario_raw[0])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
