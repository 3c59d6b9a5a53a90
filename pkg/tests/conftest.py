import numpy as np
import pytest

from affectcl.corpus import LabelSet, Track
from affectcl.synth import toy_corpus


@pytest.fixture(scope="session")
def toy_a():
    return toy_corpus(Track.A, 60, seed=101, id_prefix="a")


@pytest.fixture(scope="session")
def toy_b():
    return toy_corpus(Track.B, 60, seed=102, id_prefix="b")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def eng_labels():
    return LabelSet(language="eng",
                    emotions=("anger", "fear", "joy", "sadness", "surprise"))


# Verdicts recorded by the acceptance tests as (number, line); echoed after
# the run so they stay visible despite output capture.
ACCEPTANCE_VERDICTS: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_VERDICTS):
            terminalreporter.write_line(line)
