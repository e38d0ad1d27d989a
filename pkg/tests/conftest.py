import numpy as np
import pytest

from cvrace import Dataset, generate_synthetic


@pytest.fixture(scope="session")
def small_binary():
    return generate_synthetic(120, 3, 0.2, 2.0, seed=11)


@pytest.fixture(scope="session")
def synth500():
    return generate_synthetic(500, 5, 0.1, 1.5, seed=3)


@pytest.fixture
def csv_file(tmp_path):
    def make(text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return make


def auc(scores, labels):
    """Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return (gt + 0.5 * eq) / (len(pos) * len(neg))


def dataset_from(X, y, name="fixture"):
    return Dataset(np.asarray(X, float), np.asarray(y, float), name)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
