from functools import lru_cache

import pytest

from fplsda.basis import build_basis, fit_regression_splines, sample_matrix
from fplsda.sim import SimConfig, generate, train_test_split


@lru_cache(maxsize=None)
def simulated(seed=0, sigma_eps=0.2, n_subjects=40, train_subjects=30, subject_effect=True):
    """Train/test coefficient matrices for the default cubic basis, plus raw samples."""
    cfg = SimConfig(n_subjects=n_subjects, train_subjects=train_subjects,
                    test_subjects=n_subjects - train_subjects, sigma_eps=sigma_eps, seed=seed,
                    subject_effect=subject_effect)
    train_d, test_d = train_test_split(generate(cfg), cfg)
    basis = build_basis(3, 15)
    out = {
        "basis": basis,
        "train": fit_regression_splines(basis, train_d),
        "train_raw": sample_matrix(train_d)[0],
        "train_data": train_d,
    }
    if test_d is not None:
        out.update(test=fit_regression_splines(basis, test_d), test_raw=sample_matrix(test_d)[0], test_data=test_d)
    return out


@pytest.fixture
def sim_data():
    return simulated


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(criterion: str, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
