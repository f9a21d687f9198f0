"""Shared fixtures and the acceptance summary hook."""

import pathlib

import pytest

from tpopf.admittance import assemble_ybus
from tpopf.netmodel import load_case_file

CASES = pathlib.Path(__file__).resolve().parent.parent / "cases"


@pytest.fixture(scope="session")
def case_dir():
    return CASES


@pytest.fixture(scope="session")
def balanced4():
    return load_case_file(CASES / "balanced4.json")


@pytest.fixture(scope="session")
def unbalanced4():
    return load_case_file(CASES / "unbalanced4.json")


@pytest.fixture(scope="session")
def feeder13():
    return load_case_file(CASES / "ieee13_mod.json")


@pytest.fixture(scope="session")
def feeder13_adm(feeder13):
    return assemble_ybus(feeder13)


_CRITERIA = [
    ("test_criterion_1_", "1 balanced null case"),
    ("test_criterion_2_", "2 metric unit suite"),
    ("test_criterion_3_", "3 bound relation property"),
    ("test_criterion_4_", "4 oracle equivalence"),
    ("test_criterion_5_", "5 derivative checks"),
    ("test_criterion_6_", "6 dispatch comparison table"),
    ("test_criterion_7_", "7 metric conflict"),
    ("test_criterion_8_", "8 transformer table closure"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion that was run."""
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            for prefix, label in _CRITERIA:
                if name.startswith(prefix):
                    ok = status == "passed" and outcomes.get(label, True)
                    outcomes[label] = ok
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for _, label in _CRITERIA:
        if label in outcomes:
            verdict = "PASS" if outcomes[label] else "FAIL"
            terminalreporter.write_line(f"criterion {label}: {verdict}")
