from __future__ import annotations

import random
import re
from pathlib import Path

import pytest

from flowcg.genprog import GenConfig
from flowcg.ir import parse_program

DATA = Path(__file__).parent / "data"
MOTIV = DATA / "motiv.ir"
MOTIV_SUMMARY = DATA / "motiv_summary.ir"


def no_call_config(seed: int) -> GenConfig:
    rng = random.Random(seed)
    return GenConfig(seed=seed, max_stmts=rng.randint(4, 40), max_objects=rng.randint(1, 8),
                     branch_prob=0.25, loop_prob=0.15, summary_prob=rng.choice((0.0, 0.3, 0.6)),
                     num_vars=rng.randint(3, 7))


def call_config(seed: int) -> GenConfig:
    rng = random.Random(seed)
    return GenConfig(seed=seed, max_stmts=rng.randint(12, 40), max_objects=rng.randint(1, 8),
                     max_funcs=rng.randint(2, 4), branch_prob=0.2, loop_prob=0.1,
                     indirect_call_prob=0.4, summary_prob=0.3, num_vars=rng.randint(3, 7))


@pytest.fixture
def motiv():
    return parse_program(MOTIV.read_text())


@pytest.fixture
def motiv_summary():
    return parse_program(MOTIV_SUMMARY.read_text())


# -- one pass/fail line per acceptance criterion --------------------------------

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n, name = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call" or report.failed:
        prev = _outcomes.get(n, (name, "PASS"))[1]
        status = "FAIL" if report.failed or prev == "FAIL" else "PASS"
        if report.skipped:
            status = "SKIP"
        _outcomes[n] = (name, status)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        name, status = _outcomes[n]
        terminalreporter.write_line(f"criterion {n} ({name}): {status}")
