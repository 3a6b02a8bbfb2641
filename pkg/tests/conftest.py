"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

import pytest

from rehab_extract.goldstore import split_train_test
from rehab_extract.ontology import load_ontology
from rehab_extract.ruletagger import compile_rules
from rehab_extract.syngen import GeneratorConfig, generate_corpus

SEED = 42
TRAIN_PER_ORIGIN = 125

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "seen": False})
    if report.when == "call" or report.outcome != "passed":
        entry["seen"] = True
        if report.outcome != "passed":
            entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["passed"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}")


@pytest.fixture(scope="session")
def ontology():
    return load_ontology()


@pytest.fixture(scope="session")
def tagger(ontology):
    return compile_rules(None, ontology)


@pytest.fixture(scope="session")
def clean_synth(ontology):
    return generate_corpus(GeneratorConfig(seed=SEED), ontology)


@pytest.fixture(scope="session")
def clean_corpus(clean_synth):
    return split_train_test(clean_synth.corpus, TRAIN_PER_ORIGIN, SEED)


@pytest.fixture(scope="session")
def noisy_corpus(ontology):
    cfg = GeneratorConfig(seed=SEED, typo_rate=0.02, placeholder_rate=0.05)
    return split_train_test(generate_corpus(cfg, ontology).corpus, TRAIN_PER_ORIGIN, SEED)
