from __future__ import annotations

from pathlib import Path

import pytest

import reflectfuzz
from reflectfuzz.contract_vm.model import load_model_file
from reflectfuzz.txmodel import SeedPool, sequence_from_dict

FIXTURES = Path(reflectfuzz.__file__).parent / "fixtures"

POSITIVE = {
    "EL": "el_positive",
    "SC": "sc_positive",
    "BD": "bd_positive",
    "UE": "ue_positive",
    "UD": "ud_positive",
    "EF": "ef_positive",
    "RE": "re_positive",
    "TO": "to_positive",
}
NEGATIVE = {cls: name.replace("positive", "negative") for cls, name in POSITIVE.items()}

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def load(name: str):
    return load_model_file(FIXTURES / f"{name}.json")


def attack(model):
    return sequence_from_dict(model.metadata["attack"])


@pytest.fixture
def pool():
    return SeedPool.default()


@pytest.fixture(scope="session")
def crowdsale():
    return load("crowdsale")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
