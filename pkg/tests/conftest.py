import json
from pathlib import Path

import pytest

from flowthing import parse

ROOT = Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"
SCENARIOS = ROOT / "scenarios"
CORPUS = ["procurement.fm", "cert-issuance.fm", "doc-signing.fm", "decryption.fm"]


def load(name):
    return parse((MODELS / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def corpus():
    return {name: load(name) for name in CORPUS}


@pytest.fixture(scope="session")
def manifest():
    return json.loads((MODELS / "manifest.json").read_text())


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
