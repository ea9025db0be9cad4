import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

GOLDEN_GOLDS = [
    "Así En El Cielo Como En La Tierra",
    "Así en el cielo como en la tierra",
]


@pytest.fixture(scope="session")
def golden_trace() -> str:
    return (FIXTURES / "case_study_trace.txt").read_text("utf-8")


@pytest.fixture(scope="session")
def golden_docs() -> list[str]:
    return json.loads((FIXTURES / "case_study_docs.json").read_text("utf-8"))


@pytest.fixture(scope="session")
def golden_golds() -> list[str]:
    return list(GOLDEN_GOLDS)


@pytest.fixture(scope="session")
def metric_oracle() -> list[dict]:
    return json.loads((FIXTURES / "metric_oracle.json").read_text("utf-8"))
