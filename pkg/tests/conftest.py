import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgeorch.scenario_io import parse_scenario

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


@pytest.fixture
def fig7_path() -> Path:
    return SCENARIO_DIR / "fig7.json"


@pytest.fixture
def fig4_path() -> Path:
    return SCENARIO_DIR / "fig4.json"


@pytest.fixture
def fig7_scenario(fig7_path):
    return parse_scenario(fig7_path.read_text())


@pytest.fixture
def fig4_scenario(fig4_path):
    return parse_scenario(fig4_path.read_text())
