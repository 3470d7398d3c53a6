from pathlib import Path

import pytest

from knowmesh.harness import builtin_scenario_path, load_scenario_file

DATA = Path(__file__).resolve().parents[1] / "src" / "knowmesh" / "data"


@pytest.fixture(scope="session")
def case_study():
    return load_scenario_file(builtin_scenario_path("case-study"))


@pytest.fixture(scope="session")
def fixture_lexicon(case_study):
    return case_study.lexicon
