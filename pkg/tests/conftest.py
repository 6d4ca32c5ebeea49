import os

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def fixtures_dir() -> str:
    return FIXTURES


def fixture_path(*parts: str) -> str:
    return os.path.join(FIXTURES, *parts)
