"""Shared fixtures for the test suite."""
from __future__ import annotations

import pytest

from cpelt import get_model


@pytest.fixture
def ratio_power_model():
    return get_model("ratio_power")
