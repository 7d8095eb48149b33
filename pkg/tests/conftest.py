"""Shared fixtures: a private zero-list cache and the zero lists the slow checks reuse."""

import pytest

from src.config import settings
from src.services.zeta_zeros import find_zeros


@pytest.fixture(scope="session", autouse=True)
def isolated_storage(tmp_path_factory):
    """Point the zero cache and run output at temporary directories for the whole session."""
    cache, output = settings.cache_dir, settings.output_dir
    settings.cache_dir = tmp_path_factory.mktemp("zero-cache")
    settings.output_dir = tmp_path_factory.mktemp("runs")
    yield settings
    settings.cache_dir, settings.output_dir = cache, output


@pytest.fixture(scope="session")
def zeros_200(isolated_storage):
    return find_zeros(200.0)


@pytest.fixture(scope="session")
def zeros_1000(isolated_storage):
    return find_zeros(1000.0)
