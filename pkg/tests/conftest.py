import textwrap

import pytest

from src.config import settings
from src.models.geometry import Ball, HalfSpace, Intersection, Polytope
from src.services.cache_service import CacheManager


@pytest.fixture(autouse=True)
def clear_caches():
    yield
    CacheManager.clear_all()


@pytest.fixture
def numerics():
    return settings


@pytest.fixture
def small_blocks():
    """Settings with several Monte Carlo blocks per run, so worker pools have something to split."""
    return settings.with_overrides({"block_size": 20_000})


@pytest.fixture
def lower_halfline():
    """(-inf, 0] in R^1."""
    return HalfSpace(normal=(1.0,), offset=0.0, label="halfline")


@pytest.fixture
def halfplane():
    return HalfSpace(normal=(1.0, 0.0), offset=0.0, label="halfplane")


@pytest.fixture
def unit_disc():
    return Ball(center=(0.0, 0.0), radius=1.0, label="unit-disc")


@pytest.fixture
def square():
    return Polytope.box([-1.0, -1.0], [1.0, 1.0], label="square")


@pytest.fixture
def half_disc(unit_disc):
    return Intersection(members=[unit_disc, HalfSpace(normal=(1.0, 0.0), offset=0.0)], label="half-disc")


@pytest.fixture
def write_config(tmp_path):
    """Write a TOML config into tmp_path and return its path."""
    def _write(body: str, name: str = "experiment.toml"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(body).lstrip(), encoding="utf-8")
        return path

    return _write
