from __future__ import annotations

import functools

import pytest

from fixture_tables import FAMILIES
from taskworld.scene import bundled_scene_path, load_scene
from taskworld.taskgen import generate


@functools.lru_cache(maxsize=None)
def scene_for(name: str):
    return load_scene(bundled_scene_path(name))


@functools.lru_cache(maxsize=None)
def bundle_for(family: str):
    scene_name, keyword = FAMILIES[family]
    return generate(keyword, scene_for(scene_name))


@pytest.fixture
def t1_scene():
    return scene_for("t1_kitchen")


@pytest.fixture
def t3_scene():
    return scene_for("t3_desk")


@pytest.fixture(params=sorted(FAMILIES))
def family(request):
    return request.param
