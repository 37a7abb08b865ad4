import os

import pytest

from hapticsim.config import (load_bundle, load_trajectory, load_world_events)

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "hapticsim", "data")


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


@pytest.fixture(scope="session")
def shipped_bundle():
    bundle, diags = load_bundle(data_path("config_replay.json"))
    assert not diags, diags
    return bundle


@pytest.fixture(scope="session")
def shipped_trajectory():
    return load_trajectory(data_path("trajectory_kidney_transplant.jsonl"))


@pytest.fixture(scope="session")
def shipped_events():
    return load_world_events(data_path("events_kidney_transplant.jsonl"))
