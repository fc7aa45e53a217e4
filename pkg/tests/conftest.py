import pytest

from maze_env import Task, load_bundled_maze, parse_maze
from proposer import GuidedProposer
from schemas import KinematicParams, ProposerConfig

OPEN_ROOM = "\n".join(["########"] + ["#......#"] * 6 + ["########"])
CORRIDOR = "\n".join(["############", "#..........#", "############"])


@pytest.fixture
def medium():
    return load_bundled_maze("medium")


@pytest.fixture
def room():
    """8x8 room, free cells span [1, 7) on both axes."""
    return parse_maze(OPEN_ROOM, name="room")


@pytest.fixture
def corridor():
    """One cell high, free x in [1, 11), y in [1, 2)."""
    return parse_maze(CORRIDOR, name="corridor")


@pytest.fixture
def params():
    return KinematicParams()


@pytest.fixture
def small_proposer(room):
    return GuidedProposer(room, KinematicParams(), ProposerConfig(h_plan=10, n_candidates=4, jump_factor=5))


@pytest.fixture
def room_task():
    return Task((2.5, 2.5), (5.5, 2.5), 0.5, 200)


@pytest.fixture
def db_url(tmp_path):
    import models

    url = f"sqlite:///{tmp_path / 'results.db'}"
    assert models.init_db(url)
    yield url
    models.engine.dispose()
    models.engine = None
    models.SessionLocal = None
