import json

import pytest

from bench import read_records
from cli import EXIT_CONFIG, EXIT_OK, main
from maze_env import load_maze

from conftest import OPEN_ROOM


@pytest.fixture
def room_config(tmp_path):
    maze = tmp_path / "room.txt"
    maze.write_text(OPEN_ROOM + "\n")
    path = tmp_path / "run.env"
    path.write_text(
        "name=cli\n"
        f"maze={maze}\n"
        f"out_dir={tmp_path / 'runs'}\n"
        "seeds=0\n"
        "tasks.explicit=2.5,2.5,5.5,2.5\n"
        "oc.budget=20\n"
        "oc.h_plan=8\n"
        "oc.L=200\n"
        "oc.guidance_levels=1,2,4\n"
        "proposer.n_candidates=4\n"
    )
    return path


def test_gen_maze(tmp_path):
    out = tmp_path / "mazes" / "gen.txt"
    assert main(["gen-maze", "--width", "9", "--height", "7", "--seed", "2", "--out", str(out)]) == EXIT_OK
    maze = load_maze(out)
    assert maze.free_count > 0
    assert maze.free_count + maze.wall_count == maze.width * maze.height


def test_overrides_rejected_where_unused(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen-maze", "--out", str(tmp_path / "m.txt"), "--oc.budget", "5"])
    assert exc.value.code == 2


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "absent.env")]) == EXIT_CONFIG


def test_invalid_override(room_config):
    assert main(["run", "--config", str(room_config), "--oc.budget", "0"]) == EXIT_CONFIG


def test_unknown_suite(room_config):
    assert main(["bench", "--config", str(room_config), "--suite", "nope"]) == EXIT_CONFIG


def test_run_writes_records_and_summary(room_config, tmp_path):
    code = main(["run", "--config", str(room_config), "--oc.budget=25"])
    assert code in (0, 1)
    out_dir = tmp_path / "runs" / "cli"
    records = read_records(out_dir / "records.jsonl")
    assert len(records) == 1
    assert code == (0 if records[0].success else 1)
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["cells"][0]["runs"] == 1
    assert (out_dir / "summary.md").read_text().startswith("### grid")


def test_render(tmp_path):
    plan = tmp_path / "plan.txt"
    plan.write_text("0,1.5,1.5\n1,2.0,1.5\n2,2.5,1.5\n")
    out = tmp_path / "scene.svg"
    assert main(["render", "--maze", "medium", "--plan", str(plan), "--out", str(out)]) == EXIT_OK
    svg = out.read_text()
    assert svg.count('<polyline class="accepted"') == 1
    assert '<circle class="start"' in svg and '<circle class="goal"' in svg


def test_gen_data_and_waypoints(room_config, tmp_path):
    data = tmp_path / "data.txt"
    wp = tmp_path / "room.wp"
    overrides = ["--dataset.n", "20", "--dataset.h_train", "10", "--waypoints.k", "3"]
    assert main(["gen-data", "--config", str(room_config), "--out", str(data)] + overrides) == EXIT_OK
    assert main(["waypoints", "--config", str(room_config), "--dataset", str(data), "--out", str(wp)]
                + overrides) == EXIT_OK
    assert len([line for line in wp.read_text().splitlines() if line and not line.startswith("#")]) == 3


def test_dumped_trees_render(room_config, tmp_path):
    main(["run", "--config", str(room_config), "--dump_trees", "true"])
    trees_dir = tmp_path / "runs" / "cli" / "trees"
    dumps = sorted(trees_dir.glob("*_tree*.txt"))
    assert [d.name for d in dumps] == ["default_task0_seed0_tree0.txt"]
    out = tmp_path / "tree.svg"
    assert main(["render", "--maze", str(tmp_path / "room.txt"), "--tree", str(dumps[0]), "--out", str(out)]) == EXIT_OK
    nodes = [line for line in dumps[0].read_text().splitlines() if not line.startswith("#")]
    assert out.read_text().count('<polyline class="discarded"') == len(nodes) - 1
