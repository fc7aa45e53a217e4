import pytest

from config import (
    WORKERS_ENV,
    ConfigError,
    apply_preset,
    env_workers,
    load_run_config,
    nest,
    parse_overrides,
)
from schemas import RunConfig


class TestOverrides:
    def test_both_forms(self):
        assert parse_overrides(["--oc.budget", "50", "--dc.max-rounds=3"]) == {
            "oc.budget": "50",
            "dc.max_rounds": "3",
        }

    def test_value_may_contain_equals(self):
        assert parse_overrides(["--name=a=b"]) == {"name": "a=b"}

    @pytest.mark.parametrize("args", [["oc.budget", "5"], ["--oc.budget"], ["--", "5"]])
    def test_malformed(self, args):
        with pytest.raises(ConfigError):
            parse_overrides(args)


class TestNest:
    def test_dotted_keys(self):
        assert nest({"oc.budget": "5", "oc.h_plan": "4", "name": "x"}) == {
            "oc": {"budget": "5", "h_plan": "4"},
            "name": "x",
        }

    def test_blank_values_are_unset(self):
        assert nest({"graph_path": "  ", "name": "x"}) == {"name": "x"}

    @pytest.mark.parametrize("flat", [{"oc.budget": "5", "oc": "1"}, {"oc": "1", "oc.budget": "5"}])
    def test_scalar_and_section_conflict(self, flat):
        with pytest.raises(ConfigError):
            nest(flat)

    def test_key_without_value(self):
        with pytest.raises(ConfigError):
            nest({"oc.budget": None})


class TestPresets:
    def test_giant_defaults(self):
        data = apply_preset({"maze": "giant"})
        assert data["waypoints"]["k"] == 24
        assert data["pc_build"] == {"pair_budget": 10, "pair_max_depth": 1}
        assert data["oc"]["guidance_levels"] == [0.5, 1.0, 2.0, 3.0, 4.0]

    def test_user_values_win(self):
        data = apply_preset({"maze": "large", "waypoints": {"k": "3"}})
        assert data["waypoints"]["k"] == "3"
        assert data["pc_build"]["pair_budget"] == 20

    def test_unknown_maze_file_untouched(self):
        assert apply_preset({"maze": "mine/custom.txt"}) == {"maze": "mine/custom.txt"}


class TestLoad:
    def test_defaults(self):
        cfg = load_run_config()
        assert cfg.composer == "oc" and cfg.maze == "medium"
        assert cfg.waypoints.k == 6
        assert cfg.pc_infer.L == cfg.oc.L == 400

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text(
            "# benchmark run\n"
            "composer=dc\n"
            "oc.budget=50\n"
            "oc.guidance_levels=0.5,1.0\n"
            "seeds=1,2\n"
        )
        cfg = load_run_config(path, ["--oc.budget", "7", "--dc.max_rounds=9"])
        assert cfg.composer == "dc"
        assert cfg.oc.budget == 7
        assert cfg.oc.guidance_levels == [0.5, 1.0]
        assert cfg.seeds == [1, 2]
        assert cfg.dc.max_rounds == 9

    def test_mapping_overrides(self):
        cfg = load_run_config(overrides={"oc.L": "100"})
        assert cfg.oc.L == 100 and cfg.pc_infer.L == 100

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_run_config(tmp_path / "absent.env")

    @pytest.mark.parametrize("overrides", [
        {"oc.bogus": "1"},
        {"oc.budget": "0"},
        {"composer": "xyz"},
        {"composer": "oc", "ablation.eps": "0.2"},
        {"composer": "dc", "ablation.cache": "true"},
        {"oc.h_plan": "50", "oc.L": "40"},
        {"tasks.explicit": "1,2,3"},
        {"maze": "no-such-maze"},
        {"waypoints.path": "/no/such/file.wp"},
    ])
    def test_rejected(self, overrides):
        with pytest.raises(ConfigError):
            load_run_config(overrides=overrides)

    def test_ablation_views(self):
        cfg = load_run_config(overrides={
            "composer": "pc",
            "ablation.fixed_guidance_level": "2.0",
            "ablation.fast_replanning": "false",
        })
        oc = cfg.effective_oc()
        assert oc.guidance_levels == [2.0] and oc.fast_replanning is False
        assert cfg.oc.fast_replanning is True

    def test_maze_file_reference(self, tmp_path):
        maze = tmp_path / "tiny.txt"
        maze.write_text("#####\n#...#\n#####\n")
        cfg = load_run_config(overrides={"maze": str(maze)})
        assert cfg.maze == str(maze)


class TestWorkers:
    def test_default(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert env_workers(3) == 3

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "4")
        assert env_workers() == 4

    @pytest.mark.parametrize("raw", ["zero", "0"])
    def test_invalid(self, monkeypatch, raw):
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ConfigError):
            env_workers()


def test_run_config_is_strict():
    with pytest.raises(ValueError):
        RunConfig(unknown=1)
