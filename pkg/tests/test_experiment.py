from __future__ import annotations

import pytest
import yaml

from ctxner.experiment import (
    ConfigError,
    PAPER_GRID,
    cell_key,
    config_hash,
    load_config,
    sweep_cells,
    window_config_for,
)


class TestLoadConfig:
    def test_defaults_and_resolution(self, project, tmp_path):
        config = load_config(str(project()))
        assert config.window.max_seq_len == 64
        assert config.grid == PAPER_GRID
        assert config.tie_break == "sum_prob"
        assert config.data.train.startswith(str(tmp_path))

    def test_missing_vocab_field(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("data: {}\n")
        with pytest.raises(ConfigError, match="config.vocab"):
            load_config(str(path))

    def test_type_error_names_position(self, project):
        path = project()
        raw = yaml.safe_load(path.read_text())
        raw["window"]["max_seq_len"] = "big"
        path.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError, match="config.window.max_seq_len"):
            load_config(str(path))

    def test_missing_path_reported(self, project):
        path = project()
        raw = yaml.safe_load(path.read_text())
        raw["data"]["test"] = "absent.conll"
        path.write_text(yaml.safe_dump(raw))
        with pytest.raises(ConfigError, match="config.data.test"):
            load_config(str(path))

    def test_repetitions_floor(self, project):
        path = project(repetitions=0)
        with pytest.raises(ConfigError, match="repetitions"):
            load_config(str(path))

    def test_unknown_strategy(self, project):
        path = project(strategies=["single", "majority"])
        with pytest.raises(ConfigError, match="majority"):
            load_config(str(path))

    def test_remote_requires_endpoint(self, project):
        path = project(backend={"type": "remote"})
        with pytest.raises(ConfigError, match="endpoint"):
            load_config(str(path))

    def test_hash_stable_under_reordering(self, project):
        path = project()
        config_a = load_config(str(path))
        raw = yaml.safe_load(path.read_text())
        reordered = dict(reversed(list(raw.items())))
        path.write_text(yaml.safe_dump(reordered, sort_keys=False))
        config_b = load_config(str(path))
        assert config_hash(config_a) == config_hash(config_b)


class TestStrategyMapping:
    def test_cmv_with_single_windows_rejected(self, project):
        config = load_config(str(project(window_strategy="single")))
        with pytest.raises(ConfigError, match="multi-context"):
            window_config_for(config, "cmv-vote")

    def test_single_strategy_uses_single_windows(self, project):
        config = load_config(str(project()))
        assert window_config_for(config, "single").strategy == "single"
        assert window_config_for(config, "cmv-vote").strategy == "first"


class TestSweepCells:
    def test_paper_grid_cell_count(self):
        assert len(sweep_cells(PAPER_GRID)) == 48

    def test_tie_break_ordering(self):
        cells = sweep_cells(PAPER_GRID)
        assert cells[0] == (2e-5, 2, 1)
        assert cells[1] == (2e-5, 2, 2)
        assert cells[-1] == (5e-5, 16, 4)

    def test_cell_key_format(self):
        assert cell_key(2e-5, 4, 3) == "lr=2e-05,bs=4,ep=3"
