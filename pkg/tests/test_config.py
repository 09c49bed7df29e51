"""
配置管理测试
"""
from pathlib import Path

import pytest
import yaml

from docbin.config import CONFIG_SECTIONS, BinarizationConfig
from docbin.core.interfaces import ForestHyperParams
from docbin.exceptions import ConfigurationError


def test_defaults_are_valid():
    config = BinarizationConfig.create_default()
    assert config.validate() == []
    assert config.first_pass_samples == 9600
    assert config.second_pass_samples == 9600
    assert config.n_trees == 100
    assert config.k_features == 12
    assert config.ltp_tolerance == 8.0
    assert config.lip_threshold == 0.01


def test_every_field_belongs_to_one_section():
    names = [name for section in CONFIG_SECTIONS.values() for name in section]
    assert sorted(names) == sorted(BinarizationConfig().to_dict())
    assert len(names) == len(set(names))


def test_create_from_grouped_dict():
    config = BinarizationConfig.create_from_config({
        'Threshold_Settings': {'niblack_k': -0.3},
        'Forest_Settings': {'n_trees': 20, 'max_depth': 12},
        'Runtime_Settings': {'threads': 2},
        'Unknown_Section': {'x': 1},
    })
    assert config.niblack_k == -0.3
    assert config.n_trees == 20
    assert config.max_depth == 12
    assert config.threads == 2
    assert config.sauvola_k == 0.5


def test_save_and_load(tmp_path):
    config = BinarizationConfig(n_trees=7, cv_n_trees_grid=[5, 9], log_level="DEBUG")
    path = tmp_path / "run.config.yaml"
    config.save(str(path))
    raw = yaml.safe_load(path.read_text(encoding='utf-8'))
    assert list(raw) == list(CONFIG_SECTIONS)
    assert BinarizationConfig.load(str(path)) == config


def test_load_rejects_invalid_values(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("Threshold_Settings:\n  niblack_k: 0.2\n", encoding='utf-8')
    with pytest.raises(ConfigurationError, match="Niblack"):
        BinarizationConfig.load(str(path))


def test_load_rejects_broken_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("Forest_Settings: [unclosed\n", encoding='utf-8')
    with pytest.raises(ConfigurationError):
        BinarizationConfig.load(str(path))


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        BinarizationConfig.load(str(tmp_path / "none.yaml"))


def test_overrides_are_coerced():
    config = BinarizationConfig().with_overrides({
        'n_trees': '25',
        'max_depth': 'null',
        'enable_cv': 'true',
        'cv_n_trees_grid': '[10, 20]',
        'niblack_k': '-0.1',
        'output_dir': 'results',
    })
    assert config.n_trees == 25
    assert config.max_depth is None
    assert config.enable_cv is True
    assert config.cv_n_trees_grid == [10, 20]
    assert config.niblack_k == -0.1
    assert config.output_dir == 'results'


def test_unknown_override():
    with pytest.raises(ConfigurationError):
        BinarizationConfig().with_overrides({'trees': '5'})


def test_bad_override_type():
    with pytest.raises(ConfigurationError):
        BinarizationConfig().with_overrides({'enable_cv': '3'})


@pytest.mark.parametrize("field,value", [
    ('min_window', 14),
    ('first_pass_samples', 8),
    ('min_samples_split', 1),
    ('cv_folds', 1),
    ('cv_min_samples_split_grid', []),
    ('lip_threshold', 1.5),
    ('log_level', 'LOUD'),
])
def test_validate_reports_errors(field, value):
    config = BinarizationConfig(**{field: value})
    assert len(config.validate()) == 1
    with pytest.raises(ConfigurationError):
        config.raise_if_invalid()


def test_cv_grid_expands_trees_first():
    config = BinarizationConfig(cv_n_trees_grid=[10, 20], cv_min_samples_split_grid=[2, 4])
    grid = config.cv_grid()
    assert [(hp.n_trees, hp.min_samples_split) for hp in grid] == [(10, 2), (10, 4), (20, 2), (20, 4)]
    assert config.forest_hyperparams() == ForestHyperParams()


def test_shipped_default_file_matches_defaults():
    path = Path(__file__).resolve().parents[1] / "config" / "default.yaml"
    assert BinarizationConfig.load(str(path)) == BinarizationConfig()
