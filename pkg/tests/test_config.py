from pathlib import Path

import pytest
import yaml

from hingeforest.config import parse_config
from hingeforest.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
dataset:
  train: data.csv
"""


def test_defaults_filled(tmp_path):
    (tmp_path / "data.csv").write_text("1,a\n")
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(MINIMAL)
    cfg = parse_config(cfg_path)
    assert cfg.dataset.train == str(tmp_path / "data.csv")
    assert cfg.dataset.splits == {"train": 0.5, "validation": 0.25, "test": 0.25}
    assert cfg.architecture.features.type == "inner_product"
    assert cfg.architecture.features.count == 100
    assert (cfg.architecture.forest.trees, cfg.architecture.forest.depth) == (10, 5)
    assert cfg.optimizer.name == "adagrad" and cfg.optimizer.learning_rate == 0.05
    assert cfg.run.selection == "validation" and cfg.run.seed == 1
    assert cfg.output.dir == str(tmp_path / "runs" / "experiment")


def test_default_learning_rate_per_optimizer():
    for name, lr in (("sgd", 0.01), ("adam", 0.005)):
        cfg = parse_config(MINIMAL + f"optimizer: {{name: {name}}}\n", check_paths=False)
        assert cfg.optimizer.learning_rate == lr


def test_dump_is_canonical_and_reparses():
    cfg = parse_config(MINIMAL, check_paths=False)
    text = cfg.dump()
    doc = yaml.safe_load(text)
    assert list(doc) == ["dataset", "architecture", "optimizer", "run", "output"]
    again = parse_config(text, check_paths=False)
    assert again.to_dict() == cfg.to_dict()
    assert again.dump() == text


def test_all_violations_reported_together():
    text = """
dataset: {train: data.csv, bogus: 1}
architecture:
  forest: {kind: bush, depth: 0}
optimizer: {name: rmsprop}
run: {batch_size: -2, selection: best}
extra: {}
"""
    with pytest.raises(ConfigurationError) as info:
        parse_config(text, check_paths=False)
    msg = str(info.value)
    for needle in ("dataset.bogus: unknown key", "architecture.forest.kind", "forest.depth",
                   "optimizer.name", "run.batch_size", "run.selection", "extra: unknown section"):
        assert needle in msg


def test_missing_file_reported(tmp_path):
    with pytest.raises(ConfigurationError, match="file not found"):
        parse_config(MINIMAL, check_paths=True)
    with pytest.raises(ConfigurationError, match="config file not found"):
        parse_config(tmp_path / "nope.yaml")


def test_idx_requires_mapping():
    with pytest.raises(ConfigurationError, match="images and labels"):
        parse_config("dataset: {format: idx, train: a.gz}\n", check_paths=False)


def test_split_validation():
    with pytest.raises(ConfigurationError, match="sum to more than 1"):
        parse_config(MINIMAL + "  splits: {train: 0.8, test: 0.5}\n", check_paths=False)
    with pytest.raises(ConfigurationError, match="must include train"):
        parse_config(MINIMAL + "  splits: {test: 0.5}\n", check_paths=False)


def test_overrides_merge():
    cfg = parse_config(MINIMAL, check_paths=False, overrides={"run": {"seed": 9, "max_steps": 3}})
    assert cfg.run.seed == 9 and cfg.run.max_steps == 3


def test_malformed_yaml():
    with pytest.raises(ConfigurationError, match="malformed"):
        parse_config("dataset: [unclosed\n", check_paths=False)
    with pytest.raises(ConfigurationError, match="mapping"):
        parse_config("- a\n- b\n", check_paths=False)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = parse_config(path, check_paths=False)
    assert cfg.run.max_steps > 0
