"""Experiment configuration: YAML in, validated dataclasses out.

See ``configs/README.md`` for the schema.  Every violation found is reported
in a single :class:`ConfigurationError`.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigurationError

DEFAULT_LEARNING_RATES = {"sgd": 0.01, "adagrad": 0.05, "adam": 0.005}
ROLES = ("train", "validation", "test")


@dataclass
class DatasetSpec:
    format: str = "csv"
    train: object = None            # csv path, or {images, labels} for idx
    validation: object = None
    test: object = None
    task: str = "classification"
    label_column: object = -1
    has_header: bool = False
    delimiter: str = ","
    categorical_columns: list = field(default_factory=list)
    label_bins: list | None = None
    splits: dict = field(default_factory=dict)
    rotation: int = 0
    seed: int = 1


@dataclass
class FeatureSpec:
    type: str = "inner_product"     # inner_product | conv | none
    count: int = 100
    kernels: int = 80
    kernel_size: int = 5
    stride: int = 3


@dataclass
class ForestSpec:
    kind: str = "tree"
    trees: int = 10
    depth: int = 5
    outputs: int | None = None      # K; inferred from the data when unset


@dataclass
class ArchitectureSpec:
    features: FeatureSpec = field(default_factory=FeatureSpec)
    batch_norm: bool = True
    forest: ForestSpec = field(default_factory=ForestSpec)


@dataclass
class OptimizerSpec:
    name: str = "adagrad"
    learning_rate: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class RunSpec:
    batch_size: int = 32
    max_steps: int = 1000
    eval_interval: int = 100
    eval_batch_size: int = 1000
    seed: int = 1
    selection: str = "validation"   # validation | test
    dtype: str = "float32"
    backend: str | None = None


@dataclass
class OutputSpec:
    dir: str = "runs/experiment"
    metrics: str = "metrics.tsv"
    model: str = "model.hfm"
    best_model: str = "best_model.hfm"


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    architecture: ArchitectureSpec = field(default_factory=ArchitectureSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    run: RunSpec = field(default_factory=RunSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        """Canonical YAML form with every default filled in."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @property
    def out_dir(self) -> Path:
        return Path(self.output.dir)


def _build(cls, data, where, errors):
    """Instantiate dataclass ``cls`` from a mapping, recording unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{where}: expected a mapping, got {type(data).__name__}")
        return cls()
    kwargs = {}
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in data.items():
        if key not in known:
            errors.append(f"{where}.{key}: unknown key")
            continue
        kwargs[key] = value
    return cls(**kwargs)


def _resolve(value, base):
    if value is None:
        return None
    if isinstance(value, dict):
        return {k: _resolve(v, base) for k, v in value.items()}
    path = Path(os.path.expanduser(str(value)))
    return str(path if path.is_absolute() else (base / path))


def _paths(value):
    if value is None:
        return []
    if isinstance(value, dict):
        return list(value.values())
    return [value]


def _positive_int(errors, name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        errors.append(f"{name}: must be an integer >= {minimum}, got {value!r}")


def validate(cfg: ExperimentConfig, check_paths=True, errors=None):
    """Check value ranges and file existence; raise listing all problems."""
    errors = [] if errors is None else errors
    ds, arch, opt, run = cfg.dataset, cfg.architecture, cfg.optimizer, cfg.run
    if ds.format not in ("csv", "idx"):
        errors.append(f"dataset.format: must be csv or idx, got {ds.format!r}")
    if ds.task not in ("classification", "regression"):
        errors.append(f"dataset.task: must be classification or regression, got {ds.task!r}")
    if ds.train is None:
        errors.append("dataset.train: required")
    for role in ROLES:
        value = getattr(ds, role)
        if ds.format == "idx" and value is not None and (
                not isinstance(value, dict) or set(value) != {"images", "labels"}):
            errors.append(f"dataset.{role}: idx data needs a mapping with images and labels")
        if check_paths:
            for p in _paths(value):
                if not Path(p).exists():
                    errors.append(f"dataset.{role}: file not found: {p}")
    if not isinstance(ds.splits, dict):
        errors.append("dataset.splits: expected a mapping of role to fraction")
    else:
        for role, frac in ds.splits.items():
            if role not in ROLES:
                errors.append(f"dataset.splits.{role}: unknown role")
            elif getattr(ds, role) is not None and role != "train":
                errors.append(f"dataset.splits.{role}: role already has its own file")
            if not isinstance(frac, (int, float)) or frac <= 0:
                errors.append(f"dataset.splits.{role}: fraction must be positive")
        if sum(v for v in ds.splits.values() if isinstance(v, (int, float))) > 1 + 1e-9:
            errors.append("dataset.splits: fractions sum to more than 1")
        if ds.splits and "train" not in ds.splits:
            errors.append("dataset.splits: must include train")
    feats = arch.features
    if feats.type not in ("inner_product", "conv", "none"):
        errors.append(f"architecture.features.type: unknown {feats.type!r}")
    elif feats.type == "inner_product":
        _positive_int(errors, "architecture.features.count", feats.count)
    elif feats.type == "conv":
        _positive_int(errors, "architecture.features.kernels", feats.kernels)
        _positive_int(errors, "architecture.features.kernel_size", feats.kernel_size)
        _positive_int(errors, "architecture.features.stride", feats.stride)
    forest = arch.forest
    if forest.kind not in ("tree", "fern"):
        errors.append(f"architecture.forest.kind: must be tree or fern, got {forest.kind!r}")
    _positive_int(errors, "architecture.forest.trees", forest.trees)
    _positive_int(errors, "architecture.forest.depth", forest.depth)
    if forest.outputs is not None:
        _positive_int(errors, "architecture.forest.outputs", forest.outputs)
    if opt.name not in DEFAULT_LEARNING_RATES:
        errors.append(f"optimizer.name: must be one of sgd, adagrad, adam; got {opt.name!r}")
    if opt.learning_rate is not None and not (isinstance(opt.learning_rate, (int, float))
                                              and opt.learning_rate > 0):
        errors.append(f"optimizer.learning_rate: must be positive, got {opt.learning_rate!r}")
    for name in ("beta1", "beta2"):
        value = getattr(opt, name)
        if not isinstance(value, (int, float)) or not 0 <= value < 1:
            errors.append(f"optimizer.{name}: must lie in [0, 1), got {value!r}")
    if not isinstance(opt.weight_decay, (int, float)) or opt.weight_decay < 0:
        errors.append(f"optimizer.weight_decay: must be >= 0, got {opt.weight_decay!r}")
    _positive_int(errors, "run.batch_size", run.batch_size)
    _positive_int(errors, "run.max_steps", run.max_steps, minimum=0)
    _positive_int(errors, "run.eval_interval", run.eval_interval)
    _positive_int(errors, "run.eval_batch_size", run.eval_batch_size)
    _positive_int(errors, "run.seed", run.seed, minimum=0)
    _positive_int(errors, "dataset.seed", ds.seed, minimum=0)
    _positive_int(errors, "dataset.rotation", ds.rotation, minimum=0)
    if run.selection not in ("validation", "test"):
        errors.append(f"run.selection: must be validation or test, got {run.selection!r}")
    if run.dtype not in ("float32", "float64"):
        errors.append(f"run.dtype: must be float32 or float64, got {run.dtype!r}")
    if run.backend not in (None, "numpy", "compiled"):
        errors.append(f"run.backend: must be numpy or compiled, got {run.backend!r}")
    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))


def parse_config(source, check_paths=True, overrides=None) -> ExperimentConfig:
    """Load a config from a path or YAML text, fill defaults and validate.

    Relative data and output paths are resolved against the config file's
    directory (or the working directory for inline text).  ``overrides`` is a
    nested mapping merged over the document before validation.
    """
    base = Path.cwd()
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).suffix in (".yaml", ".yml")):
        path = Path(source)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        text = path.read_text()
        base = path.resolve().parent
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a mapping at the top level")
    for section, values in (overrides or {}).items():
        doc.setdefault(section, {})
        if isinstance(doc[section], dict):
            doc[section].update(values)
    errors = []
    sections = {"dataset": DatasetSpec, "architecture": ArchitectureSpec,
                "optimizer": OptimizerSpec, "run": RunSpec, "output": OutputSpec}
    built = {}
    for key in doc:
        if key not in sections:
            errors.append(f"{key}: unknown section")
    for key, cls in sections.items():
        if cls is ArchitectureSpec:
            raw = doc.get(key) or {}
            if not isinstance(raw, dict):
                errors.append(f"{key}: expected a mapping")
                raw = {}
            unknown = [k for k in raw if k not in ("features", "batch_norm", "forest")]
            errors.extend(f"{key}.{k}: unknown key" for k in unknown)
            built[key] = ArchitectureSpec(
                features=_build(FeatureSpec, raw.get("features"), f"{key}.features", errors),
                batch_norm=raw.get("batch_norm", True),
                forest=_build(ForestSpec, raw.get("forest"), f"{key}.forest", errors))
        else:
            built[key] = _build(cls, doc.get(key), key, errors)
    cfg = ExperimentConfig(**built)
    ds = cfg.dataset
    for role in ROLES:
        setattr(ds, role, _resolve(getattr(ds, role), base))
    cfg.output.dir = _resolve(cfg.output.dir, base)
    if cfg.optimizer.learning_rate is None:
        cfg.optimizer.learning_rate = DEFAULT_LEARNING_RATES.get(cfg.optimizer.name, 0.01)
    if not ds.splits and ds.train is not None:
        ds.splits = _default_splits(ds)
    validate(cfg, check_paths=check_paths, errors=errors)
    return cfg


def _default_splits(ds: DatasetSpec) -> dict:
    """Hold out a quarter of the training file for each missing role."""
    missing = [r for r in ("validation", "test") if getattr(ds, r) is None]
    if not missing:
        return {"train": 1.0}
    hold = 0.25
    out = {"train": 1.0 - hold * len(missing)}
    out.update({r: hold for r in missing})
    return out
