"""Run configuration: INI-style file with per-stage sections, strict schema.

Sections mirror the pipeline stages; every key is validated against the
documented schema and unknown sections or keys are rejected. Command-line
flags override file values; ``--seed`` overrides both.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .net.model import ARCHITECTURES, BN_POSITIONS, ModelConfig
from .net.training import DECLARED_GRID_SIZE, GridSpace
from .prep import SplitSpec
from .synth import CohortSpec


@dataclass
class PrepConfig:
    pca_components: int = 12
    smote_k: int = 5
    test_participants: tuple[str, ...] = ("P8", "P11", "P16")
    validation_participants: tuple[str, ...] = ("P14", "P15")
    ma_window: int = 5
    detrend: str = "auto"  # auto | on | off

    def split_spec(self) -> SplitSpec:
        return SplitSpec(test_participants=frozenset(self.test_participants),
                         validation_participants=frozenset(self.validation_participants))


@dataclass
class TrainSection:
    architecture: str = "cnn_gru"
    gru_units: int = 8
    dropout_rate: float = 0.1
    learning_rate: float = 0.003
    batch_size: int = 4
    max_epochs: int = 150
    patience: int = 8
    conv_filters: int = 32
    dense_units: int = 64
    bn_position: str = "pre_gru"
    bn_identity_fallback: bool = False
    strategy: str = "single"  # single | grid

    def model_config(self, seed: int, input_features: int = 12) -> ModelConfig:
        return ModelConfig(
            conv_filters=self.conv_filters, gru_units=self.gru_units,
            dropout_rate=self.dropout_rate, dense_units=self.dense_units,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, seed=seed,
            architecture=self.architecture, input_features=input_features,
            bn_position=self.bn_position,
            bn_identity_fallback=self.bn_identity_fallback)


@dataclass
class GridSection:
    gru_units: tuple[int, ...] = (8, 16)
    dropout_rates: tuple[float, ...] = (0.1, 0.2, 0.4)
    learning_rates: tuple[float, ...] = (0.0005, 0.001, 0.003)
    batch_sizes: tuple[int, ...] = (1, 4, 8, 16, 32)
    max_epochs: int = 150
    declared_count: int = DECLARED_GRID_SIZE

    def space(self) -> GridSpace:
        return GridSpace(gru_units=self.gru_units, dropout_rates=self.dropout_rates,
                         learning_rates=self.learning_rates,
                         batch_sizes=self.batch_sizes)


@dataclass
class ExplainSection:
    background_rows: int = 128
    max_shapley_features: int = 16


@dataclass
class EffortSection:
    mode: str = "literal"  # literal | conventional
    predictions: str = "model"  # model | oracle


@dataclass
class RunConfig:
    seed: int = 42
    out_dir: str = "."
    synth: CohortSpec = field(default_factory=CohortSpec)
    prep: PrepConfig = field(default_factory=PrepConfig)
    train: TrainSection = field(default_factory=TrainSection)
    grid: GridSection = field(default_factory=GridSection)
    explain: ExplainSection = field(default_factory=ExplainSection)
    effort: EffortSection = field(default_factory=EffortSection)

    def validate(self) -> None:
        self.synth = dataclasses.replace(self.synth, seed=self.seed)
        self.synth.validate()
        if self.prep.pca_components < 1 or self.prep.pca_components > 16:
            raise ConfigError("pca_components must lie in 1..16")
        if self.prep.detrend not in ("auto", "on", "off"):
            raise ConfigError("detrend must be auto, on, or off")
        if self.train.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        if self.train.bn_position not in BN_POSITIONS:
            raise ConfigError(f"bn_position must be one of {BN_POSITIONS}")
        if self.train.strategy not in ("single", "grid"):
            raise ConfigError("strategy must be single or grid")
        if self.effort.mode not in ("literal", "conventional"):
            raise ConfigError("effort mode must be literal or conventional")
        if self.effort.predictions not in ("model", "oracle"):
            raise ConfigError("predictions must be model or oracle")
        if self.explain.background_rows < 1:
            raise ConfigError("background_rows must be >= 1")
        if not 1 <= self.explain.max_shapley_features <= 16:
            raise ConfigError("max_shapley_features must lie in 1..16 "
                              "(exact coalition enumeration)")
        overlap = set(self.prep.test_participants) & set(self.prep.validation_participants)
        if overlap:
            raise ConfigError(f"participants in both test and validation: {sorted(overlap)}")


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_str_tuple(raw: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in raw.split(",") if s.strip())


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(s) for s in raw.split(",") if s.strip())


def _parse_float_tuple(raw: str) -> tuple[float, ...]:
    return tuple(float(s) for s in raw.split(",") if s.strip())


# section -> key -> (attribute path, parser)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "global": {
        "seed": ("seed", int),
        "out_dir": ("out_dir", str),
    },
    "synth": {
        "n_participants": ("synth.n_participants", int),
        "n_questions": ("synth.n_questions", int),
        "sessions": ("synth.sessions", int),
        "segments_per_session": ("synth.segments_per_session", int),
        "questions_per_segment": ("synth.questions_per_segment", int),
        "sample_rate": ("synth.sample_rate", float),
        "samples_per_trial": ("synth.samples_per_trial", int),
        "effect_size": ("synth.effect_size", float),
        "noise_sd": ("synth.noise_sd", float),
        "drift_slope_sd": ("synth.drift_slope_sd", float),
        "target_correct_rate": ("synth.target_correct_rate", float),
        "missing_rate": ("synth.missing_rate", float),
    },
    "prep": {
        "pca_components": ("prep.pca_components", int),
        "smote_k": ("prep.smote_k", int),
        "test_participants": ("prep.test_participants", _parse_str_tuple),
        "validation_participants": ("prep.validation_participants", _parse_str_tuple),
        "ma_window": ("prep.ma_window", int),
        "detrend": ("prep.detrend", str),
    },
    "train": {
        "architecture": ("train.architecture", str),
        "gru_units": ("train.gru_units", int),
        "dropout_rate": ("train.dropout_rate", float),
        "learning_rate": ("train.learning_rate", float),
        "batch_size": ("train.batch_size", int),
        "max_epochs": ("train.max_epochs", int),
        "patience": ("train.patience", int),
        "conv_filters": ("train.conv_filters", int),
        "dense_units": ("train.dense_units", int),
        "bn_position": ("train.bn_position", str),
        "bn_identity_fallback": ("train.bn_identity_fallback", _parse_bool),
        "strategy": ("train.strategy", str),
    },
    "grid": {
        "gru_units": ("grid.gru_units", _parse_int_tuple),
        "dropout_rates": ("grid.dropout_rates", _parse_float_tuple),
        "learning_rates": ("grid.learning_rates", _parse_float_tuple),
        "batch_sizes": ("grid.batch_sizes", _parse_int_tuple),
        "max_epochs": ("grid.max_epochs", int),
        "declared_count": ("grid.declared_count", int),
    },
    "explain": {
        "background_rows": ("explain.background_rows", int),
        "max_shapley_features": ("explain.max_shapley_features", int),
    },
    "effort": {
        "mode": ("effort.mode", str),
        "predictions": ("effort.predictions", str),
    },
}


def _assign(config: RunConfig, dotted: str, value) -> None:
    if "." not in dotted:
        setattr(config, dotted, value)
        return
    section, attr = dotted.split(".", 1)
    holder = getattr(config, section)
    try:
        setattr(holder, attr, value)
    except dataclasses.FrozenInstanceError:
        setattr(config, section, dataclasses.replace(holder, **{attr: value}))


def load_config(path=None, *, seed=None, out_dir=None, predictions=None) -> RunConfig:
    """Parse and validate a config file, applying flag overrides."""
    config = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as err:
            raise ConfigError(f"cannot parse config file: {err}") from None
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                dotted, parse = _SCHEMA[section][key]
                try:
                    value = parse(raw)
                except (TypeError, ValueError) as err:
                    raise ConfigError(
                        f"bad value for [{section}] {key} = {raw!r}: {err}") from None
                _assign(config, dotted, value)
    if seed is not None:
        config.seed = int(seed)
    if out_dir is not None:
        config.out_dir = str(out_dir)
    if predictions is not None:
        config.effort.predictions = predictions
    config.validate()
    return config
