"""Experiment configuration read from YAML.

Layout (every section optional except ``data``)::

    seed: 0
    output_dir: runs/demo
    data:
      train: train.jsonl        # paths are relative to the config file
      dev: dev.jsonl
      test: test.jsonl
      num_types: 3
    synth:                      # generate the splits instead of reading them
      train: {generator: ..., params: ..., num_seqs: ..., horizon: ..., seed: ...}
      dev: {...}
      test: {...}
    horizon: {T: 10.0, T_prime: 20.0}   # or {token_budget: 20} or {length: 1.5}
    base: {family: hawkes_exp, optimizer: {method: lbfgs}}
    features: {time_basis_count: 8, window_count: 4}
    energy: {hidden: [64, 32]}
    train: {objective: multi, N: 5, beta: 1.0, regularize: false, epochs: 50,
            optimizer: {lr: 0.001, batch_size: 32}}
    infer: {M: 20}
    otd: {c_del: 1.0, c_del_grid: [0.05, 0.5, 1, 1.5, 2, 3, 4]}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .core import Dataset, split_dataset
from .energy import FeatureConfig
from .fitting import OptimizerConfig
from .inference import InferConfig
from .metrics import OtdConfig
from .models import FAMILIES
from .nce import TrainConfig
from .synth import SynthSpec, SynthSpecError

SPLITS = ("train", "dev", "test")


class ConfigError(ValueError):
    pass


@dataclass
class HorizonPolicy:
    """How each sequence is cut into prefix and continuation.

    Exactly one of: a global ``T``/``T_prime``; ``token_budget`` (last n
    events form the continuation); ``length`` (``T' = t_end``,
    ``T = t_end - length``).
    """

    T: float | None = None
    T_prime: float | None = None
    token_budget: int | None = None
    length: float | None = None

    def __post_init__(self):
        chosen = [self.T is not None or self.T_prime is not None,
                  self.token_budget is not None, self.length is not None]
        if sum(chosen) != 1:
            raise ConfigError("horizon needs exactly one of T/T_prime, token_budget, length")
        if chosen[0] and (self.T is None or self.T_prime is None or not self.T < self.T_prime):
            raise ConfigError("horizon T and T_prime must both be set with T < T_prime")

    def split(self, data: Dataset):
        return split_dataset(data, T=self.T, T_prime=self.T_prime,
                             token_budget=self.token_budget, horizon=self.length)


@dataclass
class ExperimentConfig:
    data: dict
    num_types: int
    horizon: HorizonPolicy
    base_family: str = "hawkes_exp"
    base_optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    features: dict = field(default_factory=dict)
    hidden: tuple = (64, 32)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    otd: OtdConfig = field(default_factory=OtdConfig)
    seed: int = 0
    output_dir: Path | None = None
    synth: dict = field(default_factory=dict)
    source: Path | None = None

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(self.num_types, **self.features)

    def to_dict(self) -> dict:
        """Resolved settings, suitable for writing next to run outputs."""
        def plain(v):
            if dataclasses.is_dataclass(v):
                return {k: plain(x) for k, x in dataclasses.asdict(v).items()}
            if isinstance(v, dict):
                return {str(k): plain(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [plain(x) for x in v]
            if isinstance(v, Path):
                return str(v)
            return v

        return {
            "seed": self.seed,
            "num_types": self.num_types,
            "data": plain(self.data),
            "synth": {k: s.to_dict() for k, s in self.synth.items()},
            "horizon": plain(self.horizon),
            "base": {"family": self.base_family, "optimizer": plain(self.base_optimizer)},
            "features": plain(self.feature_config()),
            "energy": {"hidden": list(self.hidden)},
            "train": plain(self.train),
            "infer": plain(self.infer),
            "otd": plain(self.otd),
        }


def _build(cls, section, name):
    if section is None:
        return cls()
    if not isinstance(section, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r}: {exc}") from None


def _optimizer(section, name, seed, **defaults):
    section = dict(section or {})
    if "betas" in section:
        section["betas"] = tuple(section["betas"])
    section.setdefault("seed", seed)
    return _build(OptimizerConfig, {**defaults, **section}, name)


TOP_LEVEL = {"seed", "output_dir", "data", "synth", "horizon", "base", "features",
             "energy", "train", "infer", "otd"}


def parse_config(raw: dict, base_dir: Path = Path("."), *, check_paths=True) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    seed = int(raw.get("seed", 0))

    synth = {}
    for split, spec in (raw.get("synth") or {}).items():
        if split not in SPLITS:
            raise ConfigError(f"synth split must be one of {SPLITS}, got {split!r}")
        try:
            synth[split] = SynthSpec.from_dict(spec)
        except (SynthSpecError, TypeError) as exc:
            raise ConfigError(f"synth.{split}: {exc}") from None

    data_raw = dict(raw.get("data") or {})
    num_types = data_raw.pop("num_types", None)
    if num_types is None and synth:
        num_types = next(iter(synth.values())).model().num_types
    if num_types is None:
        raise ConfigError("data.num_types is required")
    data = {}
    for split in SPLITS:
        if split in data_raw:
            p = Path(data_raw.pop(split))
            data[split] = p if p.is_absolute() else base_dir / p
    if data_raw:
        raise ConfigError(f"unknown keys in 'data': {sorted(data_raw)}")
    missing = [s for s in ("train", "test") if s not in data and s not in synth]
    if missing:
        raise ConfigError(f"no data source for split(s) {missing}")
    if check_paths:
        for split, p in data.items():
            if split not in synth and not p.exists():
                raise ConfigError(f"data.{split}: file not found: {p}")

    base = dict(raw.get("base") or {})
    family = base.pop("family", "hawkes_exp")
    if family not in FAMILIES:
        raise ConfigError(f"base.family must be one of {sorted(FAMILIES)}")
    base_opt = _optimizer(base.pop("optimizer", None), "base.optimizer", seed)
    if base:
        raise ConfigError(f"unknown keys in 'base': {sorted(base)}")

    train = dict(raw.get("train") or {})
    train["optimizer"] = _optimizer(train.get("optimizer"), "train.optimizer", seed, lr=1e-3)
    energy = dict(raw.get("energy") or {})
    hidden = tuple(int(h) for h in energy.pop("hidden", (64, 32)))
    if energy:
        raise ConfigError(f"unknown keys in 'energy': {sorted(energy)}")
    otd = dict(raw.get("otd") or {})
    if "c_del_grid" in otd:
        otd["c_del_grid"] = tuple(float(c) for c in otd["c_del_grid"])

    features = dict(raw.get("features") or {})
    try:
        FeatureConfig(int(num_types), **features)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'features': {exc}") from None

    out = raw.get("output_dir")
    cfg = ExperimentConfig(
        data=data,
        num_types=int(num_types),
        horizon=_build(HorizonPolicy, raw.get("horizon"), "horizon"),
        base_family=family,
        base_optimizer=base_opt,
        features=features,
        hidden=hidden,
        train=_build(TrainConfig, train, "train"),
        infer=_build(InferConfig, raw.get("infer"), "infer"),
        otd=_build(OtdConfig, otd, "otd"),
        seed=seed,
        output_dir=None if out is None else base_dir / out,
        synth=synth,
    )
    for split, spec in synth.items():
        if spec.model().num_types != cfg.num_types:
            raise ConfigError(f"synth.{split} has K={spec.model().num_types}, "
                              f"config has num_types={cfg.num_types}")
    return cfg


def load_config(path, *, check_paths=True) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    cfg = parse_config(raw, path.parent, check_paths=check_paths)
    cfg.source = path
    return cfg

