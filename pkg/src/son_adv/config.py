"""Experiment configuration: dataclasses plus a validating JSON loader."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .attacks import AttackSpec, FgsmConfig, JsmaConfig, spec_from_dict, spec_to_dict
from .dataset import GeneratorConfig
from .errors import ConfigError
from .nn import TrainConfig

CONFIG_SCHEMA_VERSION = 1


@dataclass
class NamedAttack:
    name: str
    spec: AttackSpec


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [256, 256, 256])
    dropout: float = 0.4


@dataclass
class SplitConfig:
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    stratified: bool = True


@dataclass
class DefenseSection:
    ratio: float = 1.0
    refresh: str = "batch"  # "batch": twins re-crafted per mini-batch; "once": crafted against the victim
    attack: NamedAttack | None = None  # None: defend each attack with itself
    retrain: TrainConfig | None = None  # None: reuse the train section


def default_attacks() -> list[NamedAttack]:
    return [NamedAttack("fgsm", FgsmConfig(0.1)), NamedAttack("jsma", JsmaConfig(1.0, 6))]


@dataclass
class ExperimentConfig:
    seed: int = 0
    generator: GeneratorConfig | None = field(default_factory=GeneratorConfig)
    csv_path: str | None = None
    label_threshold: float | None = 2.0
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: list[NamedAttack] = field(default_factory=default_attacks)
    defense: DefenseSection | None = field(default_factory=DefenseSection)
    output_dir: str = "runs/default"
    schema_version: int = CONFIG_SCHEMA_VERSION

    def to_dict(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "label_threshold": self.label_threshold,
            "split": {"ratios": list(self.split.ratios), "stratified": self.split.stratified},
            "model": asdict(self.model),
            "train": asdict(self.train),
            "attacks": [{"name": a.name, **spec_to_dict(a.spec)} for a in self.attacks],
            "output_dir": self.output_dir,
        }
        if self.csv_path is not None:
            doc["csv_path"] = self.csv_path
        else:
            doc["generator"] = asdict(self.generator)
        if self.defense is None:
            doc["defense"] = None
        else:
            d = self.defense
            doc["defense"] = {
                "ratio": d.ratio,
                "refresh": d.refresh,
                "attack": None if d.attack is None else {"name": d.attack.name, **spec_to_dict(d.attack.spec)},
                "retrain": None if d.retrain is None else asdict(d.retrain),
            }
        return doc


# --- parsing -----------------------------------------------------------------

def _section(doc, path: str, allowed: set[str]) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
    return doc


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _number(doc: dict, key: str, path: str, kind=float):
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or (kind is int and not isinstance(val, int)):
        raise ConfigError(f"{path}.{key}", f"expected {'an integer' if kind is int else 'a number'}")
    return kind(val)


def _train(doc, path: str, seed: int) -> TrainConfig:
    doc = _section(doc, path, {"learning_rate", "max_epochs", "batch_size", "early_stop_patience",
                               "early_stop_metric", "seed", "optimizer"})
    kw = dict(doc)
    for key in ("max_epochs", "batch_size", "early_stop_patience", "seed"):
        if key in kw:
            kw[key] = _number(doc, key, path, int)
    if "learning_rate" in kw:
        kw["learning_rate"] = _number(doc, "learning_rate", path)
    kw.setdefault("seed", seed)
    return _build(path, TrainConfig, **kw)


def _attack(doc, path: str, default_name: str) -> NamedAttack:
    doc = _section(doc, path, {"name", "kind", "epsilon", "clip", "theta", "max_features", "target_class"})
    if doc.get("kind") not in ("fgsm", "jsma"):
        raise ConfigError(f"{path}.kind", "must be 'fgsm' or 'jsma'")
    for key in ("epsilon", "theta"):
        if key in doc:
            _number(doc, key, path)
    for key in ("max_features",):
        if key in doc:
            _number(doc, key, path, int)
    spec = _build(path, spec_from_dict, doc=doc)
    name = doc.get("name", default_name)
    if not isinstance(name, str) or not name.replace("_", "").replace("-", "").isalnum():
        raise ConfigError(f"{path}.name", "must be a simple identifier")
    return NamedAttack(name, spec)


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = _section(doc, "config", {"schema_version", "seed", "generator", "csv_path", "label_threshold",
                                   "split", "model", "train", "attacks", "defense", "output_dir"})
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError("config.schema_version", f"unsupported version {version!r}")
    seed = _number(doc, "seed", "config", int) if "seed" in doc else 0
    if seed < 0:
        raise ConfigError("config.seed", "must be non-negative")

    if doc.get("generator") is not None and doc.get("csv_path") is not None:
        raise ConfigError("config", "give exactly one of 'generator' or 'csv_path'")
    generator = None
    csv_path = doc.get("csv_path")
    if csv_path is None:
        gdoc = _section(doc.get("generator") or {}, "config.generator",
                        {"n_enodebs", "n_days", "anomaly_rate", "tnl_anomaly_share", "seed",
                         "drop_rate_anomaly_threshold"})
        gdoc = dict(gdoc)
        for key in ("n_enodebs", "n_days", "seed"):
            if key in gdoc:
                _number(gdoc, key, "config.generator", int)
        for key in ("anomaly_rate", "tnl_anomaly_share", "drop_rate_anomaly_threshold"):
            if key in gdoc:
                _number(gdoc, key, "config.generator")
        gdoc.setdefault("seed", seed)
        generator = _build("config.generator", GeneratorConfig, **gdoc)
    elif not isinstance(csv_path, str):
        raise ConfigError("config.csv_path", "expected a string")

    threshold = doc.get("label_threshold", 2.0)
    if threshold is not None:
        threshold = _number({"label_threshold": threshold}, "label_threshold", "config")
        if threshold <= 0:
            raise ConfigError("config.label_threshold", "must be positive")

    sdoc = _section(doc.get("split", {}), "config.split", {"ratios", "stratified"})
    ratios = sdoc.get("ratios", [0.7, 0.15, 0.15])
    if (not isinstance(ratios, (list, tuple)) or len(ratios) != 3
            or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in ratios)
            or abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios)):
        raise ConfigError("config.split.ratios", "need three non-negative ratios summing to 1")
    stratified = sdoc.get("stratified", True)
    if not isinstance(stratified, bool):
        raise ConfigError("config.split.stratified", "expected true or false")
    split = SplitConfig(tuple(float(r) for r in ratios), stratified)

    mdoc = _section(doc.get("model", {}), "config.model", {"hidden", "dropout"})
    hidden = mdoc.get("hidden", [256, 256, 256])
    if not isinstance(hidden, list) or not hidden or not all(isinstance(h, int) and h > 0 for h in hidden):
        raise ConfigError("config.model.hidden", "need a non-empty list of positive integers")
    dropout = _number(mdoc, "dropout", "config.model") if "dropout" in mdoc else 0.4
    if not 0 <= dropout < 1:
        raise ConfigError("config.model.dropout", "must be in [0, 1)")
    model = ModelConfig(list(hidden), float(dropout))

    train = _train(doc.get("train", {}), "config.train", seed)

    attacks = default_attacks()
    if "attacks" in doc:
        if not isinstance(doc["attacks"], list):
            raise ConfigError("config.attacks", "expected a list")
        attacks = [_attack(a, f"config.attacks[{i}]", str(a.get("kind")) if isinstance(a, dict) else "")
                   for i, a in enumerate(doc["attacks"])]
        names = [a.name for a in attacks]
        if len(set(names)) != len(names):
            raise ConfigError("config.attacks", "attack names must be unique (set 'name')")

    defense = DefenseSection()
    if "defense" in doc:
        ddoc = doc["defense"]
        if ddoc is None:
            defense = None
        else:
            ddoc = _section(ddoc, "config.defense", {"ratio", "refresh", "attack", "retrain"})
            ratio = _number(ddoc, "ratio", "config.defense") if "ratio" in ddoc else 1.0
            if not 0 < ratio <= 1:
                raise ConfigError("config.defense.ratio", "must be in (0, 1]")
            refresh = ddoc.get("refresh", "batch")
            if refresh not in ("batch", "once"):
                raise ConfigError("config.defense.refresh", "must be 'batch' or 'once'")
            attack = None
            if ddoc.get("attack") is not None:
                attack = _attack(ddoc["attack"], "config.defense.attack", "shared")
            retrain = None
            if ddoc.get("retrain") is not None:
                retrain = _train(ddoc["retrain"], "config.defense.retrain", seed)
            defense = DefenseSection(ratio, refresh, attack, retrain)

    out = doc.get("output_dir", "runs/default")
    if not isinstance(out, str) or not out:
        raise ConfigError("config.output_dir", "expected a non-empty string")
    return ExperimentConfig(seed, generator, csv_path, threshold, split, model, train, attacks,
                            defense, out, version)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Copy of ``config`` with every seed re-derived from ``seed``."""
    doc = config.to_dict()
    doc["seed"] = seed
    doc.get("generator", {}).pop("seed", None)
    doc["train"].pop("seed", None)
    if doc.get("defense") and doc["defense"].get("retrain"):
        doc["defense"]["retrain"].pop("seed", None)
    return config_from_dict(doc)
