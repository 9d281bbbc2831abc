"""Adversarial training: retrain the victim on adversarial twins of its training rows.

Two schedules are offered. ``refresh="batch"`` re-crafts the twins against
the current weights for every mini-batch (the classic formulation, and the
default). ``refresh="once"`` crafts them a single time against the victim
and retrains on the fixed, enlarged set.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .attacks import AttackSpec, FgsmConfig, craft
from .metrics import accuracy


@dataclass
class DefenseConfig:
    attack_spec: AttackSpec = field(default_factory=FgsmConfig)
    augmentation_ratio: float = 1.0
    retrain: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    refresh: str = "batch"

    def __post_init__(self):
        if not 0.0 < self.augmentation_ratio <= 1.0:
            raise ValueError("augmentation_ratio must be in (0, 1]")
        if self.refresh not in ("batch", "once"):
            raise ValueError(f"refresh must be 'batch' or 'once', got {self.refresh!r}")


@dataclass
class DefenseReport:
    n_augmented: int
    pre_defense_adv_accuracy: float | None = None
    post_defense_adv_accuracy: float | None = None
    post_defense_clean_accuracy: float | None = None
    train_report: nn.TrainReport | None = None


def _with_twins(model, x, y, spec, chosen):
    adv = craft(model, x[chosen], y[chosen], spec)
    return np.vstack([x, adv]), np.concatenate([y, y[chosen]])


def augment(model: nn.MlpModel, x, y, config: DefenseConfig, seed: int):
    """Training set extended with adversarial twins of a seeded row subset.

    Twins are crafted against ``model`` and carry their source labels.
    Returns (features, labels, chosen source indices).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_aug = int(round(config.augmentation_ratio * len(y)))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(len(y), size=n_aug, replace=False))
    return (*_with_twins(model, x, y, config.attack_spec, chosen), chosen)


def adversarial_train(model: nn.MlpModel, train_set, valid_set, config: DefenseConfig, seed: int = 0,
                      test_set=None):
    """Warm-start retraining of ``model`` on clean plus adversarial rows.

    Validation rows get adversarial twins as well, so early stopping tracks
    robustness and not clean loss alone. When ``test_set`` is given the
    report also carries accuracies: the victim under attack, the defended
    model under a fresh white-box attack, and the defended model on clean
    data.
    """
    x, y = (np.asarray(a) for a in train_set)
    x_va, y_va = (np.asarray(a) for a in valid_set)
    spec, ratio = config.attack_spec, config.augmentation_ratio

    if config.refresh == "once":
        x_aug, y_aug, chosen = augment(model, x, y, config, seed)
        valid_aug = _with_twins(model, x_va, y_va, spec, np.arange(len(y_va)))
        defended, train_report = nn.train(model, (x_aug, y_aug), valid_aug, config.retrain)
        n_augmented = len(chosen)
    else:
        def batch_hook(current, xb, yb, rng):
            k = int(round(ratio * len(yb)))
            chosen = np.arange(len(yb)) if k == len(yb) else np.sort(rng.choice(len(yb), size=k, replace=False))
            return _with_twins(current, xb, yb, spec, chosen)

        def valid_hook(current, xv, yv):
            return _with_twins(current, xv, yv, spec, np.arange(len(yv)))

        defended, train_report = nn.train(model, (x, y), (x_va, y_va), config.retrain,
                                          batch_hook=batch_hook, valid_hook=valid_hook)
        bs = config.retrain.batch_size
        n_augmented = sum(int(round(ratio * min(bs, len(y) - s))) for s in range(0, len(y), bs))

    report = DefenseReport(n_augmented=n_augmented, train_report=train_report)
    if test_set is not None:
        x_te, y_te = test_set
        adv_pre = craft(model, x_te, y_te, spec)
        adv_post = craft(defended, x_te, y_te, spec)
        report.pre_defense_adv_accuracy = accuracy(nn.predict(model, adv_pre), y_te)
        report.post_defense_adv_accuracy = accuracy(nn.predict(defended, adv_post), y_te)
        report.post_defense_clean_accuracy = accuracy(nn.predict(defended, x_te), y_te)
    return defended, report
