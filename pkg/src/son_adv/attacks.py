"""White-box evasion attacks on scaled feature vectors in the [0, 1] box.

Both attacks see the full model (weights and gradients). FGSM takes one
signed-gradient step on every coordinate; JSMA greedily saturates the
few features with the highest single-feature saliency toward a target
class. The batched helpers process whole matrices at once and are what
the single-example entry points call with a one-row batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import nn
from .errors import LabelError, ShapeError


@dataclass(frozen=True)
class FgsmConfig:
    epsilon: float = 0.1
    clip: bool = True

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")

    @property
    def kind(self) -> str:
        return "fgsm"


@dataclass(frozen=True)
class JsmaConfig:
    theta: float = 1.0
    max_features: int = 6
    target_class: int | None = None

    def __post_init__(self):
        if self.theta == 0 or not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [-1, 1] and nonzero, got {self.theta}")
        if self.max_features < 0:
            raise ValueError("max_features must be >= 0")

    @property
    def kind(self) -> str:
        return "jsma"


AttackSpec = Union[FgsmConfig, JsmaConfig]


@dataclass
class AttackResult:
    adversarial_x: np.ndarray
    delta: np.ndarray
    modified_features: tuple[int, ...]
    success: bool
    queries: int

    @classmethod
    def build(cls, x: np.ndarray, adv: np.ndarray, success: bool, queries: int) -> "AttackResult":
        delta = adv - x
        return cls(adv, delta, tuple(int(i) for i in np.flatnonzero(delta != 0.0)), bool(success), int(queries))


def _check_box(x: np.ndarray) -> None:
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("inputs must lie in the [0, 1] feature box")


# --- FGSM --------------------------------------------------------------------

def fgsm_batch(model: nn.MlpModel, x, labels, config: FgsmConfig) -> tuple[np.ndarray, np.ndarray]:
    """Adversarial matrix and per-row success (prediction != true label)."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if config.clip:
        _check_box(x)
    eps = config.epsilon
    adv = x + eps * np.sign(nn.input_gradient(model, x, labels))
    if config.clip:
        adv = np.clip(adv, 0.0, 1.0)
    # x + eps can land one ulp past eps away from x; pull those back so the
    # L-inf bound holds exactly
    over = np.abs(adv - x) > eps
    while np.any(over):
        adv[over] = np.nextafter(adv[over], x[over])
        over = np.abs(adv - x) > eps
    success = nn.predict(model, adv) != labels
    return adv, success


def fgsm_attack(model: nn.MlpModel, x, true_label: int, config: FgsmConfig = FgsmConfig()) -> AttackResult:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("fgsm_attack takes a single example; use attack_test_set for matrices")
    adv, success = fgsm_batch(model, x[None, :], np.array([true_label]), config)
    return AttackResult.build(x, adv[0], success[0], queries=2)


# --- JSMA --------------------------------------------------------------------

def saliency_map(jacobian, target_class: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-feature saliency scores for increasing and decreasing each feature.

    ``jacobian`` is ``(classes, features)`` or a batch ``(n, classes, features)``.
    Increase score is ``J_t * |sum_other|`` when ``J_t >= 0`` and
    ``sum_other <= 0``, else 0; the decrease score mirrors the sign gates.
    """
    jac = np.asarray(jacobian, dtype=np.float64)
    if jac.ndim not in (2, 3):
        raise ShapeError(f"jacobian must be 2-D or 3-D, got shape {jac.shape}")
    k = jac.shape[-2]
    if not 0 <= target_class < k:
        raise LabelError(f"target class {target_class} out of range for {k} classes")
    t = jac[..., target_class, :]
    return _gated_scores(t, jac.sum(axis=-2) - t)


def _gated_scores(t: np.ndarray, other: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inc = np.where((t < 0) | (other > 0), 0.0, t * np.abs(other))
    dec = np.where((t > 0) | (other < 0), 0.0, np.abs(t) * other)
    return inc, dec


def jsma_batch(model: nn.MlpModel, x, targets, config: JsmaConfig):
    """Run JSMA on every row; returns (adversarial matrix, success, queries).

    Each iteration picks, per row, the eligible feature with the largest
    saliency (increase wins ties with decrease, lower index wins ties across
    features) and moves it by ``|theta|`` toward its bound. A feature that has
    moved one way may never move back, and one sitting at the bound in a
    direction is ineligible for it, so every row terminates. The run stops
    when the target is reached, no eligible feature has positive saliency,
    or the chosen feature is new and the budget is already spent; because of
    that last rule a larger budget only ever extends a smaller budget's path.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(f"expected (n, {model.input_dim}) inputs, got {x.shape}")
    _check_box(x)
    n, d = x.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise ShapeError("one target per row required")
    if np.any(targets < 0) or np.any(targets >= model.output_dim):
        raise LabelError("target class out of range")
    step = abs(config.theta)

    adv = x.copy()
    can_inc = adv < 1.0
    can_dec = adv > 0.0
    modified = np.zeros((n, d), dtype=bool)
    success = np.zeros(n, dtype=bool)
    queries = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    rows = np.arange(n)
    # each feature moves in one direction at most ceil(1/step) times
    for _ in range(d * math.ceil(1.0 / step) + 1):
        idx = rows[active]
        if idx.size == 0:
            break
        queries[idx] += 1
        z, jac = nn.logits_and_jacobian(model, adv[idx])
        reached = nn.predict_from_logits(z) == targets[idx]
        success[idx[reached]] = True
        active[idx[reached]] = False
        idx, jac = idx[~reached], jac[~reached]
        if idx.size == 0:
            break

        t = jac[np.arange(idx.size), targets[idx], :]
        inc, dec = _gated_scores(t, jac.sum(axis=1) - t)
        inc = np.where(can_inc[idx], inc, -np.inf)
        dec = np.where(can_dec[idx], dec, -np.inf)
        score = np.maximum(inc, dec)
        best = np.argmax(score, axis=1)
        sub = np.arange(idx.size)
        best_score = score[sub, best]
        upward = inc[sub, best] >= dec[sub, best]
        is_new = ~modified[idx, best]
        over_budget = is_new & (modified[idx].sum(axis=1) >= config.max_features)
        stop = ~(best_score > 0) | over_budget
        active[idx[stop]] = False

        go = ~stop
        r, f, up = idx[go], best[go], upward[go]
        adv[r, f] = np.where(up, np.minimum(adv[r, f] + step, 1.0), np.maximum(adv[r, f] - step, 0.0))
        modified[r, f] = True
        can_dec[r[up], f[up]] = False
        can_inc[r[~up], f[~up]] = False
        can_inc[r, f] &= adv[r, f] < 1.0
        can_dec[r, f] &= adv[r, f] > 0.0
    return adv, success, queries


def _default_targets(model: nn.MlpModel, labels: np.ndarray, config: JsmaConfig) -> np.ndarray:
    if config.target_class is not None:
        return np.full(len(labels), config.target_class, dtype=np.int64)
    if model.output_dim != 2:
        raise LabelError("JSMA needs an explicit target_class for non-binary models")
    return 1 - np.asarray(labels, dtype=np.int64)


def jsma_attack(model: nn.MlpModel, x, config: JsmaConfig, true_label: int | None = None) -> AttackResult:
    """Targeted JSMA on one example.

    The target is ``config.target_class``; for a binary model it may be left
    unset when ``true_label`` is given, in which case the other class is used.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("jsma_attack takes a single example; use attack_test_set for matrices")
    if config.target_class is None and true_label is None:
        raise LabelError("no target: set config.target_class or pass true_label")
    label = np.array([true_label if true_label is not None else 0])
    targets = _default_targets(model, label, config)
    adv, success, queries = jsma_batch(model, x[None, :], targets, config)
    return AttackResult.build(x, adv[0], success[0], queries[0])


def attack_test_set(model: nn.MlpModel, x, labels, spec: AttackSpec):
    """Attack every row of ``x``; returns (adversarial matrix, list of AttackResult).

    Row order is preserved. For JSMA without an explicit target each row is
    pushed toward the class opposite its true label.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[:1] == (0,) and labels.shape == (0,):
        return x.copy(), []
    adv, success, queries = _run(model, x, labels, spec)
    results = [AttackResult.build(x[i], adv[i], success[i], queries[i]) for i in range(len(labels))]
    return adv, results


def craft(model: nn.MlpModel, x, labels, spec: AttackSpec) -> np.ndarray:
    """Adversarial matrix only; what :func:`attack_test_set` computes, minus the per-row records."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[:1] == (0,) and labels.shape == (0,):
        return x.copy()
    return _run(model, x, labels, spec)[0]


def _run(model, x, labels, spec):
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise ShapeError(f"features {x.shape} and labels {labels.shape} disagree")
    if isinstance(spec, FgsmConfig):
        adv, success = fgsm_batch(model, x, labels, spec)
        return adv, success, np.full(len(labels), 2)
    if isinstance(spec, JsmaConfig):
        return jsma_batch(model, x, _default_targets(model, labels, spec), spec)
    raise TypeError(f"unknown attack spec {spec!r}")


def spec_to_dict(spec: AttackSpec) -> dict:
    if isinstance(spec, FgsmConfig):
        return {"kind": "fgsm", "epsilon": spec.epsilon, "clip": spec.clip}
    return {"kind": "jsma", "theta": spec.theta, "max_features": spec.max_features,
            "target_class": spec.target_class}


def spec_from_dict(doc: dict) -> AttackSpec:
    kind = doc.get("kind")
    if kind == "fgsm":
        return FgsmConfig(float(doc.get("epsilon", 0.1)), bool(doc.get("clip", True)))
    if kind == "jsma":
        target = doc.get("target_class")
        return JsmaConfig(float(doc.get("theta", 1.0)), int(doc.get("max_features", 6)),
                          None if target is None else int(target))
    raise ValueError(f"unknown attack kind {kind!r}")
