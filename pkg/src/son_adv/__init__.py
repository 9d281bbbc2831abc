"""Adversarial robustness evaluation of an MLP abnormal-KPI detector for self-organizing cellular networks."""

from .attacks import AttackResult, FgsmConfig, JsmaConfig, attack_test_set, fgsm_attack, jsma_attack, saliency_map
from .config import ExperimentConfig, load_config
from .dataset import FeatureSchema, GeneratorConfig, KpiRecord, compute_drop_rate, default_schema, generate
from .defense import DefenseConfig, adversarial_train
from .explain import affected_feature_report, feature_deltas
from .harness import run_experiment
from .metrics import accuracy
from .nn import MlpModel, TrainConfig, class_jacobian, forward, init_model, input_gradient, loss, predict, train

__version__ = "0.1.0"
