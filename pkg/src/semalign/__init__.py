"""Semantic-hybrid augmentation and mistake-severity evaluation for
small image classifiers."""

from .adversary import AttackConfig, AttackResult, attack_sweep, pgd_l2_attack, project_l2_ball
from .augment import AugmentationPolicy, SoftLabel, TrainingInstance, maybe_augment
from .dataset import LabeledImage, ingest_subset, load_dataset, save_dataset
from .harness import ExperimentConfig, RunArtifacts, compare, run_experiment
from .hybridgen import (
    HybridCatalog,
    HybridRecord,
    MixRequest,
    ReferenceMixer,
    generate_catalog,
    mix,
    validate_catalog,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    SweepReport,
    compute_report,
    compute_sweep_report,
    fine_accuracy,
    semantic_mistake_share,
    semantic_super_accuracy,
    visual_mistake_share,
)
from .models import ModelConfig, build_model
from .taxonomy import ClassTaxonomy, build_taxonomy, load_default_taxonomy
from .train import Checkpoint, TrainConfig, soft_cross_entropy, train

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "AugmentationPolicy",
    "Checkpoint",
    "ClassTaxonomy",
    "ExperimentConfig",
    "HybridCatalog",
    "HybridRecord",
    "LabeledImage",
    "MetricsReport",
    "MixRequest",
    "ModelConfig",
    "PredictionRecord",
    "ReferenceMixer",
    "RunArtifacts",
    "SoftLabel",
    "SweepReport",
    "TrainConfig",
    "TrainingInstance",
    "attack_sweep",
    "build_model",
    "build_taxonomy",
    "compare",
    "compute_report",
    "compute_sweep_report",
    "fine_accuracy",
    "generate_catalog",
    "ingest_subset",
    "load_dataset",
    "load_default_taxonomy",
    "maybe_augment",
    "mix",
    "pgd_l2_attack",
    "project_l2_ball",
    "run_experiment",
    "save_dataset",
    "semantic_mistake_share",
    "semantic_super_accuracy",
    "soft_cross_entropy",
    "train",
    "validate_catalog",
    "visual_mistake_share",
]
