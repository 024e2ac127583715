"""Probabilistic soft-label augmentation.

Each clean training instance encountered during an epoch gets an
independent chance ``p`` of pulling one hybrid image into the batch
alongside it. The hybrid is drawn uniformly from all catalog records
whose base class matches the instance's class (any base image, any
target), and is labeled half base class, half target class.

Presets follow the experiment grid: none = 0.0, low = 0.25, high = 0.50.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledImage
from .hybridgen import HybridCatalog, HybridRecord

PROBABILITY_PRESETS = {"none": 0.0, "low": 0.25, "high": 0.50}

LABEL_SUM_TOL = 1e-9


class AugmentationError(Exception):
    """Raised when a fired augmentation cannot be satisfied."""


@dataclass(frozen=True)
class AugmentationPolicy:
    probability: float
    name: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise AugmentationError(
                f"augmentation probability must be in [0, 1], got {self.probability}"
            )

    @classmethod
    def from_preset(cls, name: str) -> "AugmentationPolicy":
        try:
            return cls(probability=PROBABILITY_PRESETS[name], name=name)
        except KeyError:
            raise AugmentationError(
                f"unknown augmentation preset {name!r}; "
                f"choices: {sorted(PROBABILITY_PRESETS)}"
            ) from None


@dataclass(frozen=True)
class SoftLabel:
    """Probability distribution over the fine classes."""

    dist: np.ndarray

    @classmethod
    def one_hot(cls, index: int, num_classes: int = 25) -> "SoftLabel":
        dist = np.zeros(num_classes, dtype=np.float64)
        dist[index] = 1.0
        return cls(dist)

    @classmethod
    def two_point(cls, first: int, second: int, num_classes: int = 25) -> "SoftLabel":
        if first == second:
            raise AugmentationError("two-point label needs two distinct classes")
        dist = np.zeros(num_classes, dtype=np.float64)
        dist[first] = 0.5
        dist[second] = 0.5
        return cls(dist)

    def validate(self) -> None:
        if np.any(self.dist < 0):
            raise AugmentationError("soft label has negative entries")
        if abs(float(self.dist.sum()) - 1.0) > LABEL_SUM_TOL:
            raise AugmentationError(f"soft label sums to {self.dist.sum()}, not 1")

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.dist))


@dataclass(frozen=True)
class TrainingInstance:
    """An image plus soft target as seen by the training loop."""

    image: np.ndarray
    label: SoftLabel
    origin: str  # "clean" or "hybrid"
    provenance: str


def clean_instance(image: LabeledImage, num_classes: int = 25) -> TrainingInstance:
    return TrainingInstance(
        image=image.image,
        label=SoftLabel.one_hot(image.label, num_classes),
        origin="clean",
        provenance=image.id,
    )


def soft_label_for_hybrid(record: HybridRecord, num_classes: int = 25) -> SoftLabel:
    """50/50 label over the hybrid's base and target classes."""
    if record.base_class.index == record.target_class.index:
        raise AugmentationError(
            f"hybrid {record.record_id!r} has base class equal to target class"
        )
    return SoftLabel.two_point(
        record.base_class.index, record.target_class.index, num_classes
    )


def maybe_augment(
    instance: TrainingInstance,
    policy: AugmentationPolicy,
    catalog: HybridCatalog | None,
    rng: np.random.Generator,
) -> list[TrainingInstance]:
    """Independently decide whether to append one hybrid for this instance.

    Returns ``[instance]`` or ``[instance, hybrid]``. The clean instance
    always comes first and is never modified. With probability 0 the rng
    is not consumed, so a no-augmentation run needs no catalog at all.
    """
    out = [instance]
    if policy.probability <= 0.0:
        return out
    if rng.random() >= policy.probability:
        return out
    class_index = instance.label.argmax
    pool = catalog.records_for_base_index(class_index) if catalog is not None else []
    if not pool:
        raise AugmentationError(
            f"augmentation fired but the catalog has no record with base class "
            f"index {class_index}"
        )
    record = pool[int(rng.integers(len(pool)))]
    num_classes = instance.label.dist.shape[0]
    out.append(
        TrainingInstance(
            image=record.image,
            label=soft_label_for_hybrid(record, num_classes),
            origin="hybrid",
            provenance=record.record_id,
        )
    )
    return out
