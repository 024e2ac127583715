"""Classifier architectures for 32x32 RGB inputs in [0, 1].

``smallcnn`` (about 100K parameters) is the desk-scale default; the
``resnet50`` option swaps in a torchvision ResNet-50 with the usual
32x32 stem adaptation (3x3 first conv, no initial max-pool) for
full-scale runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

SUPPORTED_ARCHITECTURES = ("smallcnn", "resnet50")
INPUT_SHAPE = (32, 32, 3)


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "smallcnn"
    num_classes: int = 25

    def __post_init__(self):
        if self.architecture not in SUPPORTED_ARCHITECTURES:
            raise ValueError(
                f"unsupported architecture {self.architecture!r}; "
                f"choices: {SUPPORTED_ARCHITECTURES}"
            )

    def to_dict(self) -> dict:
        return {"architecture": self.architecture, "num_classes": self.num_classes}

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(
            architecture=payload["architecture"],
            num_classes=int(payload["num_classes"]),
        )


class SmallCnn(nn.Module):
    """Three conv blocks (conv, group norm, relu, pool) and a linear head.

    Group norm keeps the forward pass identical in train and eval mode,
    which makes gradient checks and reproducibility straightforward.
    """

    def __init__(self, num_classes: int = 25):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 32, 3, padding=1),
            nn.GroupNorm(8, 32),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1),
            nn.GroupNorm(8, 64),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1),
            nn.GroupNorm(8, 128),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(128, num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.features(x)
        return self.head(z.flatten(1))


def _cifar_resnet50(num_classes: int) -> nn.Module:
    from torchvision.models import resnet50

    model = resnet50(num_classes=num_classes)
    model.conv1 = nn.Conv2d(3, 64, kernel_size=3, stride=1, padding=1, bias=False)
    model.maxpool = nn.Identity()
    return model


def build_model(config: ModelConfig) -> nn.Module:
    if config.architecture == "smallcnn":
        return SmallCnn(num_classes=config.num_classes)
    return _cifar_resnet50(num_classes=config.num_classes)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
