"""Training on the augmented stream with soft-target cross entropy.

The loop is deliberately plain: single process, manual batching, SGD
with momentum, and explicit seeded random streams for instance order,
augmentation draws and crop/flip transforms. With a fixed seed the
scalar log is bit-reproducible. The configured batch size counts clean
instances; hybrids appended by the augmentation sampler join the same
batch, so batch tensors grow when augmentation fires.

Random streams are derived from the config seed via
``np.random.SeedSequence(seed).spawn(3)`` in the order (instance order,
augmentation, crop/flip); torch parameter init uses ``seed`` directly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentationPolicy, clean_instance, maybe_augment
from .dataset import LabeledImage
from .hybridgen import HybridCatalog
from .models import ModelConfig, build_model

PROB_FLOOR = 1e-12


class TrainError(ValueError):
    """Configuration or runtime failure of a training run."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 100
    epochs: int = 100
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    random_crop: bool = True
    horizontal_flip: bool = True
    crop_padding: int = 4
    augment_probability: float = 0.0
    lr_milestones: tuple[int, ...] = ()
    lr_gamma: float = 0.1
    deterministic: bool = True
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise TrainError(f"epochs must be >= 1, got {self.epochs}")
        self.lr_milestones = tuple(int(m) for m in self.lr_milestones)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["lr_milestones"] = list(self.lr_milestones)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in payload.items() if k in known})


def soft_cross_entropy(predicted, target):
    """Cross entropy of predicted probabilities against a soft target.

    Accepts numpy arrays or torch tensors, single vectors or batches
    with class distributions along the last axis. Predicted entries are
    clamped to ``1e-12`` before the log, so the same operation serves
    training, input-gradient attacks and diagnostics.
    """
    if isinstance(predicted, torch.Tensor):
        if predicted.shape != target.shape:
            raise ValueError(
                f"shape mismatch: predicted {tuple(predicted.shape)} vs "
                f"target {tuple(target.shape)}"
            )
        logp = torch.log(predicted.clamp_min(PROB_FLOOR))
        return -(target * logp).sum(dim=-1)
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    if predicted.shape != target.shape:
        raise ValueError(
            f"shape mismatch: predicted {predicted.shape} vs target {target.shape}"
        )
    logp = np.log(np.maximum(predicted, PROB_FLOOR))
    return -(target * logp).sum(axis=-1)


def standard_augment(
    image: np.ndarray,
    rng: np.random.Generator,
    crop: bool = True,
    flip: bool = True,
    padding: int = 4,
) -> np.ndarray:
    """Zero-pad-and-random-crop back to the input size, then random flip.

    With padding 4 the crop offset is uniform over a 9x9 grid; the flip
    fires with probability 0.5. Draw order is fixed (crop offsets, then
    flip) so a seeded rng reproduces the transform stream.
    """
    out = image
    if crop:
        h, w, c = image.shape
        dy, dx = (int(v) for v in rng.integers(0, 2 * padding + 1, size=2))
        padded = np.zeros((h + 2 * padding, w + 2 * padding, c), dtype=image.dtype)
        padded[padding : padding + h, padding : padding + w] = image
        out = padded[dy : dy + h, dx : dx + w]
    if flip and rng.random() < 0.5:
        out = out[:, ::-1, :]
    return np.ascontiguousarray(out)


def _batch_tensors(instances):
    images = np.stack([inst.image for inst in instances]).astype(np.float32)
    labels = np.stack([inst.label.dist for inst in instances]).astype(np.float32)
    x = torch.from_numpy(images).permute(0, 3, 1, 2).contiguous()
    y = torch.from_numpy(labels)
    return x, y


def save_checkpoint(
    path: str | Path,
    model: torch.nn.Module,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: int,
    scalars: dict,
) -> None:
    payload = {
        "model_state_dict": model.state_dict(),
        "model_config": model_config.to_dict(),
        "train_config": train_config.to_dict(),
        "epoch": epoch,
        "scalars": scalars,
        "seed": train_config.seed,
    }
    torch.save(payload, path)


@dataclass
class Checkpoint:
    model: torch.nn.Module
    model_config: ModelConfig
    train_config: dict
    epoch: int
    scalars: dict
    seed: int


def load_checkpoint(path: str | Path) -> Checkpoint:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model_config = ModelConfig.from_dict(payload["model_config"])
    model = build_model(model_config)
    model.load_state_dict(payload["model_state_dict"])
    model.eval()
    return Checkpoint(
        model=model,
        model_config=model_config,
        train_config=payload["train_config"],
        epoch=int(payload["epoch"]),
        scalars=payload["scalars"],
        seed=int(payload["seed"]),
    )


def _log_scalars(log_path: Path, epoch: int, split: str, scalars: dict) -> None:
    with open(log_path, "a") as fh:
        for metric, value in scalars.items():
            fh.write(
                json.dumps(
                    {"epoch": epoch, "split": split, "metric": metric, "value": value}
                )
                + "\n"
            )


def evaluate(model: torch.nn.Module, images: list[LabeledImage], batch_size: int = 256) -> dict:
    """Deterministic eval pass: mean loss and fine accuracy."""
    model.eval()
    losses = []
    correct = 0
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = images[start : start + batch_size]
            x = torch.from_numpy(
                np.stack([im.image for im in chunk]).astype(np.float32)
            ).permute(0, 3, 1, 2)
            y = torch.tensor([im.label for im in chunk], dtype=torch.long)
            probs = torch.softmax(model(x), dim=-1)
            target = torch.zeros_like(probs)
            target[torch.arange(len(chunk)), y] = 1.0
            losses.append(soft_cross_entropy(probs, target))
            correct += int((probs.argmax(dim=-1) == y).sum())
    loss = float(torch.cat(losses).mean()) if losses else math.nan
    accuracy = correct / len(images) if images else math.nan
    return {"loss": loss, "accuracy": accuracy}


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_images: list[LabeledImage],
    out_dir: str | Path,
    catalog: HybridCatalog | None = None,
    eval_images: list[LabeledImage] | None = None,
) -> list[dict]:
    """Run the full training loop and checkpoint every epoch.

    Returns the history: one dict per epoch with the logged scalars and
    the checkpoint path. The final checkpoint is also copied to
    ``checkpoints/final.pt``.

    Raises :class:`TrainError` if the augmentation probability is
    positive but no catalog is given, or if the loss goes non-finite.
    """
    cfg = train_config
    if cfg.augment_probability > 0 and catalog is None:
        raise TrainError(
            "augment_probability > 0 requires a hybrid catalog; none was given"
        )
    if not train_images:
        raise TrainError("empty training set")

    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = out / "scalars.jsonl"
    log_path.unlink(missing_ok=True)

    if cfg.deterministic:
        torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    order_seq, augment_seq, transform_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_order = np.random.default_rng(order_seq)
    rng_augment = np.random.default_rng(augment_seq)
    rng_transform = np.random.default_rng(transform_seq)

    model = build_model(model_config)
    model.train()
    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=cfg.learning_rate,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    scheduler = None
    if cfg.lr_milestones:
        scheduler = torch.optim.lr_scheduler.MultiStepLR(
            optimizer, milestones=list(cfg.lr_milestones), gamma=cfg.lr_gamma
        )
    policy = AugmentationPolicy(probability=cfg.augment_probability)
    num_classes = model_config.num_classes

    history: list[dict] = []
    n = len(train_images)
    for epoch in range(cfg.epochs):
        model.train()
        order = rng_order.permutation(n)
        loss_sum = 0.0
        instance_count = 0
        clean_count = 0
        hybrid_count = 0
        for start in range(0, n, cfg.batch_size):
            batch_instances = []
            for idx in order[start : start + cfg.batch_size]:
                inst = clean_instance(train_images[int(idx)], num_classes)
                expanded = maybe_augment(inst, policy, catalog, rng_augment)
                batch_instances.extend(expanded)
                clean_count += 1
                hybrid_count += len(expanded) - 1
            if cfg.random_crop or cfg.horizontal_flip:
                batch_instances = [
                    dataclasses.replace(
                        inst,
                        image=standard_augment(
                            inst.image,
                            rng_transform,
                            crop=cfg.random_crop,
                            flip=cfg.horizontal_flip,
                            padding=cfg.crop_padding,
                        ),
                    )
                    for inst in batch_instances
                ]
            x, y = _batch_tensors(batch_instances)
            probs = torch.softmax(model(x), dim=-1)
            loss = soft_cross_entropy(probs, y).mean()
            if not torch.isfinite(loss):
                raise TrainError(
                    f"non-finite loss at epoch {epoch} batch {start // cfg.batch_size}: "
                    f"{loss.item()}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(batch_instances)
            instance_count += len(batch_instances)
        if scheduler is not None:
            scheduler.step()

        scalars = {
            "loss": loss_sum / instance_count,
            "augmented_fraction": hybrid_count / clean_count,
            "clean_instances": clean_count,
            "hybrid_instances": hybrid_count,
        }
        _log_scalars(log_path, epoch, "train", scalars)
        if eval_images:
            eval_scalars = evaluate(model, eval_images)
            _log_scalars(log_path, epoch, "eval", eval_scalars)
            scalars = {**scalars, **{f"eval_{k}": v for k, v in eval_scalars.items()}}

        ckpt_path = ckpt_dir / f"epoch_{epoch:04d}.pt"
        save_checkpoint(ckpt_path, model, model_config, cfg, epoch, scalars)
        history.append({"epoch": epoch, "scalars": scalars, "checkpoint": str(ckpt_path)})

    shutil.copyfile(history[-1]["checkpoint"], ckpt_dir / "final.pt")
    return history


def predict(checkpoint: Checkpoint | str | Path, images: list[LabeledImage], batch_size: int = 512):
    """Class probabilities and argmax predictions for a list of images.

    Returns ``(probs, preds)`` where probs is (N, num_classes) float32
    and preds is (N,) int64. Deterministic for fixed parameters.
    """
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    model = checkpoint.model
    model.eval()
    probs_out = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            chunk = images[start : start + batch_size]
            x = torch.from_numpy(
                np.stack([im.image for im in chunk]).astype(np.float32)
            ).permute(0, 3, 1, 2)
            probs_out.append(torch.softmax(model(x), dim=-1).numpy())
    probs = (
        np.concatenate(probs_out)
        if probs_out
        else np.zeros((0, checkpoint.model_config.num_classes), dtype=np.float32)
    )
    return probs, probs.argmax(axis=1)
