"""L2-bounded projected gradient descent attacks and epsilon sweeps.

The attack maximizes the classifier's loss on the true label subject to
an L2 bound on the input perturbation: each step moves along the
normalized input gradient, projects back onto the epsilon ball, and
clips the perturbed image to the valid [0, 1] range. The iterate with
the highest loss is returned (not the last), which makes the guarantee
"achieved loss >= clean loss when started from zero" exact.

Sweeps evaluate a whole test set at an ascending list of budgets
starting at 0; each image's attack at the next epsilon is warm-started
from its best perturbation so far, so the best achieved loss is
non-decreasing in epsilon per image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .dataset import LabeledImage
from .train import Checkpoint, load_checkpoint, soft_cross_entropy

GRAD_NORM_FLOOR = 1e-12
NORM_SLACK = 1e-6


@dataclass(frozen=True)
class AttackConfig:
    """PGD hyperparameters. ``step_size`` defaults to 2.5 * epsilon / steps."""

    epsilon: float
    steps: int = 20
    step_size: float | None = None
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")

    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.epsilon / self.steps

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "steps": self.steps,
            "step_size": self.step_size,
            "random_start": self.random_start,
            "seed": self.seed,
        }


@dataclass
class AttackResult:
    delta: np.ndarray
    achieved_loss: float
    clean_loss: float
    pred_before: int
    pred_after: int


def project_l2_ball(v, epsilon: float):
    """Project a single array onto the closed L2 ball of radius epsilon.

    Returns ``v`` unchanged when it is already inside the ball, else
    scales it radially onto the boundary. Works on numpy arrays and
    torch tensors.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if isinstance(v, torch.Tensor):
        norm = float(torch.linalg.vector_norm(v))
        if norm <= epsilon:
            return v
        return v * (epsilon / norm)
    v = np.asarray(v)
    norm = float(np.linalg.norm(v.ravel()))
    if norm <= epsilon:
        return v
    return v * (epsilon / norm)


def _project_rows(delta: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Per-image projection for a (N, C, H, W) batch of perturbations."""
    flat = delta.flatten(1)
    norms = torch.linalg.vector_norm(flat, dim=1)
    scale = torch.where(
        norms > epsilon,
        epsilon / norms.clamp_min(GRAD_NORM_FLOOR),
        torch.ones_like(norms),
    )
    return delta * scale.view(-1, 1, 1, 1)


def _one_hot(labels: torch.Tensor, num_classes: int) -> torch.Tensor:
    target = torch.zeros(labels.shape[0], num_classes)
    target[torch.arange(labels.shape[0]), labels] = 1.0
    return target


def _loss_at(model, x, delta, target) -> torch.Tensor:
    probs = torch.softmax(model(x + delta), dim=-1)
    return soft_cross_entropy(probs, target)


def pgd_attack_batch(
    model: torch.nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    cfg: AttackConfig,
    delta0: torch.Tensor | None = None,
):
    """Vectorized PGD over a batch of independent images.

    Per-image gradients are independent, so attacking the batch with the
    gradient of the summed loss is exactly the per-image attack run in
    parallel. Returns ``(best_delta, best_loss, clean_loss)``; the start
    iterate (after projection and clipping) is evaluated first, so a
    warm start's loss is always a lower bound on the result. Images
    whose gradient vanishes simply stop moving.
    """
    model.eval()
    n, num_classes = x.shape[0], None
    with torch.no_grad():
        clean_probs = torch.softmax(model(x), dim=-1)
    num_classes = clean_probs.shape[1]
    target = _one_hot(y, num_classes)
    with torch.no_grad():
        clean_loss = soft_cross_entropy(clean_probs, target)

    if cfg.epsilon == 0.0:
        zero = torch.zeros_like(x)
        return zero, clean_loss.clone(), clean_loss

    if cfg.random_start:
        gen = torch.Generator().manual_seed(cfg.seed)
        noise = torch.empty_like(x).normal_(generator=gen)
        flat = noise.flatten(1)
        noise = noise / torch.linalg.vector_norm(flat, dim=1).clamp_min(
            GRAD_NORM_FLOOR
        ).view(-1, 1, 1, 1)
        radius = torch.rand(n, generator=gen).pow(1.0 / flat.shape[1]) * cfg.epsilon
        delta = noise * radius.view(-1, 1, 1, 1)
    elif delta0 is not None:
        delta = delta0.clone()
    else:
        delta = torch.zeros_like(x)

    delta = _project_rows(delta, cfg.epsilon)
    delta = (x + delta).clamp(0.0, 1.0) - x

    with torch.no_grad():
        best_loss = _loss_at(model, x, delta, target)
    best_delta = delta.clone()

    alpha = cfg.resolved_step_size()
    for _ in range(cfg.steps):
        delta = delta.detach().requires_grad_(True)
        loss = _loss_at(model, x, delta, target).sum()
        (grad,) = torch.autograd.grad(loss, delta)
        gnorms = torch.linalg.vector_norm(grad.flatten(1), dim=1)
        if float(gnorms.max()) < GRAD_NORM_FLOOR:
            break
        direction = grad / gnorms.clamp_min(GRAD_NORM_FLOOR).view(-1, 1, 1, 1)
        with torch.no_grad():
            delta = delta + alpha * direction
            delta = _project_rows(delta, cfg.epsilon)
            delta = (x + delta).clamp(0.0, 1.0) - x
            loss_now = _loss_at(model, x, delta, target)
            improved = loss_now > best_loss
            best_loss = torch.where(improved, loss_now, best_loss)
            best_delta[improved] = delta[improved]

    best_delta = _project_rows(best_delta.detach(), cfg.epsilon)
    return best_delta, best_loss.detach(), clean_loss


def pgd_l2_attack(
    model: torch.nn.Module,
    x: np.ndarray,
    y_true: int,
    cfg: AttackConfig,
) -> AttackResult:
    """Attack a single 32x32x3 image in [0, 1]; see module docstring."""
    xt = torch.from_numpy(np.asarray(x, dtype=np.float32)).permute(2, 0, 1).unsqueeze(0)
    yt = torch.tensor([int(y_true)], dtype=torch.long)
    best_delta, best_loss, clean_loss = pgd_attack_batch(model, xt, yt, cfg)
    with torch.no_grad():
        pred_before = int(torch.softmax(model(xt), dim=-1).argmax())
        pred_after = int(torch.softmax(model(xt + best_delta), dim=-1).argmax())
    return AttackResult(
        delta=best_delta[0].permute(1, 2, 0).numpy(),
        achieved_loss=float(best_loss[0]),
        clean_loss=float(clean_loss[0]),
        pred_before=pred_before,
        pred_after=pred_after,
    )


def format_epsilon(epsilon: float) -> str:
    return f"{epsilon:g}"


def records_filename(epsilon: float) -> str:
    return f"records_eps_{format_epsilon(epsilon)}.jsonl"


def attack_sweep(
    checkpoint: Checkpoint | str | Path,
    images: list[LabeledImage],
    epsilons: list[float],
    cfg_template: AttackConfig | None = None,
    out_dir: str | Path | None = None,
    batch_size: int = 256,
) -> dict[float, list[dict]]:
    """Attack every image at each budget and collect prediction records.

    ``epsilons`` must be sorted ascending and start at 0; the 0 row is
    the clean evaluation, bit-equal to ``predict``. Returns a mapping
    epsilon -> record dicts with keys image_id, true_class, pred_class,
    clean_pred_class, achieved_loss, epsilon. When ``out_dir`` is given,
    one JSONL file per epsilon plus an ``attacks.json`` manifest is
    written.
    """
    eps_list = [float(e) for e in epsilons]
    if not eps_list:
        raise ValueError("epsilon list is empty")
    if sorted(eps_list) != eps_list or len(set(eps_list)) != len(eps_list):
        raise ValueError(f"epsilons must be strictly ascending, got {eps_list}")
    if eps_list[0] != 0.0:
        raise ValueError(f"epsilon list must start at 0, got {eps_list}")
    if cfg_template is None:
        cfg_template = AttackConfig(epsilon=0.0)

    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    model = checkpoint.model
    model.eval()

    x_all = torch.from_numpy(
        np.stack([im.image for im in images]).astype(np.float32)
    ).permute(0, 3, 1, 2)
    y_all = torch.tensor([im.label for im in images], dtype=torch.long)
    n = len(images)

    with torch.no_grad():
        clean_probs = torch.softmax(model(x_all), dim=-1)
        clean_preds = clean_probs.argmax(dim=-1)
        clean_loss = soft_cross_entropy(clean_probs, _one_hot(y_all, clean_probs.shape[1]))

    warm_delta = torch.zeros_like(x_all)
    best_loss = clean_loss.clone()
    failures: list[dict] = []
    results: dict[float, list[dict]] = {}

    for eps in eps_list:
        if eps == 0.0:
            preds = clean_preds
            losses = clean_loss
        else:
            cfg = replace(cfg_template, epsilon=eps)
            for start in range(0, n, batch_size):
                sl = slice(start, min(start + batch_size, n))
                try:
                    delta, loss, _ = pgd_attack_batch(
                        model, x_all[sl], y_all[sl], cfg, delta0=warm_delta[sl]
                    )
                except Exception as exc:  # keep the sweep going, record the hole
                    failures.append(
                        {
                            "epsilon": eps,
                            "image_ids": [im.id for im in images[sl]],
                            "error": str(exc),
                        }
                    )
                    continue
                improved = loss >= best_loss[sl]
                chunk_delta = warm_delta[sl]
                chunk_delta[improved] = delta[improved]
                warm_delta[sl] = chunk_delta
                chunk_best = best_loss[sl]
                best_loss[sl] = torch.where(improved, loss, chunk_best)
            with torch.no_grad():
                preds = torch.softmax(model(x_all + warm_delta), dim=-1).argmax(dim=-1)
            losses = best_loss
        results[eps] = [
            {
                "image_id": images[i].id,
                "true_class": int(y_all[i]),
                "pred_class": int(preds[i]),
                "clean_pred_class": int(clean_preds[i]),
                "achieved_loss": float(losses[i]),
                "epsilon": eps,
            }
            for i in range(n)
        ]

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for eps, rows in results.items():
            name = records_filename(eps)
            with open(out / name, "w") as fh:
                for row in rows:
                    fh.write(json.dumps(row) + "\n")
            files[format_epsilon(eps)] = name
        manifest = {
            "epsilons": eps_list,
            "attack": cfg_template.to_dict(),
            "files": files,
            "n_images": n,
            "failures": failures,
        }
        (out / "attacks.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    return results
