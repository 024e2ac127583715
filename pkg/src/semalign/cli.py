"""Command-line entry points.

Subcommands mirror the pipeline stages: prepare-data, generate-hybrids,
train, attack-eval, plus the orchestrated `run` and `compare`. Exit
codes: 0 success, 2 config error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import dataset as ds
from .adversary import AttackConfig, attack_sweep
from .harness import (
    ConfigError,
    ExperimentConfig,
    StageError,
    compare,
    run_experiment,
)
from .hybridgen import (
    CatalogError,
    DiffusionAdapterMixer,
    HttpDiffusionBackend,
    HybridCatalog,
    ReferenceMixer,
    build_class_prototypes,
    generate_catalog,
    validate_catalog,
)
from .models import ModelConfig
from .taxonomy import TaxonomyError, build_taxonomy, load_default_taxonomy
from .train import TrainConfig, TrainError, load_checkpoint, train


def _load_taxonomy(path: str | None):
    if path:
        return build_taxonomy(path)
    return load_default_taxonomy()


def cmd_prepare_data(args) -> int:
    taxonomy = _load_taxonomy(args.taxonomy)
    images, manifest = ds.ingest_subset(
        args.source,
        taxonomy,
        limit_train_per_class=args.limit_train,
        limit_test_per_class=args.limit_test,
    )
    ds.save_dataset(images, manifest, args.out)
    counts = ", ".join(
        f"{split}={sum(per_class.values())}"
        for split, per_class in sorted(manifest.counts.items())
    )
    print(f"prepared {len(images)} images ({counts}) -> {args.out}")
    return 0


def cmd_generate_hybrids(args) -> int:
    images, manifest = ds.load_dataset(args.data)
    taxonomy = ds.taxonomy_from_manifest(manifest)
    train_images = ds.split_images(images, "train")
    if args.mixer == "reference":
        mixer = ReferenceMixer(build_class_prototypes(train_images))
    else:
        if not args.backend_url:
            raise ConfigError("--backend-url is required with --mixer diffusion-adapter")
        mixer = DiffusionAdapterMixer(
            HttpDiffusionBackend(args.backend_url, timeout=args.backend_timeout)
        )
    catalog = generate_catalog(
        train_images,
        taxonomy,
        args.mix_factor,
        mixer,
        args.out,
        seed=args.seed,
        resume=args.resume,
    )
    stats = catalog.generation_stats or {}
    validation = validate_catalog(catalog, train_images, taxonomy)
    print(
        f"catalog: {len(catalog)} records"
        f" (generated {stats.get('generated', '?')},"
        f" skipped {stats.get('skipped', '?')});"
        f" validation: {validation.summary()}"
    )
    return 0 if validation.complete else 3


def cmd_train(args) -> int:
    payload = yaml.safe_load(Path(args.config).read_text())
    if not isinstance(payload, dict):
        raise ConfigError(f"train config {args.config} must hold a mapping")
    data_dir = payload.pop("data", None)
    if not data_dir:
        raise ConfigError("train config needs a 'data' key (prepared dataset dir)")
    catalog_dir = payload.pop("catalog", None)
    architecture = payload.pop("architecture", "smallcnn")
    try:
        config = TrainConfig(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc

    images, manifest = ds.load_dataset(data_dir)
    taxonomy = ds.taxonomy_from_manifest(manifest)
    catalog = None
    if catalog_dir:
        catalog = HybridCatalog.load(catalog_dir, taxonomy)
    history = train(
        ModelConfig(architecture=architecture),
        config,
        ds.split_images(images, "train"),
        args.out,
        catalog=catalog,
        eval_images=ds.split_images(images, "test"),
    )
    final = history[-1]["scalars"]
    print(
        f"trained {architecture} for {config.epochs} epochs;"
        f" final train loss {final['loss']:.4f} -> {args.out}"
    )
    return 0


def _parse_epsilons(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --epsilons value {text!r}: {exc}") from exc
    if not values or values != sorted(set(values)) or values[0] != 0.0:
        raise ConfigError(
            f"--epsilons must be strictly ascending from 0, got {text!r}"
        )
    return values


def cmd_attack_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    images, _ = ds.load_dataset(args.data)
    subset = ds.split_images(images, args.split)
    cfg = AttackConfig(
        epsilon=0.0,
        steps=args.steps,
        step_size=args.step_size,
        random_start=args.random_start,
    )
    epsilons = _parse_epsilons(args.epsilons)
    attack_sweep(checkpoint, subset, epsilons, cfg_template=cfg, out_dir=args.out)
    print(f"attacked {len(subset)} {args.split} images at eps={epsilons} -> {args.out}")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_yaml(args.config)
    artifacts = run_experiment(config)
    print(
        f"run complete: variant={artifacts.variant}"
        f" seeds={list(artifacts.seeds)} -> {artifacts.out_dir}"
    )
    return 0


def cmd_compare(args) -> int:
    comparison = compare(args.runs, args.out)
    flag = comparison["trend_flag"]
    print(f"compared {len(comparison['runs'])} runs -> {args.out}")
    if flag is not None:
        print(
            "trend: semantic mistake share"
            f" holds in {len(flag['seeds_holding'])}/{len(flag['seeds_compared'])} seeds"
            f" (majority: {flag['holds_in_majority']})"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semalign",
        description="Semantic-hybrid training and mistake-severity evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="extract the 25-class subset")
    p.add_argument("--source", required=True, help="CIFAR-100 archive or directory")
    p.add_argument("--taxonomy", default=None, help="taxonomy grid JSON (default: built-in)")
    p.add_argument("--out", required=True)
    p.add_argument("--limit-train", type=int, default=None, metavar="N")
    p.add_argument("--limit-test", type=int, default=None, metavar="N")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("generate-hybrids", help="pre-generate the hybrid catalog")
    p.add_argument("--data", required=True, help="prepared dataset dir")
    p.add_argument("--mixer", choices=["reference", "diffusion-adapter"], default="reference")
    p.add_argument("--mix-factor", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="skip records already on disk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend-url", default=None)
    p.add_argument("--backend-timeout", type=float, default=300.0)
    p.set_defaults(func=cmd_generate_hybrids)

    p = sub.add_parser("train", help="train one classifier")
    p.add_argument("--config", required=True, help="YAML covering TrainConfig fields")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack-eval", help="PGD epsilon sweep over a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="prepared dataset dir")
    p.add_argument("--epsilons", default="0,0.25,0.5,1.0,2.0")
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--random-start", action="store_true")
    p.set_defaults(func=cmd_attack_eval)

    p = sub.add_parser("run", help="full staged experiment for one variant")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="cross-run charts and tables")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TaxonomyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError, TrainError, ds.IngestError, CatalogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
