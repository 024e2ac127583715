"""Experiment orchestration: variant configs, staged runs, comparisons.

A run walks prepare -> generate-hybrids (when the variant augments) ->
train -> attack-eval -> report, one output directory per run, one
subdirectory per seed. Completed stages leave a marker keyed on a hash
of the config sections they depend on, so rerunning a finished run
recomputes nothing and reproduces byte-identical reports. Timestamps
only ever go to run.log.

The five variants fix the augmentation probability and mix strength:

    standard            p = 0.00   no hybrids
    low-aug/low-mix     p = 0.25   nu = 0.50
    low-aug/high-mix    p = 0.25   nu = 0.75
    high-aug/low-mix    p = 0.50   nu = 0.50
    high-aug/high-mix   p = 0.50   nu = 0.75

``compare`` reads completed run summaries, checks that they share one
epsilon grid, and emits four line charts (one per metric, one series
per run) plus a combined table whose numbers are copied, not
recomputed, from the per-seed sweep reports.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import dataset as ds
from .adversary import AttackConfig, attack_sweep
from .augment import PROBABILITY_PRESETS
from .hybridgen import (
    DiffusionAdapterMixer,
    HttpDiffusionBackend,
    HybridCatalog,
    ReferenceMixer,
    build_class_prototypes,
    generate_catalog,
)
from .metrics import (
    SweepReport,
    compute_sweep_report,
    load_sweep_records,
    save_sweep_report,
)
from .models import ModelConfig
from .taxonomy import ClassTaxonomy, build_taxonomy, load_default_taxonomy
from .train import TrainConfig, load_checkpoint, train

VARIANTS: dict[str, tuple[float, float | None]] = {
    "standard": (0.0, None),
    "low-aug/low-mix": (0.25, 0.50),
    "low-aug/high-mix": (0.25, 0.75),
    "high-aug/low-mix": (0.50, 0.50),
    "high-aug/high-mix": (0.50, 0.75),
}

METRIC_NAMES = (
    "fine_accuracy",
    "semantic_super_accuracy",
    "semantic_mistake_share",
    "visual_mistake_share",
)

_SECTION_KEYS = {
    "data": {"source", "prepared", "limit_train_per_class", "limit_test_per_class"},
    "taxonomy": {"spec_file"},
    "hybrid": {
        "mixer",
        "seed",
        "catalog",
        "mix_factor",
        "backend_url",
        "backend_timeout",
        "native_resolution",
        "resample",
    },
    "augment": {"probability"},
    "train": {
        "architecture",
        "learning_rate",
        "batch_size",
        "epochs",
        "momentum",
        "weight_decay",
        "random_crop",
        "horizontal_flip",
        "crop_padding",
        "lr_milestones",
        "lr_gamma",
        "deterministic",
    },
    "attack": {"epsilons", "steps", "step_size", "random_start"},
    "report": set(),
}

DEFAULT_EPSILONS = (0.0, 0.25, 0.5, 1.0, 2.0)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


def variant_parameters(name: str) -> tuple[float, float | None]:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ConfigError(
            f"unknown variant {name!r}; expected one of {sorted(VARIANTS)}"
        ) from None


def _check_keys(section: str, payload: dict):
    allowed = _SECTION_KEYS[section]
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in section '{section}': {sorted(unknown)}"
            f" (allowed: {sorted(allowed) or 'none'})"
        )


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str
    seeds: tuple[int, ...]
    out: Path
    data: dict = field(default_factory=dict)
    taxonomy: dict = field(default_factory=dict)
    hybrid: dict = field(default_factory=dict)
    augment: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        p, nu = variant_parameters(self.variant)
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds: {list(self.seeds)}")
        for section in _SECTION_KEYS:
            _check_keys(section, getattr(self, section))
        if "source" not in self.data and "prepared" not in self.data:
            raise ConfigError("data section needs 'source' or 'prepared'")
        if "probability" in self.augment and self.augment["probability"] != p:
            raise ConfigError(
                f"augment.probability {self.augment['probability']} contradicts"
                f" variant {self.variant!r} (p={p})"
            )
        if "mix_factor" in self.hybrid:
            if nu is None:
                raise ConfigError(
                    f"variant {self.variant!r} uses no hybrids;"
                    " drop hybrid.mix_factor"
                )
            if self.hybrid["mix_factor"] != nu:
                raise ConfigError(
                    f"hybrid.mix_factor {self.hybrid['mix_factor']} contradicts"
                    f" variant {self.variant!r} (nu={nu})"
                )
        eps = self.epsilons
        if list(eps) != sorted(set(eps)) or eps[0] != 0.0:
            raise ConfigError(
                f"attack.epsilons must be strictly ascending from 0, got {list(eps)}"
            )
        mixer = self.hybrid.get("mixer", "reference")
        if mixer not in ("reference", "diffusion-adapter"):
            raise ConfigError(f"unknown mixer {mixer!r}")
        if mixer == "diffusion-adapter" and p > 0 and not self.hybrid.get("backend_url"):
            if not self.hybrid.get("catalog"):
                raise ConfigError("diffusion-adapter mixer needs hybrid.backend_url")

    @property
    def probability(self) -> float:
        return variant_parameters(self.variant)[0]

    @property
    def mix_factor(self) -> float | None:
        return variant_parameters(self.variant)[1]

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(float(e) for e in self.attack.get("epsilons", DEFAULT_EPSILONS))

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            payload = yaml.safe_load(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        return cls.from_dict(payload, base_dir=path.parent)

    @classmethod
    def from_dict(cls, payload: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        known = {"variant", "seeds", "out"} | set(_SECTION_KEYS)
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for key in ("variant", "out"):
            if key not in payload:
                raise ConfigError(f"config is missing required key '{key}'")
        seeds = payload.get("seeds", [0])
        if isinstance(seeds, int):
            seeds = [seeds]
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ConfigError(f"seeds must be a list of integers, got {seeds!r}")

        def _resolve(p):
            p = Path(p)
            if base_dir is not None and not p.is_absolute():
                return base_dir / p
            return p

        sections = {}
        for name in _SECTION_KEYS:
            section = payload.get(name) or {}
            if not isinstance(section, dict):
                raise ConfigError(f"section '{name}' must be a mapping")
            sections[name] = dict(section)
        for name, key in (("data", "source"), ("data", "prepared"),
                          ("taxonomy", "spec_file"), ("hybrid", "catalog")):
            if sections[name].get(key):
                sections[name][key] = str(_resolve(sections[name][key]))
        return cls(
            variant=payload["variant"],
            seeds=tuple(seeds),
            out=_resolve(payload["out"]),
            **sections,
        )

    def resolved(self) -> dict:
        """Config with variant-derived values and defaults materialized."""
        train = dict(self.train)
        train.setdefault("architecture", "smallcnn")
        attack = dict(self.attack)
        attack["epsilons"] = list(self.epsilons)
        attack.setdefault("steps", 20)
        attack.setdefault("step_size", None)
        attack.setdefault("random_start", False)
        hybrid = dict(self.hybrid)
        if self.probability > 0:
            hybrid.setdefault("mixer", "reference")
            hybrid.setdefault("seed", 0)
            hybrid["mix_factor"] = self.mix_factor
        return {
            "variant": self.variant,
            "seeds": list(self.seeds),
            "probability": self.probability,
            "mix_factor": self.mix_factor,
            "data": dict(self.data),
            "taxonomy": dict(self.taxonomy),
            "hybrid": hybrid,
            "augment": {"probability": self.probability},
            "train": train,
            "attack": attack,
            "report": dict(self.report),
        }

    def train_config(self, seed: int, config_hash_: str) -> TrainConfig:
        fields = {k: v for k, v in self.train.items() if k != "architecture"}
        if "lr_milestones" in fields:
            fields["lr_milestones"] = tuple(fields["lr_milestones"])
        return TrainConfig(
            seed=seed,
            augment_probability=self.probability,
            provenance={"variant": self.variant, "config_hash": config_hash_},
            **fields,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(architecture=self.train.get("architecture", "smallcnn"))

    def attack_config(self) -> AttackConfig:
        return AttackConfig(
            epsilon=0.0,
            steps=self.attack.get("steps", 20),
            step_size=self.attack.get("step_size"),
            random_start=self.attack.get("random_start", False),
        )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(canonical_json(resolved).encode()).hexdigest()


@dataclass
class RunArtifacts:
    out_dir: Path
    config_hash: str
    variant: str
    seeds: tuple[int, ...]
    summary_path: Path
    report_paths: dict[int, Path]


def _log(out_dir: Path, message: str):
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out_dir / "run.log", "a") as fh:
        fh.write(f"{stamp} {message}\n")


def _marker_path(out_dir: Path, stage: str) -> Path:
    safe = stage.replace("/", "_")
    return out_dir / ".stages" / f"{safe}.json"


def _stage_done(out_dir: Path, stage: str, input_hash: str) -> bool:
    marker = _marker_path(out_dir, stage)
    if not marker.exists():
        return False
    try:
        payload = json.loads(marker.read_text())
    except json.JSONDecodeError:
        return False
    return payload.get("input_hash") == input_hash


def _mark_stage(out_dir: Path, stage: str, input_hash: str):
    marker = _marker_path(out_dir, stage)
    marker.parent.mkdir(parents=True, exist_ok=True)
    marker.write_text(
        json.dumps({"stage": stage, "input_hash": input_hash}, sort_keys=True)
    )


def _section_hash(resolved: dict, sections: list[str]) -> str:
    return config_hash({k: resolved[k] for k in sections})


def _build_mixer(config: ExperimentConfig, train_images):
    mixer_name = config.hybrid.get("mixer", "reference")
    if mixer_name == "reference":
        return ReferenceMixer(build_class_prototypes(train_images))
    backend = HttpDiffusionBackend(
        url=config.hybrid["backend_url"],
        timeout=config.hybrid.get("backend_timeout", 300.0),
    )
    return DiffusionAdapterMixer(
        backend,
        native_resolution=config.hybrid.get("native_resolution", 512),
        resample=config.hybrid.get("resample", "bicubic"),
    )


def run_experiment(config: ExperimentConfig) -> RunArtifacts:
    """Execute every stage of one variant run; see module docstring."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = config.resolved()
    chash = config_hash(resolved)
    (out / "config.json").write_text(
        json.dumps({"config": resolved, "config_hash": chash}, indent=2, sort_keys=True)
    )
    _log(out, f"run start variant={config.variant} hash={chash[:12]}")
    _log(out, f"environment python={platform.python_version()} machine={platform.machine()}")

    if config.taxonomy.get("spec_file"):
        taxonomy = build_taxonomy(config.taxonomy["spec_file"])
    else:
        taxonomy = load_default_taxonomy()

    # prepare
    data_dir = Path(config.data["prepared"]) if config.data.get("prepared") else out / "data"
    if not config.data.get("prepared"):
        stage = "prepare"
        input_hash = _section_hash(resolved, ["data", "taxonomy"])
        if _stage_done(out, stage, input_hash):
            _log(out, "stage prepare: skipped (complete)")
        else:
            try:
                images, manifest = ds.ingest_subset(
                    config.data["source"],
                    taxonomy,
                    limit_train_per_class=config.data.get("limit_train_per_class"),
                    limit_test_per_class=config.data.get("limit_test_per_class"),
                )
                ds.save_dataset(images, manifest, data_dir)
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            _mark_stage(out, stage, input_hash)
            _log(out, f"stage prepare: done ({len(images)} images)")
    try:
        images, manifest = ds.load_dataset(data_dir)
    except Exception as exc:
        raise StageError("prepare", f"cannot load dataset at {data_dir}: {exc}") from exc
    train_images = ds.split_images(images, "train")
    test_images = ds.split_images(images, "test")

    # generate-hybrids
    catalog: HybridCatalog | None = None
    if config.probability > 0:
        stage = "hybrids"
        if config.hybrid.get("catalog"):
            catalog_dir = Path(config.hybrid["catalog"])
            if not (catalog_dir / "catalog.manifest").exists():
                raise StageError(
                    stage, f"referenced catalog not found at {catalog_dir}"
                )
            try:
                catalog = HybridCatalog.load(catalog_dir, taxonomy)
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            _log(out, f"stage hybrids: reused {catalog_dir} ({len(catalog)} records)")
        else:
            catalog_dir = out / "hybrids"
            input_hash = _section_hash(resolved, ["data", "taxonomy", "hybrid"])
            if _stage_done(out, stage, input_hash):
                try:
                    catalog = HybridCatalog.load(catalog_dir, taxonomy)
                except Exception as exc:
                    raise StageError(stage, str(exc)) from exc
                _log(out, "stage hybrids: skipped (complete)")
            else:
                try:
                    mixer = _build_mixer(config, train_images)
                    catalog = generate_catalog(
                        train_images,
                        taxonomy,
                        config.mix_factor,
                        mixer,
                        catalog_dir,
                        seed=config.hybrid.get("seed", 0),
                    )
                except Exception as exc:
                    raise StageError(stage, str(exc)) from exc
                if not catalog.complete:
                    raise StageError(
                        stage, f"catalog incomplete: {len(catalog)} records"
                    )
                _mark_stage(out, stage, input_hash)
                _log(out, f"stage hybrids: done ({len(catalog)} records)")

    # per-seed train / attack / report
    report_paths: dict[int, Path] = {}
    for seed in config.seeds:
        seed_dir = out / f"seed{seed}"
        train_dir = seed_dir / "train"
        attack_dir = seed_dir / "attack"
        base_hash_sections = ["data", "taxonomy", "hybrid", "augment", "train"]

        stage = f"train-seed{seed}"
        input_hash = config_hash(
            {k: resolved[k] for k in base_hash_sections} | {"seed": seed}
        )
        if _stage_done(out, stage, input_hash):
            _log(out, f"stage {stage}: skipped (complete)")
        else:
            try:
                train(
                    config.model_config(),
                    config.train_config(seed, chash),
                    train_images,
                    train_dir,
                    catalog=catalog,
                    eval_images=test_images,
                )
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            _mark_stage(out, stage, input_hash)
            _log(out, f"stage {stage}: done")

        stage = f"attack-seed{seed}"
        input_hash = config_hash(
            {k: resolved[k] for k in base_hash_sections + ["attack"]} | {"seed": seed}
        )
        if _stage_done(out, stage, input_hash):
            _log(out, f"stage {stage}: skipped (complete)")
        else:
            try:
                checkpoint = load_checkpoint(train_dir / "checkpoints" / "final.pt")
                attack_sweep(
                    checkpoint,
                    test_images,
                    list(config.epsilons),
                    cfg_template=config.attack_config(),
                    out_dir=attack_dir,
                )
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            _mark_stage(out, stage, input_hash)
            _log(out, f"stage {stage}: done")

        stage = f"report-seed{seed}"
        report_path = seed_dir / "report.json"
        input_hash = config_hash(
            {k: resolved[k] for k in base_hash_sections + ["attack", "report"]}
            | {"seed": seed}
        )
        if _stage_done(out, stage, input_hash):
            _log(out, f"stage {stage}: skipped (complete)")
        else:
            try:
                records = load_sweep_records(attack_dir)
                pred_records = {
                    eps: _to_prediction_records(rows) for eps, rows in records.items()
                }
                report = compute_sweep_report(pred_records, taxonomy)
                save_sweep_report(report, report_path)
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            _mark_stage(out, stage, input_hash)
            _log(out, f"stage {stage}: done")
        report_paths[seed] = report_path

    # summary
    stage = "summary"
    summary_path = out / "summary.json"
    input_hash = config_hash(resolved)
    if _stage_done(out, stage, input_hash):
        _log(out, "stage summary: skipped (complete)")
    else:
        try:
            summary = _build_summary(config, chash, report_paths)
            summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
        except Exception as exc:
            raise StageError(stage, str(exc)) from exc
        _mark_stage(out, stage, input_hash)
        _log(out, "stage summary: done")
    _log(out, "run complete")

    return RunArtifacts(
        out_dir=out,
        config_hash=chash,
        variant=config.variant,
        seeds=config.seeds,
        summary_path=summary_path,
        report_paths=report_paths,
    )


def _to_prediction_records(records):
    # load_sweep_records already returns PredictionRecord lists; keep the
    # hook for callers passing raw dict rows.
    from .metrics import PredictionRecord, records_from_rows

    if records and isinstance(records[0], PredictionRecord):
        return records
    return records_from_rows(records)


def _build_summary(
    config: ExperimentConfig, chash: str, report_paths: dict[int, Path]
) -> dict:
    epsilons = list(config.epsilons)
    per_seed: dict[str, dict] = {}
    for seed, path in report_paths.items():
        report = SweepReport.from_dict(json.loads(path.read_text()))
        if list(report.epsilons) != epsilons:
            raise ValueError(
                f"seed {seed} report grid {list(report.epsilons)} != {epsilons}"
            )
        per_seed[str(seed)] = {m: report.series(m) for m in METRIC_NAMES}
    means = {}
    for metric in METRIC_NAMES:
        series = []
        for i in range(len(epsilons)):
            values = [
                per_seed[str(s)][metric][i]
                for s in config.seeds
                if per_seed[str(s)][metric][i] is not None
            ]
            series.append(sum(values) / len(values) if values else None)
        means[metric] = series
    return {
        "variant": config.variant,
        "config_hash": chash,
        "seeds": list(config.seeds),
        "epsilons": epsilons,
        "per_seed": per_seed,
        "means": means,
    }


def load_summary(run_dir: str | Path) -> dict:
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        raise StageError("compare", f"no summary.json in {run_dir}; run incomplete")
    return json.loads(path.read_text())


def semantic_trend_flag(
    summaries: dict[str, dict],
    treated: str = "high-aug/high-mix",
    baseline: str = "standard",
) -> dict | None:
    """Per-seed check that the treated variant keeps more of its mistakes
    semantic at the largest budget. Informational only."""
    if treated not in summaries or baseline not in summaries:
        return None
    t, b = summaries[treated], summaries[baseline]
    eps_index = len(t["epsilons"]) - 1
    epsilon = t["epsilons"][eps_index]
    shared_seeds = [s for s in t["seeds"] if s in b["seeds"]]
    seeds_compared, seeds_holding = [], []
    for seed in shared_seeds:
        tv = t["per_seed"][str(seed)]["semantic_mistake_share"][eps_index]
        bv = b["per_seed"][str(seed)]["semantic_mistake_share"][eps_index]
        if tv is None or bv is None:
            continue
        seeds_compared.append(seed)
        if tv >= bv:
            seeds_holding.append(seed)
    return {
        "metric": "semantic_mistake_share",
        "epsilon": epsilon,
        "treated": treated,
        "baseline": baseline,
        "seeds_compared": seeds_compared,
        "seeds_holding": seeds_holding,
        "holds_in_majority": (
            len(seeds_holding) * 2 > len(seeds_compared) if seeds_compared else None
        ),
    }


def _series_label(summary: dict, run_dir: Path, taken: set[str]) -> str:
    label = summary["variant"]
    if len(summary["seeds"]) == 1:
        label = f"{label} (single seed)"
    if label in taken:
        label = f"{label} [{run_dir.name}]"
    taken.add(label)
    return label


def compare(run_dirs: list[str | Path], out_dir: str | Path) -> dict:
    """Cross-run comparison: charts, combined table, trend flag.

    All runs must share one epsilon grid; otherwise the error lists
    every run's grid. Table numbers are copied from the per-seed sweep
    reports without recomputation.
    """
    if not run_dirs:
        raise StageError("compare", "no run directories given")
    run_dirs = [Path(d) for d in run_dirs]
    summaries = [load_summary(d) for d in run_dirs]

    grids = {str(d): s["epsilons"] for d, s in zip(run_dirs, summaries)}
    if len({tuple(g) for g in grids.values()}) > 1:
        listing = "; ".join(f"{d}: {g}" for d, g in grids.items())
        raise StageError("compare", f"epsilon grids differ across runs: {listing}")
    epsilons = summaries[0]["epsilons"]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    taken: set[str] = set()
    labels = [_series_label(s, d, taken) for s, d in zip(summaries, run_dirs)]
    chart_paths = _emit_charts(out, epsilons, summaries, labels)

    rows = []
    for summary, run_dir in zip(summaries, run_dirs):
        for seed in summary["seeds"]:
            for i, eps in enumerate(epsilons):
                row = {
                    "run_dir": str(run_dir),
                    "variant": summary["variant"],
                    "seed": seed,
                    "epsilon": eps,
                }
                for metric in METRIC_NAMES:
                    row[metric] = summary["per_seed"][str(seed)][metric][i]
                rows.append(row)
    table_columns = ["run_dir", "variant", "seed", "epsilon", *METRIC_NAMES]
    with open(out / "table.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=table_columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: ("" if v is None else v) for k, v in row.items()}
            )
    (out / "table.json").write_text(json.dumps(rows, indent=2, sort_keys=True))

    by_variant = {}
    for summary in summaries:
        by_variant.setdefault(summary["variant"], summary)
    flag = semantic_trend_flag(by_variant)

    comparison = {
        "epsilons": epsilons,
        "runs": [
            {
                "dir": str(d),
                "variant": s["variant"],
                "seeds": s["seeds"],
                "config_hash": s["config_hash"],
                "label": label,
            }
            for d, s, label in zip(run_dirs, summaries, labels)
        ],
        "charts": [str(p) for p in chart_paths],
        "trend_flag": flag,
    }
    (out / "comparison.json").write_text(
        json.dumps(comparison, indent=2, sort_keys=True)
    )
    return comparison


def _emit_charts(
    out: Path, epsilons: list[float], summaries: list[dict], labels: list[str]
) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    titles = {
        "fine_accuracy": "Fine class accuracy",
        "semantic_super_accuracy": "Semantic superclass accuracy",
        "semantic_mistake_share": "Semantic share of mistakes",
        "visual_mistake_share": "Visual share of mistakes",
    }
    paths = []
    for metric in METRIC_NAMES:
        fig, ax = plt.subplots(figsize=(6, 4))
        for summary, label in zip(summaries, labels):
            series = [
                np.nan if v is None else v for v in summary["means"][metric]
            ]
            ax.plot(epsilons, series, marker="o", label=label)
        ax.set_xlabel("epsilon (L2 budget)")
        ax.set_ylabel(metric)
        ax.set_title(titles[metric])
        ax.set_ylim(-0.02, 1.02)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        path = out / f"{metric}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
