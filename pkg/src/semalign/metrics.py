"""Mistake-severity metrics over prediction records.

Beyond plain fine-grained accuracy these metrics split the mistakes by
where they land: a wrong prediction inside the true class's semantic
group (a "reasonable" confusion) versus one inside its visual group or
elsewhere. The two shares are conditional on making a mistake at all,
so they are undefined (None) when a record set has no mistakes.

The decomposition

    semantic_super_accuracy
        = fine_accuracy + (1 - fine_accuracy) * semantic_mistake_share

holds by counting: correct predictions stay in the semantic group, and
the remaining in-group mass is exactly the semantic mistakes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .taxonomy import ClassTaxonomy


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRecord:
    image_id: str
    true_class: int
    pred_class: int
    epsilon: float = 0.0


@dataclass(frozen=True)
class MetricsReport:
    epsilon: float
    n_total: int
    n_mistakes: int
    fine_accuracy: float
    semantic_super_accuracy: float
    semantic_mistake_share: float | None
    visual_mistake_share: float | None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n_total": self.n_total,
            "n_mistakes": self.n_mistakes,
            "fine_accuracy": self.fine_accuracy,
            "semantic_super_accuracy": self.semantic_super_accuracy,
            "semantic_mistake_share": self.semantic_mistake_share,
            "visual_mistake_share": self.visual_mistake_share,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(**{f: data[f] for f in cls.__dataclass_fields__})


def _require_records(records: list[PredictionRecord]):
    if not records:
        raise MetricsError("cannot compute metrics over an empty record set")


def fine_accuracy(records: list[PredictionRecord]) -> float:
    _require_records(records)
    correct = sum(1 for r in records if r.pred_class == r.true_class)
    return correct / len(records)


def semantic_super_accuracy(
    records: list[PredictionRecord], taxonomy: ClassTaxonomy
) -> float:
    """Fraction of predictions in the true class's semantic group."""
    _require_records(records)
    sem = taxonomy.semantic_by_index
    hits = sum(1 for r in records if sem[r.pred_class] == sem[r.true_class])
    return hits / len(records)


def semantic_mistake_share(
    records: list[PredictionRecord], taxonomy: ClassTaxonomy
) -> float | None:
    """Among mistakes, the fraction landing in the true semantic group.

    None when there are no mistakes at all.
    """
    _require_records(records)
    sem = taxonomy.semantic_by_index
    mistakes = [r for r in records if r.pred_class != r.true_class]
    if not mistakes:
        return None
    inside = sum(1 for r in mistakes if sem[r.pred_class] == sem[r.true_class])
    return inside / len(mistakes)


def visual_mistake_share(
    records: list[PredictionRecord], taxonomy: ClassTaxonomy
) -> float | None:
    """Among mistakes, the fraction landing in the true visual group."""
    _require_records(records)
    vis = taxonomy.visual_by_index
    mistakes = [r for r in records if r.pred_class != r.true_class]
    if not mistakes:
        return None
    inside = sum(1 for r in mistakes if vis[r.pred_class] == vis[r.true_class])
    return inside / len(mistakes)


def compute_report(
    records: list[PredictionRecord],
    taxonomy: ClassTaxonomy,
    epsilon: float | None = None,
) -> MetricsReport:
    """All four metrics over one record set.

    ``epsilon`` defaults to the records' own (they must agree on one).
    """
    _require_records(records)
    eps_seen = {r.epsilon for r in records}
    if epsilon is None:
        if len(eps_seen) != 1:
            raise MetricsError(
                f"records mix epsilons {sorted(eps_seen)}; pass epsilon explicitly"
            )
        epsilon = next(iter(eps_seen))
    mistakes = sum(1 for r in records if r.pred_class != r.true_class)
    return MetricsReport(
        epsilon=float(epsilon),
        n_total=len(records),
        n_mistakes=mistakes,
        fine_accuracy=fine_accuracy(records),
        semantic_super_accuracy=semantic_super_accuracy(records, taxonomy),
        semantic_mistake_share=semantic_mistake_share(records, taxonomy),
        visual_mistake_share=visual_mistake_share(records, taxonomy),
    )


@dataclass(frozen=True)
class SweepReport:
    """Metric reports for one model across an ascending epsilon grid."""

    reports: tuple[MetricsReport, ...]

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(r.epsilon for r in self.reports)

    def at(self, epsilon: float) -> MetricsReport:
        for r in self.reports:
            if r.epsilon == epsilon:
                return r
        raise KeyError(f"no report for epsilon {epsilon}")

    def series(self, metric: str) -> list[float | None]:
        return [getattr(r, metric) for r in self.reports]

    def to_dict(self) -> dict:
        return {"reports": [r.to_dict() for r in self.reports]}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepReport":
        return cls(reports=tuple(MetricsReport.from_dict(d) for d in data["reports"]))


def compute_sweep_report(
    records_by_epsilon: dict[float, list[PredictionRecord]],
    taxonomy: ClassTaxonomy,
) -> SweepReport:
    reports = [
        compute_report(records_by_epsilon[eps], taxonomy, epsilon=eps)
        for eps in sorted(records_by_epsilon)
    ]
    return SweepReport(reports=tuple(reports))


def save_sweep_report(report: SweepReport, path: str | Path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def load_sweep_report(path: str | Path) -> SweepReport:
    return SweepReport.from_dict(json.loads(Path(path).read_text()))


def records_from_rows(rows: list[dict]) -> list[PredictionRecord]:
    return [
        PredictionRecord(
            image_id=row["image_id"],
            true_class=int(row["true_class"]),
            pred_class=int(row["pred_class"]),
            epsilon=float(row.get("epsilon", 0.0)),
        )
        for row in rows
    ]


def load_records_jsonl(path: str | Path) -> list[PredictionRecord]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return records_from_rows(rows)


def load_sweep_records(attack_dir: str | Path) -> dict[float, list[PredictionRecord]]:
    """Read an attack output directory back into per-epsilon records."""
    attack_dir = Path(attack_dir)
    manifest = json.loads((attack_dir / "attacks.json").read_text())
    out = {}
    for eps_str, name in manifest["files"].items():
        out[float(eps_str)] = load_records_jsonl(attack_dir / name)
    return out
