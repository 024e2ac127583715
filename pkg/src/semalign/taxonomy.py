"""Refactored class taxonomy.

The dataset uses 25 fine classes arranged in a 5x5 grid with two
orthogonal groupings:

* ``visual_super`` - the original superclasses, which group visually
  similar classes (columns of the grid).
* ``semantic_super`` - arbitrary regroupings that take exactly one class
  from each visual superclass (rows of the grid), so classes inside a
  semantic superclass look nothing alike.

The grid must be a bijection: every (visual, semantic) cell is occupied
by exactly one fine class. Fine-class indices are assigned
alphabetically by name so that downstream label vectors have a fixed,
reproducible order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

DEFAULT_TAXONOMY_RESOURCE = "refactored_taxonomy.json"
NUM_FINE_CLASSES = 25
GRID_SIDE = 5


class TaxonomyError(ValueError):
    """Raised when a taxonomy file violates the 5x5 grid invariants."""


@dataclass(frozen=True)
class FineClass:
    """A leaf class: stable name plus its alphabetical index in [0, 24]."""

    name: str
    index: int


class ClassTaxonomy:
    """Validated two-axis taxonomy over 25 fine classes.

    Construct via :func:`build_taxonomy` (from a file) or directly from a
    list of ``(name, visual_super, semantic_super)`` triples.
    """

    def __init__(self, triples: list[tuple[str, str, str]]):
        _validate_triples(triples)
        names = sorted(t[0] for t in triples)
        self.classes: tuple[FineClass, ...] = tuple(
            FineClass(name=n, index=i) for i, n in enumerate(names)
        )
        self._by_name = {c.name: c for c in self.classes}
        self._visual = {t[0]: t[1] for t in triples}
        self._semantic = {t[0]: t[2] for t in triples}
        self.visual_labels: tuple[str, ...] = tuple(sorted(set(self._visual.values())))
        self.semantic_labels: tuple[str, ...] = tuple(sorted(set(self._semantic.values())))
        self._semantic_members = {
            label: tuple(c for c in self.classes if self._semantic[c.name] == label)
            for label in self.semantic_labels
        }
        # Per-index lookup tables, used by the metrics hot path.
        self.semantic_by_index: tuple[str, ...] = tuple(
            self._semantic[c.name] for c in self.classes
        )
        self.visual_by_index: tuple[str, ...] = tuple(
            self._visual[c.name] for c in self.classes
        )

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def by_name(self, name: str) -> FineClass:
        try:
            return self._by_name[name]
        except KeyError:
            raise TaxonomyError(f"unknown fine class: {name!r}") from None

    def by_index(self, index: int) -> FineClass:
        if not 0 <= index < len(self.classes):
            raise TaxonomyError(f"fine-class index out of range: {index}")
        return self.classes[index]

    def visual_super(self, name: str) -> str:
        self.by_name(name)
        return self._visual[name]

    def semantic_super(self, name: str) -> str:
        self.by_name(name)
        return self._semantic[name]

    def semantic_members(self, label: str) -> tuple[FineClass, ...]:
        """All fine classes in one semantic superclass, index order."""
        try:
            return self._semantic_members[label]
        except KeyError:
            raise TaxonomyError(f"unknown semantic superclass: {label!r}") from None

    def semantic_siblings(self, name: str) -> tuple[FineClass, ...]:
        """The other members of ``name``'s semantic superclass (mix targets)."""
        cls = self.by_name(name)
        group = self.semantic_members(self._semantic[name])
        return tuple(c for c in group if c.index != cls.index)

    def triples(self) -> list[tuple[str, str, str]]:
        return [(c.name, self._visual[c.name], self._semantic[c.name]) for c in self.classes]

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"name": n, "visual_super": v, "semantic_super": s}
                for n, v, s in self.triples()
            ]
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ClassTaxonomy":
        records = payload.get("classes")
        if not isinstance(records, list):
            raise TaxonomyError("taxonomy payload must contain a 'classes' list")
        triples = []
        for rec in records:
            try:
                triples.append(
                    (str(rec["name"]), str(rec["visual_super"]), str(rec["semantic_super"]))
                )
            except (TypeError, KeyError) as exc:
                raise TaxonomyError(f"malformed taxonomy record: {rec!r}") from exc
        return cls(triples)


def _validate_triples(triples: list[tuple[str, str, str]]) -> None:
    if len(triples) != NUM_FINE_CLASSES:
        raise TaxonomyError(
            f"expected {NUM_FINE_CLASSES} fine classes, got {len(triples)}"
        )
    names = [t[0] for t in triples]
    seen = set()
    for n in names:
        if n in seen:
            raise TaxonomyError(f"duplicate fine class: {n!r}")
        seen.add(n)

    visuals = sorted(set(t[1] for t in triples))
    semantics = sorted(set(t[2] for t in triples))
    if len(visuals) != GRID_SIDE:
        raise TaxonomyError(
            f"expected {GRID_SIDE} visual superclasses, got {len(visuals)}: {visuals}"
        )
    if len(semantics) != GRID_SIDE:
        raise TaxonomyError(
            f"expected {GRID_SIDE} semantic superclasses, got {len(semantics)}: {semantics}"
        )

    # Bijection: every (visual, semantic) cell holds exactly one class.
    cells: dict[tuple[str, str], str] = {}
    for name, vis, sem in triples:
        key = (vis, sem)
        if key in cells:
            raise TaxonomyError(
                f"grid cell {key} occupied by both {cells[key]!r} and {name!r}"
            )
        cells[key] = name
    for vis in visuals:
        for sem in semantics:
            if (vis, sem) not in cells:
                raise TaxonomyError(f"grid cell ({vis!r}, {sem!r}) is empty")

    for vis in visuals:
        n = sum(1 for t in triples if t[1] == vis)
        if n != GRID_SIDE:
            raise TaxonomyError(f"visual superclass {vis!r} has {n} members, expected {GRID_SIDE}")
    for sem in semantics:
        n = sum(1 for t in triples if t[2] == sem)
        if n != GRID_SIDE:
            raise TaxonomyError(f"semantic superclass {sem!r} has {n} members, expected {GRID_SIDE}")


def build_taxonomy(spec_file: str | Path) -> ClassTaxonomy:
    """Load and validate a taxonomy file.

    The file is JSON with a top-level ``classes`` list; each record has
    ``name``, ``visual_super`` and ``semantic_super`` keys. Any violation
    of the 5x5 bijection raises :class:`TaxonomyError`.
    """
    path = Path(spec_file)
    if not path.is_file():
        raise TaxonomyError(f"taxonomy file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"taxonomy file is not valid JSON: {path}: {exc}") from exc
    return ClassTaxonomy.from_dict(payload)


def default_taxonomy_path() -> Path:
    """Path of the packaged default grid (the CIFAR-100 regrouping)."""
    return Path(str(resources.files("semalign.data") / DEFAULT_TAXONOMY_RESOURCE))


def load_default_taxonomy() -> ClassTaxonomy:
    return build_taxonomy(default_taxonomy_path())
