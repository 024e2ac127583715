"""Ingestion of the 25-class image subset from a CIFAR-100 style archive.

The source archive is the standard pickled CIFAR-100 layout: a directory
(or ``.tar.gz``) containing ``train``, ``test`` and ``meta`` files, where
each split holds ``data`` rows of 3072 uint8 values (RGB planes of a
32x32 image) plus ``fine_labels``, and ``meta`` maps label indices to
fine-class names.

Only the 25 classes named by the taxonomy are retained. They are
relabeled to contiguous indices 0..24 (alphabetical by name), pixel
values are normalized to [0, 1], and a manifest records per-class
counts, the index mapping and a content checksum so that ingestion is
verifiable and reproducible. The archive's own train/test split is kept
as-is.
"""

from __future__ import annotations

import hashlib
import json
import pickle
import tarfile
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .taxonomy import ClassTaxonomy, TaxonomyError

IMAGE_SIDE = 32
SPLITS = ("train", "test")


class IngestError(Exception):
    """Raised when the source archive is missing, corrupt, or incomplete."""


@dataclass
class LabeledImage:
    """One 32x32 RGB image with pixel values in [0, 1].

    ``label`` is the fine-class index under the taxonomy's alphabetical
    ordering; ``id`` is stable across runs for a given archive (split
    name plus row position in the source).
    """

    image: np.ndarray
    label: int
    split: str
    id: str


@dataclass
class DatasetManifest:
    """Provenance record for an ingested subset."""

    class_names: list[str]
    visual_super: dict[str, str]
    semantic_super: dict[str, str]
    counts: dict[str, dict[str, int]]
    source_fine_indices: dict[str, int]
    checksum: str
    source: str

    @property
    def index_of(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.class_names)}

    def per_class_count(self, split: str) -> int:
        values = set(self.counts[split].values())
        if len(values) != 1:
            raise IngestError(f"per-class counts for split {split!r} are not uniform")
        return values.pop()

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "visual_super": dict(self.visual_super),
            "semantic_super": dict(self.semantic_super),
            "counts": {s: dict(c) for s, c in self.counts.items()},
            "source_fine_indices": dict(self.source_fine_indices),
            "checksum": self.checksum,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DatasetManifest":
        return cls(
            class_names=list(payload["class_names"]),
            visual_super=dict(payload["visual_super"]),
            semantic_super=dict(payload["semantic_super"]),
            counts={s: dict(c) for s, c in payload["counts"].items()},
            source_fine_indices=dict(payload["source_fine_indices"]),
            checksum=payload["checksum"],
            source=payload["source"],
        )


def _load_pickle(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except (OSError, pickle.UnpicklingError, EOFError) as exc:
        raise IngestError(f"cannot read archive file {path}: {exc}") from exc


def _locate_archive(source: str | Path) -> Path:
    """Resolve ``source`` to the directory holding train/test/meta files."""
    src = Path(source)
    if src.is_file() and src.suffix in (".gz", ".tgz"):
        extract_dir = Path(tempfile.mkdtemp(prefix="semalign-archive-"))
        try:
            with tarfile.open(src, "r:gz") as tar:
                tar.extractall(extract_dir, filter="data")
        except (tarfile.TarError, OSError) as exc:
            raise IngestError(f"cannot extract archive {src}: {exc}") from exc
        src = extract_dir
    if not src.exists():
        raise IngestError(f"source archive not found: {source}")
    for candidate in (src, src / "cifar-100-python"):
        if all((candidate / name).is_file() for name in ("train", "test", "meta")):
            return candidate
    raise IngestError(
        f"no CIFAR-100 style archive (train/test/meta files) under {source}"
    )


def ingest_subset(
    source: str | Path,
    taxonomy: ClassTaxonomy,
    limit_train_per_class: int | None = None,
    limit_test_per_class: int | None = None,
) -> tuple[list[LabeledImage], DatasetManifest]:
    """Extract the taxonomy's 25 classes from a full archive.

    Images are kept in archive order within each class; the optional
    per-class limits take the first N occurrences, which keeps subset
    selection deterministic. Raises :class:`IngestError` if a taxonomy
    class is absent from the archive or per-class counts end up unequal.
    """
    archive = _locate_archive(source)
    meta = _load_pickle(archive / "meta")
    fine_names = [str(n) for n in meta["fine_label_names"]]
    name_to_source_idx = {n: i for i, n in enumerate(fine_names)}

    missing = [n for n in taxonomy.names if n not in name_to_source_idx]
    if missing:
        raise IngestError(f"archive is missing taxonomy classes: {missing}")
    source_fine_indices = {n: name_to_source_idx[n] for n in taxonomy.names}
    wanted = {name_to_source_idx[n]: taxonomy.by_name(n).index for n in taxonomy.names}

    limits = {"train": limit_train_per_class, "test": limit_test_per_class}
    images: list[LabeledImage] = []
    counts: dict[str, dict[str, int]] = {}
    digest = hashlib.sha256()

    for split in SPLITS:
        batch = _load_pickle(archive / split)
        data = np.asarray(batch["data"], dtype=np.uint8)
        labels = [int(x) for x in batch["fine_labels"]]
        if data.ndim != 2 or data.shape[1] != 3 * IMAGE_SIDE * IMAGE_SIDE:
            raise IngestError(f"split {split!r} has malformed data shape {data.shape}")
        if len(labels) != data.shape[0]:
            raise IngestError(f"split {split!r} label count does not match data rows")

        taken: dict[int, int] = {idx: 0 for idx in wanted.values()}
        limit = limits[split]
        for row, src_label in enumerate(labels):
            if src_label not in wanted:
                continue
            new_label = wanted[src_label]
            if limit is not None and taken[new_label] >= limit:
                continue
            taken[new_label] += 1
            raw = data[row]
            pixels = raw.reshape(3, IMAGE_SIDE, IMAGE_SIDE).transpose(1, 2, 0)
            image = pixels.astype(np.float32) / 255.0
            img_id = f"{split}-{row:05d}"
            images.append(LabeledImage(image=image, label=new_label, split=split, id=img_id))
            digest.update(img_id.encode())
            digest.update(bytes([new_label]))
            digest.update(pixels.tobytes())

        counts[split] = {taxonomy.by_index(i).name: n for i, n in sorted(taken.items())}
        per_class = set(taken.values())
        if len(per_class) != 1:
            raise IngestError(
                f"unequal per-class counts in split {split!r}: {counts[split]}"
            )
        if limit is not None and per_class.pop() < limit:
            raise IngestError(
                f"split {split!r} has fewer than {limit} images for some class"
            )

    manifest = DatasetManifest(
        class_names=list(taxonomy.names),
        visual_super={n: taxonomy.visual_super(n) for n in taxonomy.names},
        semantic_super={n: taxonomy.semantic_super(n) for n in taxonomy.names},
        counts=counts,
        source_fine_indices=source_fine_indices,
        checksum=digest.hexdigest(),
        source=str(source),
    )
    return images, manifest


def save_dataset(images: list[LabeledImage], manifest: DatasetManifest, out_dir: str | Path) -> None:
    """Persist an ingested subset as ``manifest.json`` plus ``arrays.npz``.

    Pixel data is stored as uint8 (the native archive precision) and
    mapped back to [0, 1] floats on load.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    for split in SPLITS:
        split_images = [im for im in images if im.split == split]
        arrays[f"{split}_images"] = np.stack(
            [np.round(im.image * 255.0).astype(np.uint8) for im in split_images]
        ) if split_images else np.zeros((0, IMAGE_SIDE, IMAGE_SIDE, 3), dtype=np.uint8)
        arrays[f"{split}_labels"] = np.array([im.label for im in split_images], dtype=np.int64)
        arrays[f"{split}_ids"] = np.array([im.id for im in split_images])
    np.savez_compressed(out / "arrays.npz", **arrays)
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))


def load_dataset(data_dir: str | Path) -> tuple[list[LabeledImage], DatasetManifest]:
    """Load a subset previously written by :func:`save_dataset`."""
    data_dir = Path(data_dir)
    manifest_path = data_dir / "manifest.json"
    arrays_path = data_dir / "arrays.npz"
    if not manifest_path.is_file() or not arrays_path.is_file():
        raise IngestError(f"no prepared dataset under {data_dir}")
    manifest = DatasetManifest.from_dict(json.loads(manifest_path.read_text()))
    arrays = np.load(arrays_path, allow_pickle=False)
    images: list[LabeledImage] = []
    for split in SPLITS:
        data = arrays[f"{split}_images"]
        labels = arrays[f"{split}_labels"]
        ids = arrays[f"{split}_ids"]
        for i in range(data.shape[0]):
            images.append(
                LabeledImage(
                    image=data[i].astype(np.float32) / 255.0,
                    label=int(labels[i]),
                    split=split,
                    id=str(ids[i]),
                )
            )
    return images, manifest


def split_images(images: list[LabeledImage], split: str) -> list[LabeledImage]:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    return [im for im in images if im.split == split]


def taxonomy_from_manifest(manifest: DatasetManifest) -> ClassTaxonomy:
    """Rebuild the taxonomy recorded in a manifest."""
    triples = [
        (n, manifest.visual_super[n], manifest.semantic_super[n])
        for n in manifest.class_names
    ]
    try:
        return ClassTaxonomy(triples)
    except TaxonomyError as exc:
        raise IngestError(f"manifest taxonomy is invalid: {exc}") from exc
