"""Pre-generation of the hybrid-image catalog.

For every training image we synthesize one hybrid toward each of the
four other fine classes in its semantic superclass, so a complete
catalog over N training images holds exactly 4N records. Hybrids are
produced by a pluggable mixer:

* ``reference`` - a deterministic convex blend of the base image with
  the target class's prototype (per-pixel mean training image). Cheap,
  exactly testable, and dependency-free; the default for desk-scale
  runs.
* ``diffusion-adapter`` - delegates to an external text-conditioned
  diffusion backend that blends the base image toward the target class
  name used as the prompt. The backend transport is opaque to the
  catalog; this module only handles resolution adaptation, per-request
  seeds and failure bookkeeping.

Generation is resumable and idempotent, keyed on
``(base_image_id, target_class, mix_factor, mixer_id)``: records whose
image file exists with a matching checksum are skipped on rerun.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import IMAGE_SIDE, LabeledImage
from .taxonomy import ClassTaxonomy, FineClass

MANIFEST_NAME = "catalog.manifest"

# Named mix strength presets; any value in [0, 1] is accepted.
MIX_PRESETS = {"low": 0.50, "high": 0.75}


class MixError(Exception):
    """A single mix request failed (bad request or backend failure)."""


class CatalogError(Exception):
    """The catalog store is inconsistent with the requested generation."""


@dataclass(frozen=True)
class MixRequest:
    """One hybrid to synthesize: base image blended toward a target class.

    The target must be a different fine class in the same semantic
    superclass as the base image's class; use :func:`make_mix_request`
    to get that checked against a taxonomy.
    """

    base: LabeledImage
    base_class: FineClass
    target_class: FineClass
    mix_factor: float
    seed: int | None = None


@dataclass(frozen=True)
class HybridRecord:
    """A generated hybrid image plus its provenance."""

    image: np.ndarray
    base_class: FineClass
    target_class: FineClass
    mix_factor: float
    base_image_id: str
    mixer_id: str
    seed: int | None = None

    @property
    def record_id(self) -> str:
        return record_key(self.base_image_id, self.target_class.name, self.mix_factor)


def format_mix_factor(mix_factor: float) -> str:
    return f"{mix_factor:g}"


def record_key(base_image_id: str, target_name: str, mix_factor: float) -> str:
    return f"{base_image_id}__{target_name}__m{format_mix_factor(mix_factor)}"


def make_mix_request(
    base: LabeledImage,
    target_class: FineClass,
    mix_factor: float,
    taxonomy: ClassTaxonomy,
    seed: int | None = None,
) -> MixRequest:
    """Build a validated request: same semantic superclass, distinct class."""
    base_class = taxonomy.by_index(base.label)
    if target_class.index == base_class.index:
        raise MixError(f"target class equals base class: {base_class.name!r}")
    if taxonomy.semantic_super(target_class.name) != taxonomy.semantic_super(base_class.name):
        raise MixError(
            f"target {target_class.name!r} is outside the semantic superclass of "
            f"base {base_class.name!r}"
        )
    if not 0.0 <= mix_factor <= 1.0:
        raise MixError(f"mix_factor must be in [0, 1], got {mix_factor}")
    return MixRequest(
        base=base,
        base_class=base_class,
        target_class=target_class,
        mix_factor=mix_factor,
        seed=seed,
    )


def build_class_prototypes(
    train: list[LabeledImage], num_classes: int = 25
) -> dict[int, np.ndarray]:
    """Per-class mean image over the training set.

    The mean is accumulated in float64 and returned as float32 in [0, 1].
    Raises :class:`MixError` if any class has no training image.
    """
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for im in train:
        if im.label not in sums:
            sums[im.label] = np.zeros_like(im.image, dtype=np.float64)
            counts[im.label] = 0
        sums[im.label] += im.image
        counts[im.label] += 1
    empty = [c for c in range(num_classes) if c not in counts]
    if empty:
        raise MixError(f"no training images for class indices {empty}")
    return {
        c: np.clip(sums[c] / counts[c], 0.0, 1.0).astype(np.float32)
        for c in sorted(sums)
    }


class ReferenceMixer:
    """Deterministic stand-in mixer: convex blend with the target prototype.

    ``mix_factor`` 0 returns the base image unchanged; 1 returns the
    prototype; intermediate values interpolate per pixel.
    """

    mixer_id = "reference"

    def __init__(self, prototypes: dict[int, np.ndarray]):
        self.prototypes = prototypes

    def describe(self) -> dict:
        return {"mixer_id": self.mixer_id, "prototype_classes": sorted(self.prototypes)}

    def mix(self, request: MixRequest) -> np.ndarray:
        try:
            proto = self.prototypes[request.target_class.index]
        except KeyError:
            raise MixError(
                f"no prototype for target class {request.target_class.name!r}"
            ) from None
        nu = request.mix_factor
        return (1.0 - nu) * request.base.image + nu * proto


class DiffusionAdapterMixer:
    """Adapter for an external diffusion-based semantic mixing backend.

    The backend is any callable ``(image_bytes, prompt, mix_factor, seed)
    -> image_bytes`` operating on PNG payloads at its native resolution.
    The adapter upscales the 32x32 base image to ``native_resolution``
    before the call and downscales the result back, and turns backend
    errors into :class:`MixError` so catalog generation can record the
    failure and continue. Backend sampler settings live in
    ``backend_config`` and are recorded verbatim in the catalog manifest.
    """

    mixer_id = "diffusion-adapter"

    def __init__(
        self,
        backend,
        native_resolution: int = 512,
        backend_config: dict | None = None,
        resample: str = "bicubic",
    ):
        self.backend = backend
        self.native_resolution = int(native_resolution)
        self.backend_config = dict(backend_config or {})
        self.resample = resample
        self._filter = {
            "nearest": Image.NEAREST,
            "bilinear": Image.BILINEAR,
            "bicubic": Image.BICUBIC,
            "lanczos": Image.LANCZOS,
        }[resample]

    def describe(self) -> dict:
        return {
            "mixer_id": self.mixer_id,
            "native_resolution": self.native_resolution,
            "resample": self.resample,
            "backend_config": self.backend_config,
        }

    def mix(self, request: MixRequest) -> np.ndarray:
        prompt = request.target_class.name.replace("_", " ")
        base = image_to_png_bytes(request.base.image, size=self.native_resolution,
                                  resample=self._filter)
        try:
            out = self.backend(base, prompt, request.mix_factor, request.seed)
        except Exception as exc:
            raise MixError(f"diffusion backend failed for {prompt!r}: {exc}") from exc
        return png_bytes_to_image(out, size=IMAGE_SIDE, resample=self._filter)


class HttpDiffusionBackend:
    """Minimal HTTP transport for a diffusion mixing service.

    POSTs ``{"image": <base64 png>, "prompt": str, "mix_factor": float,
    "seed": int}`` and expects ``{"image": <base64 png>}`` back.
    """

    def __init__(self, url: str, timeout: float = 300.0, extra: dict | None = None):
        self.url = url
        self.timeout = timeout
        self.extra = dict(extra or {})

    def __call__(self, image_bytes: bytes, prompt: str, mix_factor: float, seed: int | None) -> bytes:
        import requests

        payload = {
            "image": base64.b64encode(image_bytes).decode("ascii"),
            "prompt": prompt,
            "mix_factor": mix_factor,
            "seed": seed,
        }
        payload.update(self.extra)
        resp = requests.post(self.url, json=payload, timeout=self.timeout)
        resp.raise_for_status()
        return base64.b64decode(resp.json()["image"])


def image_to_png_bytes(image: np.ndarray, size: int | None = None, resample=Image.BICUBIC) -> bytes:
    """Encode a [0, 1] float image as PNG, optionally resized."""
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    pil = Image.fromarray(pixels, mode="RGB")
    if size is not None and size != pil.width:
        pil = pil.resize((size, size), resample=resample)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_image(data: bytes, size: int | None = None, resample=Image.BICUBIC) -> np.ndarray:
    """Decode PNG bytes to a [0, 1] float32 array, optionally resized."""
    try:
        pil = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as exc:
        raise MixError(f"backend returned undecodable image data: {exc}") from exc
    if size is not None and pil.width != size:
        pil = pil.resize((size, size), resample=resample)
    return np.asarray(pil, dtype=np.float32) / 255.0


def mix(request: MixRequest, mixer) -> HybridRecord:
    """Run one mix request through a mixer and package the result.

    The output image is clipped to [0, 1] and cast to float32 whatever
    the mixer produced. Backend failures surface as :class:`MixError`.
    """
    if not 0.0 <= request.mix_factor <= 1.0:
        raise MixError(f"mix_factor must be in [0, 1], got {request.mix_factor}")
    image = np.asarray(mixer.mix(request))
    if image.shape != request.base.image.shape:
        raise MixError(
            f"mixer returned shape {image.shape}, expected {request.base.image.shape}"
        )
    image = np.clip(image, 0.0, 1.0).astype(np.float32, copy=False)
    return HybridRecord(
        image=image,
        base_class=request.base_class,
        target_class=request.target_class,
        mix_factor=request.mix_factor,
        base_image_id=request.base.id,
        mixer_id=mixer.mixer_id,
        seed=request.seed,
    )


class HybridCatalog:
    """In-memory view of a generated catalog plus its manifest."""

    def __init__(self, records: list[HybridRecord], manifest: dict,
                 catalog_dir: Path | None = None):
        self.manifest = manifest
        self.catalog_dir = catalog_dir
        self._records = list(records)
        self._by_id = {r.record_id: r for r in self._records}
        self._by_base_index: dict[int, list[HybridRecord]] = {}
        self._by_base_id: dict[str, list[HybridRecord]] = {}
        for r in self._records:
            self._by_base_index.setdefault(r.base_class.index, []).append(r)
            self._by_base_id.setdefault(r.base_image_id, []).append(r)
        self.generation_stats: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> list[HybridRecord]:
        return list(self._records)

    def get(self, record_id: str) -> HybridRecord:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise CatalogError(f"unknown record id {record_id!r}") from None

    def records_for_base_index(self, class_index: int) -> list[HybridRecord]:
        """All records whose base class has the given fine index."""
        return list(self._by_base_index.get(class_index, []))

    def records_for_base_image(self, base_image_id: str) -> list[HybridRecord]:
        return list(self._by_base_id.get(base_image_id, []))

    @property
    def mix_factor(self) -> float:
        return float(self.manifest["mix_factor"])

    @property
    def mixer_id(self) -> str:
        return str(self.manifest["mixer_id"])

    @property
    def complete(self) -> bool:
        return bool(self.manifest.get("complete", False))

    @classmethod
    def load(cls, catalog_dir: str | Path, taxonomy: ClassTaxonomy) -> "HybridCatalog":
        """Load a persisted catalog, verifying file checksums."""
        catalog_dir = Path(catalog_dir)
        manifest_path = catalog_dir / MANIFEST_NAME
        if not manifest_path.is_file():
            raise CatalogError(f"no catalog manifest under {catalog_dir}")
        manifest = json.loads(manifest_path.read_text())
        records = []
        for entry in manifest["records"]:
            path = catalog_dir / entry["path"]
            if not path.is_file():
                raise CatalogError(f"catalog record file missing: {path}")
            data = path.read_bytes()
            digest = hashlib.sha256(data).hexdigest()
            if digest != entry["checksum"]:
                raise CatalogError(f"checksum mismatch for {path}")
            records.append(
                HybridRecord(
                    image=png_bytes_to_image(data),
                    base_class=taxonomy.by_name(entry["base_class"]),
                    target_class=taxonomy.by_name(entry["target_class"]),
                    mix_factor=float(entry["mix_factor"]),
                    base_image_id=entry["base_image_id"],
                    mixer_id=manifest["mixer_id"],
                    seed=entry.get("seed"),
                )
            )
        return cls(records, manifest, catalog_dir=catalog_dir)


def _request_seed(catalog_seed: int, base_image_id: str, target_name: str, mix_factor: float) -> int:
    key = f"{catalog_seed}:{base_image_id}:{target_name}:{format_mix_factor(mix_factor)}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "big")


def plan_requests(
    train: list[LabeledImage],
    taxonomy: ClassTaxonomy,
    mix_factor: float,
    seed: int = 0,
) -> list[MixRequest]:
    """One request per (training image, semantic sibling class)."""
    requests = []
    for im in train:
        base_class = taxonomy.by_index(im.label)
        for target in taxonomy.semantic_siblings(base_class.name):
            requests.append(
                make_mix_request(
                    im,
                    target,
                    mix_factor,
                    taxonomy,
                    seed=_request_seed(seed, im.id, target.name, mix_factor),
                )
            )
    return requests


def generate_catalog(
    train: list[LabeledImage],
    taxonomy: ClassTaxonomy,
    mix_factor: float,
    mixer,
    out_dir: str | Path,
    seed: int = 0,
    resume: bool = True,
) -> HybridCatalog:
    """Generate (or resume) the full hybrid catalog for a training set.

    Writes one PNG per record under ``<out>/<base_class>/`` plus a
    ``catalog.manifest`` JSON file. Individual mixer failures are
    recorded in the manifest's failure list and mark the catalog
    incomplete instead of aborting the run. Returns the catalog as
    loaded back from disk, so in-memory records match the persisted
    (8-bit quantized) images exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST_NAME

    existing: dict[str, dict] = {}
    if manifest_path.is_file():
        previous = json.loads(manifest_path.read_text())
        if not resume:
            raise CatalogError(
                f"catalog already exists at {out} (pass resume=True to continue)"
            )
        if previous["mixer_id"] != mixer.mixer_id or float(previous["mix_factor"]) != float(mix_factor):
            raise CatalogError(
                "existing catalog was generated with "
                f"mixer={previous['mixer_id']!r} mix_factor={previous['mix_factor']}, "
                f"requested mixer={mixer.mixer_id!r} mix_factor={mix_factor}"
            )
        existing = {e["record_id"]: e for e in previous["records"]}

    requests = plan_requests(train, taxonomy, mix_factor, seed=seed)
    entries: list[dict] = []
    failures: list[dict] = []
    generated = 0
    skipped = 0

    for request in requests:
        key = record_key(request.base.id, request.target_class.name, request.mix_factor)
        rel_path = Path(request.base_class.name) / f"{key}.png"
        abs_path = out / rel_path
        prior = existing.get(key)
        if prior is not None and abs_path.is_file():
            if hashlib.sha256(abs_path.read_bytes()).hexdigest() == prior["checksum"]:
                entries.append(prior)
                skipped += 1
                continue
        try:
            record = mix(request, mixer)
        except MixError as exc:
            failures.append(
                {
                    "record_id": key,
                    "base_image_id": request.base.id,
                    "target_class": request.target_class.name,
                    "error": str(exc),
                }
            )
            continue
        abs_path.parent.mkdir(parents=True, exist_ok=True)
        png = image_to_png_bytes(record.image)
        abs_path.write_bytes(png)
        entries.append(
            {
                "record_id": key,
                "base_image_id": request.base.id,
                "base_class": request.base_class.name,
                "target_class": request.target_class.name,
                "mix_factor": request.mix_factor,
                "seed": request.seed,
                "path": str(rel_path),
                "checksum": hashlib.sha256(png).hexdigest(),
            }
        )
        generated += 1

    manifest = {
        "mixer_id": mixer.mixer_id,
        "mixer_config": mixer.describe() if hasattr(mixer, "describe") else {},
        "mix_factor": float(mix_factor),
        "seed": int(seed),
        "n_expected": len(requests),
        "records": entries,
        "failures": failures,
        "complete": len(entries) == len(requests) and not failures,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    tmp = manifest_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    os.replace(tmp, manifest_path)

    catalog = HybridCatalog.load(out, taxonomy)
    catalog.generation_stats = {"generated": generated, "skipped": skipped}
    return catalog


@dataclass
class CatalogValidation:
    """Findings from checking a catalog against its training set."""

    n_expected: int
    n_records: int
    n_matching: int
    missing: list[str]
    orphans: list[str]
    violations: list[str]

    @property
    def complete(self) -> bool:
        return not self.missing and not self.orphans and not self.violations

    def summary(self) -> str:
        return (
            f"{self.n_matching}/{self.n_expected} expected records present, "
            f"{len(self.orphans)} orphans, {len(self.violations)} violations"
        )


def validate_catalog(
    catalog: HybridCatalog,
    train: list[LabeledImage],
    taxonomy: ClassTaxonomy,
) -> CatalogValidation:
    """Check completeness and constraints; findings go in the report.

    A complete catalog has exactly one record per (training image,
    semantic sibling) pair: 4 per base image with 5-class superclasses.
    """
    label_by_id = {im.id: im.label for im in train}
    expected: set[str] = set()
    for im in train:
        base_name = taxonomy.by_index(im.label).name
        for target in taxonomy.semantic_siblings(base_name):
            expected.add(record_key(im.id, target.name, catalog.mix_factor))

    violations: list[str] = []
    orphans: list[str] = []
    found: set[str] = set()
    for record in catalog.records:
        rid = record.record_id
        base_label = label_by_id.get(record.base_image_id)
        if base_label is None:
            orphans.append(rid)
            continue
        if record.base_class.index != base_label:
            violations.append(
                f"{rid}: base_class {record.base_class.name!r} does not match "
                f"training label {taxonomy.by_index(base_label).name!r}"
            )
        if record.target_class.index == record.base_class.index:
            violations.append(f"{rid}: target equals base class")
        elif taxonomy.semantic_super(record.target_class.name) != taxonomy.semantic_super(
            record.base_class.name
        ):
            violations.append(f"{rid}: target outside the base semantic superclass")
        if record.mix_factor != catalog.mix_factor:
            violations.append(
                f"{rid}: mix_factor {record.mix_factor} differs from catalog "
                f"{catalog.mix_factor}"
            )
        if float(record.image.min()) < 0.0 or float(record.image.max()) > 1.0:
            violations.append(f"{rid}: pixel values outside [0, 1]")
        if rid in found:
            violations.append(f"{rid}: duplicate record")
        found.add(rid)

    missing = sorted(expected - found)
    return CatalogValidation(
        n_expected=len(expected),
        n_records=len(catalog),
        n_matching=len(expected & found),
        missing=missing,
        orphans=orphans,
        violations=violations,
    )
