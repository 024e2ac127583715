import json

import numpy as np
import pytest

import oracles
from semalign.dataset import LabeledImage
from semalign.hybridgen import (
    CatalogError,
    DiffusionAdapterMixer,
    HybridCatalog,
    HybridRecord,
    MixError,
    ReferenceMixer,
    build_class_prototypes,
    generate_catalog,
    image_to_png_bytes,
    make_mix_request,
    mix,
    png_bytes_to_image,
    validate_catalog,
)


def _flat(value, label, split="train", suffix="x"):
    img = np.full((32, 32, 3), value, dtype=np.float32)
    return LabeledImage(image=img, label=label, split=split, id=f"{split}-{suffix}")


class TestMixRequest:
    def test_cross_superclass_rejected(self, taxonomy, train4):
        base = train4[0]
        base_name = taxonomy.by_index(base.label).name
        sem = taxonomy.semantic_super(base_name)
        outsider = next(
            c for c in taxonomy.classes if taxonomy.semantic_super(c.name) != sem
        )
        with pytest.raises(MixError):
            make_mix_request(base, outsider, 0.5, taxonomy)

    def test_self_target_rejected(self, taxonomy, train4):
        base = train4[0]
        with pytest.raises(MixError):
            make_mix_request(base, taxonomy.by_index(base.label), 0.5, taxonomy)

    def test_mix_factor_range(self, taxonomy, train4):
        base = train4[0]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[0]
        for bad in (-0.01, 1.01):
            with pytest.raises(MixError):
                make_mix_request(base, target, bad, taxonomy)


class TestPrototypes:
    def test_singleton_class(self):
        img = _flat(0.37, 0)
        protos = build_class_prototypes([img], num_classes=1)
        np.testing.assert_array_equal(protos[0], img.image)

    def test_two_constant_images(self):
        protos = build_class_prototypes(
            [_flat(0.0, 0, suffix="a"), _flat(1.0, 0, suffix="b")], num_classes=1
        )
        np.testing.assert_allclose(protos[0], 0.5)

    def test_matches_mean_oracle(self, train4):
        protos = build_class_prototypes(train4)
        for label in (0, 7, 24):
            members = [im.image for im in train4 if im.label == label]
            expected = oracles.mean_image(members)
            assert np.abs(protos[label] - expected).max() < 1e-6

    def test_empty_class_rejected(self):
        with pytest.raises(MixError):
            build_class_prototypes([_flat(0.5, 0)], num_classes=2)


class TestReferenceMixer:
    def test_nu_zero_is_base_bitexact(self, taxonomy, train4):
        mixer = ReferenceMixer(build_class_prototypes(train4))
        base = train4[3]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[0]
        record = mix(make_mix_request(base, target, 0.0, taxonomy), mixer)
        np.testing.assert_array_equal(record.image, base.image)

    def test_nu_one_is_prototype(self, taxonomy, train4):
        protos = build_class_prototypes(train4)
        mixer = ReferenceMixer(protos)
        base = train4[3]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[1]
        record = mix(make_mix_request(base, target, 1.0, taxonomy), mixer)
        assert np.abs(record.image - protos[target.index]).max() < 1e-6

    def test_half_mix_pointwise(self, taxonomy):
        # spec'd spot value: base 0.2, prototype 0.8, nu 0.5 -> 0.5
        base = _flat(0.2, taxonomy.by_name("rose").index)
        target = taxonomy.by_name("couch")
        protos = {target.index: np.full((32, 32, 3), 0.8, dtype=np.float32)}
        record = mix(make_mix_request(base, target, 0.5, taxonomy), ReferenceMixer(protos))
        np.testing.assert_allclose(record.image, 0.5, atol=1e-7)

    def test_half_mix_matches_blend_oracle(self, taxonomy, train4):
        protos = build_class_prototypes(train4)
        mixer = ReferenceMixer(protos)
        for base in train4[:10]:
            name = taxonomy.by_index(base.label).name
            for target in taxonomy.semantic_siblings(name)[:2]:
                record = mix(make_mix_request(base, target, 0.5, taxonomy), mixer)
                expected = oracles.convex_blend(base.image, protos[target.index], 0.5)
                assert np.abs(record.image - expected).max() < 1e-6

    def test_monotone_in_nu_where_proto_above_base(self, taxonomy, train4):
        protos = build_class_prototypes(train4)
        mixer = ReferenceMixer(protos)
        base = train4[0]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[0]
        images = [
            mix(make_mix_request(base, target, nu, taxonomy), mixer).image
            for nu in (0.0, 0.25, 0.5, 0.75, 1.0)
        ]
        rising = protos[target.index] >= base.image
        for lo, hi in zip(images, images[1:]):
            assert np.all(hi[rising] >= lo[rising] - 1e-7)

    def test_output_in_range(self, taxonomy, train4):
        mixer = ReferenceMixer(build_class_prototypes(train4))
        base = train4[5]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[2]
        record = mix(make_mix_request(base, target, 0.75, taxonomy), mixer)
        assert record.image.min() >= 0.0 and record.image.max() <= 1.0


class TestDiffusionAdapter:
    def test_round_trips_through_backend(self, taxonomy, train4):
        calls = {}

        def backend(image_bytes, prompt, mix_factor, seed):
            calls["prompt"] = prompt
            calls["mix_factor"] = mix_factor
            calls["seed"] = seed
            img = png_bytes_to_image(image_bytes)
            assert img.shape == (512, 512, 3)
            return image_to_png_bytes(1.0 - img)

        mixer = DiffusionAdapterMixer(backend, native_resolution=512)
        # sunflower sits in row D next to pickup_truck, exercising the
        # underscore-to-space prompt rule
        base = next(
            im for im in train4 if taxonomy.by_index(im.label).name == "sunflower"
        )
        target = taxonomy.by_name("pickup_truck")
        request = make_mix_request(base, target, 0.75, taxonomy, seed=41)
        record = mix(request, mixer)
        assert record.image.shape == (32, 32, 3)
        assert record.image.min() >= 0.0 and record.image.max() <= 1.0
        assert calls["prompt"] == "pickup truck"
        assert calls["mix_factor"] == 0.75
        assert calls["seed"] == 41

    def test_backend_failure_wrapped(self, taxonomy, train4):
        def backend(image_bytes, prompt, mix_factor, seed):
            raise RuntimeError("backend down")

        mixer = DiffusionAdapterMixer(backend)
        base = train4[0]
        target = taxonomy.semantic_siblings(taxonomy.by_index(base.label).name)[0]
        with pytest.raises(MixError):
            mix(make_mix_request(base, target, 0.5, taxonomy), mixer)


class TestCatalogGeneration:
    def test_complete_catalog_shape(self, catalog4, train4, taxonomy):
        assert len(catalog4) == 4 * len(train4)
        for im in train4:
            records = catalog4.records_for_base_image(im.id)
            assert len(records) == 4
            name = taxonomy.by_index(im.label).name
            expected_targets = {s.name for s in taxonomy.semantic_siblings(name)}
            got = {r.target_class.name for r in records}
            assert got == expected_targets

    def test_validation_clean(self, catalog4, train4, taxonomy):
        report = validate_catalog(catalog4, train4, taxonomy)
        assert report.complete, report.summary()
        assert report.n_matching == 4 * len(train4)
        assert not report.missing and not report.orphans and not report.violations

    def test_empty_train_set(self, taxonomy, tmp_path):
        mixer = ReferenceMixer({})
        catalog = generate_catalog([], taxonomy, 0.5, mixer, tmp_path / "empty")
        assert len(catalog) == 0
        manifest = json.loads((tmp_path / "empty" / "catalog.manifest").read_text())
        assert manifest["n_expected"] == 0
        assert manifest["complete"] is True

    def test_rerun_generates_nothing(self, train4, taxonomy, tmp_path):
        mixer = ReferenceMixer(build_class_prototypes(train4))
        out = tmp_path / "cat"
        first = generate_catalog(train4[:8], taxonomy, 0.5, mixer, out, seed=1)
        manifest_one = json.loads((out / "catalog.manifest").read_text())
        assert first.generation_stats["generated"] == len(first)
        second = generate_catalog(train4[:8], taxonomy, 0.5, mixer, out, seed=1)
        manifest_two = json.loads((out / "catalog.manifest").read_text())
        assert second.generation_stats["generated"] == 0
        assert second.generation_stats["skipped"] == len(first)
        manifest_one.pop("generated_at")
        manifest_two.pop("generated_at")
        assert manifest_one == manifest_two

    def test_round_trip_identical_records(self, catalog4, taxonomy, tmp_path):
        reloaded = HybridCatalog.load(catalog4.catalog_dir, taxonomy)
        assert len(reloaded) == len(catalog4)
        for record in catalog4.records[:25]:
            twin = reloaded.get(record.record_id)
            np.testing.assert_array_equal(twin.image, record.image)

    def test_records_for_base_index_pools(self, catalog4, train4):
        per_class = len([im for im in train4 if im.label == 0])
        pool = catalog4.records_for_base_index(0)
        assert len(pool) == 4 * per_class
        assert all(r.base_class.index == 0 for r in pool)


class TestCatalogValidationFindings:
    def test_missing_record_counted(self, train4, taxonomy, tmp_path):
        mixer = ReferenceMixer(build_class_prototypes(train4))
        subset = train4[:4]
        out = tmp_path / "cat"
        catalog = generate_catalog(subset, taxonomy, 0.5, mixer, out, seed=1)
        dropped = catalog.records[0]
        remaining = [r for r in catalog.records if r.record_id != dropped.record_id]
        partial = HybridCatalog(remaining, catalog.manifest)
        report = validate_catalog(partial, subset, taxonomy)
        assert not report.complete
        assert report.n_matching == 4 * len(subset) - 1
        assert dropped.record_id in report.missing

    def test_cross_super_target_flagged(self, catalog4, train4, taxonomy):
        base = train4[0]
        base_name = taxonomy.by_index(base.label).name
        sem = taxonomy.semantic_super(base_name)
        outsider = next(
            c for c in taxonomy.classes if taxonomy.semantic_super(c.name) != sem
        )
        rogue = HybridRecord(
            image=np.zeros((32, 32, 3), dtype=np.float32),
            base_class=taxonomy.by_index(base.label),
            target_class=outsider,
            mix_factor=0.5,
            base_image_id=base.id,
            mixer_id="reference",
            seed=0,
        )
        tampered = HybridCatalog(list(catalog4.records) + [rogue], catalog4.manifest)
        report = validate_catalog(tampered, train4, taxonomy)
        assert report.violations
        assert any("superclass" in v for v in report.violations)

    def test_orphan_flagged(self, catalog4, train4, taxonomy):
        orphan = HybridRecord(
            image=np.zeros((32, 32, 3), dtype=np.float32),
            base_class=taxonomy.by_index(train4[0].label),
            target_class=catalog4.records[0].target_class,
            mix_factor=0.5,
            base_image_id="train-99999",
            mixer_id="reference",
            seed=0,
        )
        tampered = HybridCatalog(list(catalog4.records) + [orphan], catalog4.manifest)
        report = validate_catalog(tampered, train4, taxonomy)
        assert orphan.record_id in report.orphans

    def test_checksum_mismatch_on_load(self, train4, taxonomy, tmp_path):
        mixer = ReferenceMixer(build_class_prototypes(train4))
        out = tmp_path / "cat"
        catalog = generate_catalog(train4[:4], taxonomy, 0.5, mixer, out, seed=1)
        victim = catalog.records[0]
        manifest = json.loads((out / "catalog.manifest").read_text())
        path = next(
            out / entry["path"]
            for entry in manifest["records"]
            if entry["record_id"] == victim.record_id
        )
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CatalogError):
            HybridCatalog.load(out, taxonomy)
