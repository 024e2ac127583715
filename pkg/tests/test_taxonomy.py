import json

import pytest

from semalign.taxonomy import (
    ClassTaxonomy,
    TaxonomyError,
    build_taxonomy,
    default_taxonomy_path,
    load_default_taxonomy,
)

VISUAL = {"Flowers", "Furniture", "Insects", "Carnivores", "Vehicles"}
SEMANTIC = {"A", "B", "C", "D", "E"}


def test_default_grid_loads(taxonomy):
    assert len(taxonomy.classes) == 25
    assert {c.index for c in taxonomy.classes} == set(range(25))


def test_table_lookups(taxonomy):
    assert taxonomy.semantic_super("rose") == "C"
    assert taxonomy.visual_super("rose") == "Flowers"
    assert taxonomy.semantic_super("tulip") == "E"
    assert taxonomy.semantic_super("wardrobe") == "E"
    assert taxonomy.visual_super("pickup_truck") == "Vehicles"
    assert taxonomy.semantic_super("pickup_truck") == "D"


def test_bijection_exhaustive(taxonomy):
    cells = {}
    for c in taxonomy.classes:
        key = (taxonomy.visual_super(c.name), taxonomy.semantic_super(c.name))
        assert key not in cells, f"duplicate cell {key}"
        cells[key] = c.name
    assert set(cells) == {(v, s) for v in VISUAL for s in SEMANTIC}


def test_semantic_members_structure(taxonomy):
    for label in SEMANTIC:
        members = taxonomy.semantic_members(label)
        assert len(members) == 5
        assert {taxonomy.visual_super(m.name) for m in members} == VISUAL


def test_indices_alphabetical(taxonomy):
    names = [c.name for c in sorted(taxonomy.classes, key=lambda c: c.index)]
    assert names == sorted(names)
    assert taxonomy.by_index(0).name == min(names)


def test_siblings_exclude_self(taxonomy):
    sibs = taxonomy.semantic_siblings("rose")
    assert len(sibs) == 4
    assert all(s.name != "rose" for s in sibs)
    assert all(taxonomy.semantic_super(s.name) == "C" for s in sibs)


def test_moved_class_breaks_bijection(tmp_path):
    payload = json.loads(default_taxonomy_path().read_text())
    for record in payload["classes"]:
        if record["name"] == "rose":
            record["semantic_super"] = "D"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(payload))
    with pytest.raises(TaxonomyError):
        build_taxonomy(bad)


def test_swapped_pair_rejected(taxonomy):
    data = taxonomy.to_dict()
    by_name = {r["name"]: r for r in data["classes"]}
    by_name["rose"]["semantic_super"] = "E"
    by_name["tulip"]["semantic_super"] = "E"
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_dict(data)


def test_duplicate_name_rejected(taxonomy):
    data = taxonomy.to_dict()
    data["classes"][1]["name"] = data["classes"][0]["name"]
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_dict(data)


def test_wrong_count_rejected(taxonomy):
    data = taxonomy.to_dict()
    data["classes"] = data["classes"][:-1]
    with pytest.raises(TaxonomyError):
        ClassTaxonomy.from_dict(data)


def test_round_trip(taxonomy):
    clone = ClassTaxonomy.from_dict(taxonomy.to_dict())
    assert clone.triples() == taxonomy.triples()


def test_missing_file_errors(tmp_path):
    with pytest.raises(TaxonomyError):
        build_taxonomy(tmp_path / "nope.json")


def test_default_matches_loader():
    t1 = load_default_taxonomy()
    t2 = build_taxonomy(default_taxonomy_path())
    assert t1.triples() == t2.triples()
