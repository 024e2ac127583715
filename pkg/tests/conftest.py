"""Shared fixtures: a synthetic CIFAR-100-format archive and prepared
datasets/catalogs derived from it.

The archive mimics the real python-pickle layout (train/test/meta with
row-major uint8 RGB planes) but holds class-separable synthetic images:
each of the 25 taxonomy classes gets a distinct flat color plus mild
structure and noise, so a small model can actually learn the task in a
few epochs and attack tests have nontrivial gradients to work with.
"""

import pickle
from pathlib import Path

import numpy as np
import pytest

from semalign import dataset as ds
from semalign.hybridgen import ReferenceMixer, build_class_prototypes, generate_catalog
from semalign.taxonomy import load_default_taxonomy

# Standard CIFAR-100 fine label names, alphabetical, as shipped in the
# real meta file. The fixture archive reuses them so ingestion by name
# behaves exactly as it would on the real archive.
CIFAR100_FINE_NAMES = [
    "apple", "aquarium_fish", "baby", "bear", "beaver", "bed", "bee", "beetle",
    "bicycle", "bottle", "bowl", "boy", "bridge", "bus", "butterfly", "camel",
    "can", "castle", "caterpillar", "cattle", "chair", "chimpanzee", "clock",
    "cloud", "cockroach", "couch", "crab", "crocodile", "cup", "dinosaur",
    "dolphin", "elephant", "flatfish", "forest", "fox", "girl", "hamster",
    "house", "kangaroo", "keyboard", "lamp", "lawn_mower", "leopard", "lion",
    "lizard", "lobster", "man", "maple_tree", "motorcycle", "mountain",
    "mouse", "mushroom", "oak_tree", "orange", "orchid", "otter", "palm_tree",
    "pear", "pickup_truck", "pine_tree", "plain", "plate", "poppy",
    "porcupine", "possum", "rabbit", "raccoon", "ray", "road", "rocket",
    "rose", "sea", "seal", "shark", "shrew", "skunk", "skyscraper", "snail",
    "snake", "spider", "squirrel", "streetcar", "sunflower", "sweet_pepper",
    "table", "tank", "telephone", "television", "tiger", "tractor", "train",
    "trout", "tulip", "turtle", "wardrobe", "whale", "willow_tree", "wolf",
    "woman", "worm",
]

ARCHIVE_TRAIN_PER_CLASS = 40
ARCHIVE_TEST_PER_CLASS = 8


def _class_colors(wanted_names):
    """One well-separated RGB color per taxonomy class (3x3x3 grid)."""
    levels = (0.2, 0.5, 0.8)
    points = [(r, g, b) for r in levels for g in levels for b in levels]
    ordered = sorted(wanted_names)
    return {name: np.array(points[i], dtype=np.float64) for i, name in enumerate(ordered)}


def _synthetic_image(color, rng):
    img = np.tile(color, (32, 32, 1))
    img[:, :16, :] *= 0.9
    img += rng.uniform(-0.06, 0.06, size=(32, 32, 3))
    return np.clip(img, 0.02, 0.98)


def build_fake_archive(
    root: Path,
    train_per_class: int = ARCHIVE_TRAIN_PER_CLASS,
    test_per_class: int = ARCHIVE_TEST_PER_CLASS,
    seed: int = 20260822,
) -> Path:
    """Write a CIFAR-100-format archive for the 25 taxonomy classes."""
    taxonomy = load_default_taxonomy()
    colors = _class_colors(taxonomy.names)
    name_to_src = {n: i for i, n in enumerate(CIFAR100_FINE_NAMES)}
    rng = np.random.default_rng(seed)

    archive = root / "cifar-100-python"
    archive.mkdir(parents=True, exist_ok=True)
    with open(archive / "meta", "wb") as fh:
        pickle.dump(
            {"fine_label_names": list(CIFAR100_FINE_NAMES), "coarse_label_names": []},
            fh,
        )

    for split, per_class in (("train", train_per_class), ("test", test_per_class)):
        labels = []
        for name in taxonomy.names:
            labels.extend([name_to_src[name]] * per_class)
        labels = np.array(labels)
        rng.shuffle(labels)
        rows = np.empty((len(labels), 3072), dtype=np.uint8)
        src_to_name = {v: k for k, v in name_to_src.items()}
        for i, src_label in enumerate(labels):
            img = _synthetic_image(colors[src_to_name[int(src_label)]], rng)
            quantized = np.round(img * 255.0).astype(np.uint8)
            rows[i] = quantized.transpose(2, 0, 1).reshape(-1)
        with open(archive / split, "wb") as fh:
            pickle.dump(
                {"data": rows, "fine_labels": [int(x) for x in labels]}, fh
            )
    return archive


@pytest.fixture(scope="session")
def archive_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("archive")
    return build_fake_archive(root)


@pytest.fixture(scope="session")
def taxonomy():
    return load_default_taxonomy()


@pytest.fixture(scope="session")
def images4(archive_dir, taxonomy):
    """4 train + 2 test images per class (100 train total)."""
    images, manifest = ds.ingest_subset(
        archive_dir, taxonomy, limit_train_per_class=4, limit_test_per_class=2
    )
    return images, manifest


@pytest.fixture(scope="session")
def train4(images4):
    return ds.split_images(images4[0], "train")


@pytest.fixture(scope="session")
def prepared4(tmp_path_factory, images4) -> Path:
    out = tmp_path_factory.mktemp("prepared4")
    images, manifest = images4
    ds.save_dataset(images, manifest, out)
    return out


@pytest.fixture(scope="session")
def catalog4(tmp_path_factory, train4, taxonomy):
    """Complete reference catalog over the 100-image fixture, nu=0.5."""
    out = tmp_path_factory.mktemp("catalog4")
    mixer = ReferenceMixer(build_class_prototypes(train4))
    return generate_catalog(train4, taxonomy, 0.5, mixer, out, seed=7)


@pytest.fixture(scope="session")
def catalog1(tmp_path_factory, archive_dir, taxonomy):
    """One train image per class: exactly 4 catalog records per class."""
    images, _ = ds.ingest_subset(
        archive_dir, taxonomy, limit_train_per_class=1, limit_test_per_class=1
    )
    train = ds.split_images(images, "train")
    out = tmp_path_factory.mktemp("catalog1")
    mixer = ReferenceMixer(build_class_prototypes(train))
    return generate_catalog(train, taxonomy, 0.75, mixer, out, seed=3)
