import json
import os

import numpy as np
import pytest

from domainrag.imageio import save_png


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_image(rng, height, width):
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def write_coco(path, images, annotations, categories):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"images": images, "annotations": annotations, "categories": categories}, fh)


@pytest.fixture
def tiny_corpus(tmp_path, rng):
    """A small background database + support set on disk, COCO-annotated."""
    db_dir = tmp_path / "db"
    sup_dir = tmp_path / "support"
    db_dir.mkdir()
    sup_dir.mkdir()

    db_images = []
    for i in range(10):
        h, w = 48 + 2 * i, 64
        save_png(random_image(rng, h, w), db_dir / f"bg_{i:03d}.png")
        db_images.append({"id": i + 1, "file_name": f"bg_{i:03d}.png", "width": w, "height": h})
    write_coco(db_dir / "annotations.json", db_images, [], [])

    categories = [{"id": 1, "name": "widget"}, {"id": 2, "name": "gadget"}]
    sup_images, sup_anns = [], []
    for i in range(3):
        h, w = 80, 100
        save_png(random_image(rng, h, w), sup_dir / f"sup_{i}.png")
        sup_images.append({"id": 100 + i, "file_name": f"sup_{i}.png", "width": w, "height": h})
        sup_anns.append(
            {"id": 10 + i, "image_id": 100 + i, "category_id": 1 + (i % 2), "bbox": [8 + i, 10, 24, 20]}
        )
    write_coco(sup_dir / "annotations.json", sup_images, sup_anns, categories)

    return {
        "db_annotations": str(db_dir / "annotations.json"),
        "db_dir": str(db_dir),
        "support_annotations": str(sup_dir / "annotations.json"),
        "support_dir": str(sup_dir),
    }
