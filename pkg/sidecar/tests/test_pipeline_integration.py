"""Full-fidelity path: the augmentation CLI driving a live sidecar.

Both sides are exercised strictly through their published surfaces — the
pipeline through its command line with DOMAINRAG_ENDPOINTS pointing at the
service, the sidecar through HTTP. Nothing here reaches into either
package's internals.
"""

import json
import os
import socket
import subprocess
import sys

import numpy as np
from PIL import Image

from domainrag_sidecar.config import SidecarConfig

from test_acceptance import RunningSidecar


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _write_png(rng, path, h, w):
    arr = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def _write_corpus(tmp_path, rng):
    db = tmp_path / "db"
    sup = tmp_path / "support"
    db.mkdir()
    sup.mkdir()
    images = []
    for i in range(6):
        _write_png(rng, db / f"bg_{i}.png", 40, 56)
        images.append({"id": i + 1, "file_name": f"bg_{i}.png", "width": 56, "height": 40})
    (db / "annotations.json").write_text(
        json.dumps({"images": images, "annotations": [], "categories": []})
    )
    _write_png(rng, sup / "s0.png", 60, 60)
    (sup / "annotations.json").write_text(
        json.dumps({
            "images": [{"id": 50, "file_name": "s0.png", "width": 60, "height": 60}],
            "annotations": [{"id": 1, "image_id": 50, "category_id": 1, "bbox": [10, 12, 20, 16]}],
            "categories": [{"id": 1, "name": "thing"}],
        })
    )
    return db, sup


def _cli(env, *args):
    return subprocess.run(
        [sys.executable, "-m", "domainrag.cli", *map(str, args)],
        capture_output=True, text=True, env=env, timeout=300,
    )


def test_cli_augments_through_live_sidecar(tmp_path):
    rng = np.random.default_rng(99)
    db, sup = _write_corpus(tmp_path, rng)
    config = SidecarConfig.with_fallback_models(port=_free_port(), seed=1)
    with RunningSidecar(config) as base:
        env = dict(os.environ, DOMAINRAG_ENDPOINTS=base)
        idx = tmp_path / "bg.idx"
        built = _cli(env, "index-build", db / "annotations.json", idx)
        assert built.returncode == 0, built.stderr
        assert idx.exists()

        out = tmp_path / "out"
        ran = _cli(
            env, "augment", sup / "annotations.json", idx, out,
            "--set", "m=6", "--set", "n_retrieve=2", "--set", "n_generate=2",
            "--set", "resample_policy=none", "--seed", "4",
        )
        assert ran.returncode == 0, ran.stderr

    doc = json.loads((out / "annotations.json").read_text())
    assert len(doc["images"]) == 3  # original + 2 generated
    prov = [json.loads(l) for l in (out / "annotations.provenance.jsonl").open()]
    assert len(prov) == 2

    # foreground is preserved verbatim even through the HTTP round trip
    src = np.asarray(Image.open(sup / "s0.png").convert("RGB"))
    for rec in prov:
        aug = np.asarray(Image.open(out / rec["output_image"]).convert("RGB"))
        assert np.array_equal(aug[12:28, 10:30], src[12:28, 10:30])
