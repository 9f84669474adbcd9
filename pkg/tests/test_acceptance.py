"""Acceptance suite: one test per acceptance criterion, at the stated
tolerances, each printing a PASS line (run with `pytest tests/test_acceptance.py -v -s`).

These are intentionally heavier than the unit tests: they sweep randomized
inputs against independent oracles and drive the CLI end to end.
"""

import filecmp
import json
import math
import time

import numpy as np
import pytest

from domainrag.cli import EXIT_OK, main
from domainrag.dataset import (
    AugmentedSample,
    Category,
    LabeledBox,
    Provenance,
    SupportSample,
    SupportSet,
    expand_support,
)
from domainrag.embedding import FusionWeights, fuse, style_vector
from domainrag.errors import FormatError, InsufficientSamplesError
from domainrag.gateway.types import GenerationParams
from domainrag.geometry import (
    BoundingBox,
    ResampleDirection,
    ResamplePlan,
    ResamplePolicy,
    build_mask,
    compose,
    inverse_plan,
    inverse_transform_bbox,
    needs_upsample,
    plan_resample,
    transform_bbox,
)
from domainrag.imageio import load_image, save_png
from domainrag.index import BackgroundRecord, build_index, load_index, retrieve, save_index
from domainrag.metrics import GaussianStats, fit_gaussian, frechet_distance

from conftest import random_image, write_coco


def _pass(name):
    print(f"ACCEPTANCE PASS: {name}")


# -- retrieval ----------------------------------------------------------------


def brute_force_two_stage(index, query_emb, query_style, m, n):
    q = np.asarray(query_emb, dtype=np.float64)
    qn = np.linalg.norm(q)
    sims = []
    for rec in index.records:
        e = rec.embedding.astype(np.float64)
        s = float(np.dot(e, q) / (np.linalg.norm(e) * qn))
        sims.append((rec.record_id, min(1.0, max(-1.0, s))))
    sims.sort(key=lambda t: (-t[1], t[0]))
    shortlist = sims[: min(m, len(sims))]
    qs = np.asarray(query_style, dtype=np.float64)
    rescored = []
    for rid, _ in shortlist:
        st = index.record(rid).style.astype(np.float64)
        rescored.append((rid, float(np.sqrt(np.sum((st - qs) ** 2)))))
    rescored.sort(key=lambda t: (t[1], t[0]))
    return [rid for rid, _ in rescored[: min(n, len(rescored))]]


def test_retrieval_oracle_equivalence_200_databases():
    rng = np.random.default_rng(1001)
    started = time.monotonic()
    for trial in range(200):
        size = int(rng.integers(1, 1001))
        dim = int(rng.integers(8, 257))
        style_dim = 2 * int(rng.integers(1, 9))
        emb = rng.normal(size=(size, dim))
        sty = np.abs(rng.normal(size=(size, style_dim)))
        records = [
            BackgroundRecord(record_id=i, image_ref=f"r{i}", embedding=emb[i], style=sty[i])
            for i in range(size)
        ]
        if size >= 4:  # inject exact duplicates to exercise the id tie-break
            for j in range(int(rng.integers(1, 4))):
                src = records[int(rng.integers(0, size))]
                records.append(
                    BackgroundRecord(record_id=size + j, image_ref=f"dup{j}",
                                     embedding=src.embedding, style=src.style)
                )
        index = build_index(records)
        query = rng.normal(size=dim)
        query_style = np.abs(rng.normal(size=style_dim))
        m = int(rng.integers(1, 1051))
        n = int(rng.integers(1, 21))
        got = retrieve(index, query, query_style, m=m, n=n).record_ids()
        want = brute_force_two_stage(index, query, query_style, m, n)
        assert got == want, f"trial {trial}: mismatch for size={size} dim={dim} m={m} n={n}"
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"retrieval acceptance took {elapsed:.1f}s"
    _pass(f"retrieval oracle equivalence, 200 randomized databases in {elapsed:.1f}s")


# -- style math ---------------------------------------------------------------


def test_style_math_against_brute_force():
    rng = np.random.default_rng(1002)
    for _ in range(100):
        c = int(rng.integers(1, 9))
        h = int(rng.integers(1, 12))
        w = int(rng.integers(1, 12))
        fmap = rng.normal(scale=5.0, size=(c, h, w))
        got = style_vector(fmap)
        means, stds = [], []
        for ch in range(c):
            vals = [float(v) for v in fmap[ch].ravel()]
            mu = sum(vals) / len(vals)
            means.append(mu)
            stds.append(math.sqrt(sum((v - mu) ** 2 for v in vals) / len(vals)))
        want = np.array(means + stds)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    out = style_vector(np.zeros((64, 4, 4)))
    assert out.shape == (128,)  # C channels -> 2C descriptor

    rng2 = np.random.default_rng(7)
    fmap = rng2.normal(size=(3, 5, 5))
    sv = style_vector(fmap)
    assert np.allclose(sv[:3], fmap.mean(axis=(1, 2)))  # means occupy the first half

    const = style_vector(np.full((5, 6, 7), 2.25))
    assert np.array_equal(const[5:], np.zeros(5))  # constant map: zero stds
    _pass("style descriptor matches brute-force mean/population-std within 1e-9")


# -- fusion -------------------------------------------------------------------


def test_fusion_worked_example_and_bilinearity():
    out = fuse([1.0, 1.0], [1.0, 0.0], FusionWeights(1.0, 0.8))
    assert out[0] == 1.8 and out[1] == 1.0  # exact in double precision

    rng = np.random.default_rng(1003)
    for _ in range(1000):
        a = rng.normal(size=int(rng.integers(1, 16)))
        b = rng.normal(size=a.size)
        l1, l2, m1, m2 = rng.uniform(0.0, 4.0, size=4)
        lhs = fuse(a, b, FusionWeights(l1 + m1, l2 + m2))
        rhs = fuse(a, b, FusionWeights(l1, l2)) + fuse(a, b, FusionWeights(m1, m2))
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)
    _pass("fusion worked example exact; bilinearity on 1000 random triples within 1e-9")


# -- resample indicators ------------------------------------------------------


def test_upsample_indicator_truth_table_and_inverse_plans():
    cases = {(1025, 1025): 0, (1024, 1025): 1, (1025, 1024): 1, (800, 600): 1}
    for (w, h), want in cases.items():
        img = np.zeros((h, w, 3), dtype=np.uint8)
        assert needs_upsample(img) == want, (w, h)

    rng = np.random.default_rng(1004)
    for _ in range(100):
        w = int(rng.integers(1, 2600))
        h = int(rng.integers(1, 2600))
        img = np.zeros((h, w, 3), dtype=np.uint8)
        plan = plan_resample(img, ResamplePolicy.DOUBLE_BELOW_1024)
        inv = inverse_plan(plan)
        forward_up = plan.direction is ResampleDirection.UPSAMPLE
        assert (inv.direction is ResampleDirection.DOWNSAMPLE) == forward_up
        assert forward_up == bool(needs_upsample(img))
    _pass("upsample indicator truth table exact; inverse plan tracks forward for 100 sizes")


# -- masks --------------------------------------------------------------------


def test_mask_zero_count_matches_union_area_oracle():
    rng = np.random.default_rng(1005)
    started = time.monotonic()
    for _ in range(500):
        w = int(rng.integers(1, 257))
        h = int(rng.integers(1, 257))
        boxes = []
        for _ in range(int(rng.integers(0, 7))):
            bw = int(rng.integers(1, w + 1))
            bh = int(rng.integers(1, h + 1))
            x = int(rng.integers(0, w - bw + 1))
            y = int(rng.integers(0, h - bh + 1))
            boxes.append(BoundingBox(x, y, bw, bh))
        mask = build_mask(w, h, boxes)
        covered = set()
        for b in boxes:
            for yy in range(b.y, b.y + b.h):
                covered.update(range(yy * w + b.x, yy * w + b.x + b.w))
        assert int((mask == 0).sum()) == len(covered)
    elapsed = time.monotonic() - started
    assert elapsed < 30.0, f"mask acceptance took {elapsed:.1f}s"
    _pass(f"mask zero-count equals exact union area for 500 box sets in {elapsed:.1f}s")


# -- foreground preservation --------------------------------------------------


def test_compose_preserves_foreground_bit_exact():
    rng = np.random.default_rng(1006)
    for _ in range(200):
        h = int(rng.integers(1, 64))
        w = int(rng.integers(1, 64))
        img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        fill = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        mask = rng.integers(0, 2, size=(h, w)).astype(np.uint8)
        out = compose(img, mask, fill)
        keep = mask == 0
        assert np.array_equal(out[keep], img[keep])
    _pass("compose() bit-exact on mask==0 pixels for 200 random triples")


# -- expansion accounting -----------------------------------------------------


def _support_of(k, cats=(1, 2)):
    samples = []
    sid = 1
    for c in cats:
        for _ in range(k):
            samples.append(
                SupportSample(sample_id=sid, image_path=f"s{sid}.png", width=16, height=16,
                              boxes=(LabeledBox(BoundingBox(0, 0, 4, 4), c, sid),))
            )
            sid += 1
    return SupportSet(tuple(samples), tuple(Category(c, f"c{c}") for c in cats))


def test_expansion_accounting_table():
    params = GenerationParams(guidance_scale=2.5, num_steps=50, noise_strength=0.8, seed=0)
    for k in (1, 5, 10):
        for n in (0, 1, 3, 5):
            support = _support_of(k)
            generated = [
                AugmentedSample(
                    image_path=f"aug_{s.sample_id}_{i}.png", width=16, height=16,
                    boxes=tuple(LabeledBox(lb.box, lb.category_id) for lb in s.boxes),
                    provenance=Provenance(s.sample_id, 0, i, params, params, "h"),
                )
                for s in support.samples
                for i in range(n)
            ]
            expanded = expand_support(support, generated, n)
            counts = expanded.per_class_counts()
            assert all(v == k * (n + 1) for v in counts.values()), (k, n, counts)
    _pass("per-class expansion count K*(n+1) exact over (K, n) in {1,5,10} x {0,1,3,5}")


# -- FID ----------------------------------------------------------------------


def test_fid_correctness():
    rng = np.random.default_rng(1007)
    for _ in range(50):
        mu1, mu2 = rng.normal(size=2)
        v1, v2 = rng.uniform(0.01, 9.0, size=2)
        got = frechet_distance(
            GaussianStats(mean=[mu1], covariance=[[v1]]),
            GaussianStats(mean=[mu2], covariance=[[v2]]),
        )
        want = (mu1 - mu2) ** 2 + (math.sqrt(v1) - math.sqrt(v2)) ** 2
        assert abs(got - want) < 1e-6

    mat = rng.normal(size=(12, 4))
    g = fit_gaussian(list(mat))
    assert frechet_distance(g, g) < 1e-8

    dim = 5
    mu1, mu2 = rng.normal(size=dim), rng.normal(size=dim)
    v1, v2 = rng.uniform(0.1, 3.0, size=dim), rng.uniform(0.1, 3.0, size=dim)
    full = frechet_distance(
        GaussianStats(mean=mu1, covariance=np.diag(v1)),
        GaussianStats(mean=mu2, covariance=np.diag(v2)),
    )
    separable = sum(
        (mu1[i] - mu2[i]) ** 2 + (math.sqrt(v1[i]) - math.sqrt(v2[i])) ** 2 for i in range(dim)
    )
    assert abs(full - separable) < 1e-7

    with pytest.raises(InsufficientSamplesError):
        fit_gaussian([rng.normal(size=3)])
    _pass("FID: 1-D closed form 1e-6, self-distance < 1e-8, diagonal separability 1e-7, "
          "single-sample set raises")


# -- end-to-end determinism ---------------------------------------------------


def _build_e2e_fixture(tmp_path, rng):
    db_dir = tmp_path / "db"
    sup_dir = tmp_path / "support"
    db_dir.mkdir()
    sup_dir.mkdir()
    db_images = []
    for i in range(12):
        h, w = 40 + 3 * i, 56
        save_png(random_image(rng, h, w), db_dir / f"bg_{i:02d}.png")
        db_images.append({"id": i + 1, "file_name": f"bg_{i:02d}.png", "width": w, "height": h})
    write_coco(db_dir / "annotations.json", db_images, [], [])

    cats = [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}]
    images, anns = [], []
    for i in range(5):
        h, w = 72, 96
        save_png(random_image(rng, h, w), sup_dir / f"s{i}.png")
        images.append({"id": 200 + i, "file_name": f"s{i}.png", "width": w, "height": h})
        anns.append({"id": 300 + i, "image_id": 200 + i, "category_id": 1 + i % 2,
                     "bbox": [6 + i, 8, 20, 16]})
    write_coco(sup_dir / "annotations.json", images, anns, cats)
    return db_dir, sup_dir


def _assert_trees_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only, (
        cmp.diff_files, cmp.left_only, cmp.right_only
    )
    for sub in cmp.subdirs.values():
        _assert_trees_equal(sub.left, sub.right)


def test_end_to_end_determinism_and_runtime(tmp_path):
    rng = np.random.default_rng(1008)
    db_dir, sup_dir = _build_e2e_fixture(tmp_path, rng)
    idx = tmp_path / "bg.idx"
    assert main(["index-build", str(db_dir / "annotations.json"), str(idx), "--fake-backends"]) == EXIT_OK

    started = time.monotonic()
    for run in ("run1", "run2"):
        code = main([
            "augment", str(sup_dir / "annotations.json"), str(idx), str(tmp_path / run),
            "--fake-backends", "--seed", "31337",
        ])
        assert code == EXIT_OK
    elapsed = time.monotonic() - started

    _assert_trees_equal(tmp_path / "run1", tmp_path / "run2")
    prov = [json.loads(l) for l in open(tmp_path / "run1" / "annotations.provenance.jsonl")]
    assert len(prov) == 5 * 5  # n_generate defaults to 5
    assert elapsed < 60.0, f"two 5-image runs took {elapsed:.1f}s"
    _pass(f"two cmd_augment runs byte-identical; 2x5-support runs in {elapsed:.1f}s")


def test_end_to_end_foreground_preservation_policy_none(tmp_path):
    rng = np.random.default_rng(1009)
    db_dir, sup_dir = _build_e2e_fixture(tmp_path, rng)
    idx = tmp_path / "bg.idx"
    assert main(["index-build", str(db_dir / "annotations.json"), str(idx), "--fake-backends"]) == EXIT_OK
    out = tmp_path / "none"
    code = main([
        "augment", str(sup_dir / "annotations.json"), str(idx), str(out),
        "--fake-backends", "--set", "resample_policy=none",
    ])
    assert code == EXIT_OK

    support = json.load(open(sup_dir / "annotations.json"))
    boxes_by_image = {}
    for ann in support["annotations"]:
        boxes_by_image.setdefault(ann["image_id"], []).append(ann["bbox"])
    files = {im["id"]: im["file_name"] for im in support["images"]}
    prov = [json.loads(l) for l in open(out / "annotations.provenance.jsonl")]
    assert prov, "no provenance records emitted"
    for rec in prov:
        src_id = rec["source_sample_id"]
        src = load_image(sup_dir / files[src_id])
        aug = load_image(out / rec["output_image"])
        for x, y, w, h in boxes_by_image[src_id]:
            assert np.array_equal(aug[y : y + h, x : x + w], src[y : y + h, x : x + w])
    _pass("every augmented image bit-identical to its source inside every ground-truth box "
          "(fake backends, resample policy none)")


# -- resample round trip ------------------------------------------------------


def test_resample_round_trip_and_policy_factors():
    rng = np.random.default_rng(1010)
    for _ in range(1000):
        box = BoundingBox(
            int(rng.integers(0, 2000)), int(rng.integers(0, 2000)),
            int(rng.integers(1, 1000)), int(rng.integers(1, 1000)),
        )
        for factor in (2, 4, 8):
            plan = ResamplePlan(ResampleDirection.UPSAMPLE, factor, ResamplePolicy.DOUBLE_BELOW_1024)
            back = inverse_transform_bbox(transform_bbox(box, plan), plan)
            assert max(abs(back.x - box.x), abs(back.y - box.y),
                       abs(back.w - box.w), abs(back.h - box.h)) <= 1

    plan = plan_resample(np.zeros((400, 500, 3), dtype=np.uint8), ResamplePolicy.LONGEST_SIDE_2048)
    assert plan.direction is ResampleDirection.UPSAMPLE and plan.factor == 8

    plan = plan_resample(np.zeros((3024, 4032, 3), dtype=np.uint8), ResamplePolicy.INTEGER_EDGE_2800)
    assert plan.direction is ResampleDirection.DOWNSAMPLE
    assert plan.factor.numerator == 1 and plan.factor.denominator == 2
    _pass("bbox round-trip within +/-1 px for factors {2,4,8} over 1000 boxes; "
          "appendix policies give x8 for 500x400 and x1/2 for 4032x3024")


# -- index persistence --------------------------------------------------------


def test_index_persistence_50_round_trips(tmp_path):
    rng = np.random.default_rng(1011)
    for trial in range(50):
        size = int(rng.integers(1, 60))
        dim = int(rng.integers(2, 40))
        sdim = 2 * int(rng.integers(1, 12))
        records = [
            BackgroundRecord(
                record_id=i,
                image_ref=f"im_{trial}_{i}.png",
                embedding=rng.normal(size=dim),
                style=np.abs(rng.normal(size=sdim)),
            )
            for i in range(size)
        ]
        index = build_index(records)
        path = tmp_path / f"t{trial}.idx"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded == index
        for a, b in zip(loaded.records, index.records):
            assert a.embedding.tobytes() == b.embedding.tobytes()
            assert a.style.tobytes() == b.style.tobytes()

    good = tmp_path / "t0.idx"
    corrupt = tmp_path / "corrupt.idx"
    data = bytearray(good.read_bytes())
    data[:8] = b"WRONGMAG"
    corrupt.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        load_index(corrupt)
    _pass("save/load bit-exact on 50 random indices; corrupt header rejected with FormatError")
