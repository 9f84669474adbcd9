import json

import pytest

from domainrag.dataset import (
    AugmentedSample,
    Category,
    EpisodeSpec,
    LabeledBox,
    Provenance,
    SupportSample,
    SupportSet,
    emit_coco,
    expand_support,
    load_coco,
    provenance_sidecar_path,
    sample_episode,
    support_set_from_dataset,
)
from domainrag.errors import (
    AccountingError,
    DuplicateIdError,
    FormatError,
    InsufficientDataError,
    ValidationError,
)
from domainrag.gateway.types import GenerationParams
from domainrag.geometry import BoundingBox

from conftest import write_coco


def minimal_doc():
    return (
        [{"id": 1, "file_name": "a.png", "width": 32, "height": 24}],
        [{"id": 1, "image_id": 1, "category_id": 1, "bbox": [2, 3, 10, 8]}],
        [{"id": 1, "name": "thing"}],
    )


def make_dataset(tmp_path, images, annotations, categories, name="coco.json"):
    path = tmp_path / name
    write_coco(path, images, annotations, categories)
    return load_coco(path)


class TestLoadCoco:
    def test_minimal_valid(self, tmp_path):
        ds = make_dataset(tmp_path, *minimal_doc())
        assert (len(ds.images), len(ds.annotations), len(ds.categories)) == (1, 1, 1)
        assert ds.annotations[0].box == BoundingBox(2, 3, 10, 8)

    def test_dangling_image_reference(self, tmp_path):
        images, anns, cats = minimal_doc()
        anns[0]["image_id"] = 99
        with pytest.raises(ValidationError):
            make_dataset(tmp_path, images, anns, cats)

    def test_dangling_category_reference(self, tmp_path):
        images, anns, cats = minimal_doc()
        anns[0]["category_id"] = 5
        with pytest.raises(ValidationError):
            make_dataset(tmp_path, images, anns, cats)

    def test_bbox_out_of_bounds(self, tmp_path):
        images, anns, cats = minimal_doc()
        anns[0]["bbox"] = [30, 3, 10, 8]
        with pytest.raises(ValidationError):
            make_dataset(tmp_path, images, anns, cats)

    def test_duplicate_ids(self, tmp_path):
        images, anns, cats = minimal_doc()
        images.append(dict(images[0]))
        with pytest.raises(DuplicateIdError):
            make_dataset(tmp_path, images, anns, cats)

    def test_not_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(FormatError):
            load_coco(path)

    def test_missing_sections(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"images": []}))
        with pytest.raises(FormatError):
            load_coco(path)

    def test_float_bbox_canonicalized_outward(self, tmp_path):
        images, anns, cats = minimal_doc()
        anns[0]["bbox"] = [10.5, 10.5, 5.2, 3.3]
        ds = make_dataset(tmp_path, images, anns, cats)
        box = ds.annotations[0].box
        # floor origin, ceil extent: never shrinks the region
        assert box == BoundingBox(10, 10, 6, 4)

    def test_round_trip_structural_equality(self, tmp_path, rng):
        images = [{"id": i, "file_name": f"i{i}.png", "width": 64, "height": 48} for i in range(1, 6)]
        cats = [{"id": 1, "name": "a"}, {"id": 2, "name": "b"}]
        anns = []
        for i in range(1, 11):
            img = int(rng.integers(1, 6))
            anns.append(
                {"id": i, "image_id": img, "category_id": int(rng.integers(1, 3)),
                 "bbox": [int(rng.integers(0, 30)), int(rng.integers(0, 20)), 8, 6]}
            )
        ds = make_dataset(tmp_path, images, anns, cats)
        out = tmp_path / "again.json"
        emit_coco(ds, out)
        assert load_coco(out) == ds


def episode_fixture(tmp_path, n_cats=4, imgs_per_cat=6):
    images, anns, cats = [], [], []
    next_img, next_ann = 1, 1
    for c in range(1, n_cats + 1):
        cats.append({"id": c, "name": f"cat{c}"})
        for _ in range(imgs_per_cat):
            images.append({"id": next_img, "file_name": f"im{next_img}.png", "width": 64, "height": 64})
            anns.append({"id": next_ann, "image_id": next_img, "category_id": c, "bbox": [1, 1, 10, 10]})
            next_img += 1
            next_ann += 1
    return make_dataset(tmp_path, images, anns, cats)


class TestEpisodeSampling:
    def test_n_times_k_support_entries(self, tmp_path):
        ds = episode_fixture(tmp_path)
        ep = sample_episode(ds, EpisodeSpec(n_way=3, k_shot=5, seed=1))
        assert len(ep.support.samples) == 15
        counts = ep.support.per_class_counts()
        assert sorted(counts.values()) == [5, 5, 5]

    def test_seeded_determinism(self, tmp_path):
        ds = episode_fixture(tmp_path)
        a = sample_episode(ds, EpisodeSpec(n_way=2, k_shot=3, seed=42))
        b = sample_episode(ds, EpisodeSpec(n_way=2, k_shot=3, seed=42))
        assert a == b
        c = sample_episode(ds, EpisodeSpec(n_way=2, k_shot=3, seed=43))
        assert a != c

    def test_support_query_disjoint(self, tmp_path):
        ds = episode_fixture(tmp_path)
        for seed in range(50):
            ep = sample_episode(ds, EpisodeSpec(n_way=2, k_shot=2, seed=seed))
            support_ids = {s.sample_id for s in ep.support.samples}
            assert support_ids.isdisjoint(ep.query_image_ids)

    def test_k_equals_pool_empties_query(self, tmp_path):
        ds = episode_fixture(tmp_path, n_cats=1, imgs_per_cat=4)
        ep = sample_episode(ds, EpisodeSpec(n_way=1, k_shot=4, seed=0))
        assert len(ep.support.samples) == 4
        assert ep.query_image_ids == ()

    def test_insufficient_images(self, tmp_path):
        ds = episode_fixture(tmp_path, n_cats=2, imgs_per_cat=3)
        with pytest.raises(InsufficientDataError):
            sample_episode(ds, EpisodeSpec(n_way=2, k_shot=4, seed=0))

    def test_n_way_exceeds_categories(self, tmp_path):
        ds = episode_fixture(tmp_path, n_cats=2)
        with pytest.raises(InsufficientDataError):
            sample_episode(ds, EpisodeSpec(n_way=3, k_shot=1, seed=0))

    def test_support_boxes_restricted_to_sampled_categories(self, tmp_path):
        ds = episode_fixture(tmp_path, n_cats=3, imgs_per_cat=3)
        ep = sample_episode(ds, EpisodeSpec(n_way=2, k_shot=2, seed=5))
        sampled = {c.category_id for c in ep.support.categories}
        for sample in ep.support.samples:
            assert sample.category_ids() <= sampled


def synthetic_support(k=2, cats=(1, 2)):
    samples = []
    sid = 1
    for c in cats:
        for _ in range(k):
            samples.append(
                SupportSample(
                    sample_id=sid, image_path=f"s{sid}.png", width=32, height=32,
                    boxes=(LabeledBox(BoundingBox(1, 1, 4, 4), c, sid * 10),),
                )
            )
            sid += 1
    return SupportSet(tuple(samples), tuple(Category(c, f"cat{c}") for c in cats))


def fake_generated(support, n, config_hash="deadbeef"):
    params = GenerationParams(guidance_scale=2.5, num_steps=50, noise_strength=0.8, seed=0)
    out = []
    for sample in support.samples:
        for k in range(n):
            out.append(
                AugmentedSample(
                    image_path=f"aug_{sample.sample_id}_{k}.png", width=32, height=32,
                    boxes=tuple(LabeledBox(lb.box, lb.category_id) for lb in sample.boxes),
                    provenance=Provenance(
                        source_sample_id=sample.sample_id, background_record_id=k,
                        generation_seed=k, generator_params=params, filler_params=params,
                        config_hash=config_hash,
                    ),
                )
            )
    return out


class TestExpandSupport:
    @pytest.mark.parametrize("k,n", [(1, 5), (5, 3), (2, 0)])
    def test_per_class_counts(self, k, n):
        support = synthetic_support(k=k)
        expanded = expand_support(support, fake_generated(support, n), n)
        counts = expanded.per_class_counts()
        assert all(v == k * (n + 1) for v in counts.values())

    def test_identity_with_n_zero(self):
        support = synthetic_support(k=3)
        assert expand_support(support, [], 0) == support

    def test_originals_retained_unmodified(self):
        support = synthetic_support(k=2)
        expanded = expand_support(support, fake_generated(support, 2), 2)
        assert expanded.samples[: len(support.samples)] == support.samples

    def test_count_mismatch_rejected(self):
        support = synthetic_support(k=1)
        gen = fake_generated(support, 2)
        with pytest.raises(AccountingError):
            expand_support(support, gen[:-1], 2)

    def test_unknown_provenance_rejected(self):
        support = synthetic_support(k=1)
        stray = fake_generated(synthetic_support(k=3), 1)
        with pytest.raises(ValidationError):
            expand_support(support, stray, 1)

    def test_category_drift_rejected(self):
        support = synthetic_support(k=1, cats=(1,))
        gen = fake_generated(support, 1)
        bad = AugmentedSample(
            image_path=gen[0].image_path, width=32, height=32,
            boxes=(LabeledBox(BoundingBox(1, 1, 4, 4), 9),),
            provenance=gen[0].provenance,
        )
        with pytest.raises(ValidationError):
            expand_support(support, [bad], 1)


class TestMergeAugmented:
    def test_originals_keep_ids_augmented_get_fresh_ones(self):
        from domainrag.dataset import merge_augmented

        support = synthetic_support(k=2)
        generated = fake_generated(support, 1)
        ds, provenance = merge_augmented(support, generated)
        original_ids = [s.sample_id for s in support.samples]
        assert [im.image_id for im in ds.images][: len(original_ids)] == original_ids
        fresh = [im.image_id for im in ds.images][len(original_ids):]
        assert min(fresh) == max(original_ids) + 1
        assert len(set(a.annotation_id for a in ds.annotations)) == len(ds.annotations)
        assert len(provenance) == len(generated)
        assert all(rec["image_id"] in fresh for rec in provenance)

    def test_emittable_and_reloadable(self, tmp_path):
        from domainrag.dataset import merge_augmented

        support = synthetic_support(k=1)
        ds, provenance = merge_augmented(support, fake_generated(support, 2))
        out = tmp_path / "merged.json"
        emit_coco(ds, out, provenance)
        assert load_coco(out) == ds

    def test_string_original_ids_rejected(self):
        from domainrag.dataset import merge_augmented

        base = synthetic_support(k=1)
        weird = SupportSet(
            (SupportSample("not-an-int", "x.png", 8, 8,
                           (LabeledBox(BoundingBox(0, 0, 2, 2), 1),)),),
            base.categories,
        )
        with pytest.raises(ValidationError):
            merge_augmented(weird, [])


def test_support_set_from_dataset_requires_boxes(tmp_path):
    images, anns, cats = minimal_doc()
    images.append({"id": 2, "file_name": "b.png", "width": 16, "height": 16})
    ds = make_dataset(tmp_path, images, anns, cats)
    with pytest.raises(ValidationError):
        support_set_from_dataset(ds)


def test_emit_writes_provenance_sidecar(tmp_path):
    ds = make_dataset(tmp_path, *minimal_doc())
    out = tmp_path / "out.json"
    emit_coco(ds, out, provenance=[{"output_image": "x.png", "seed": 3}])
    sidecar = provenance_sidecar_path(out)
    lines = [json.loads(l) for l in open(sidecar) if l.strip()]
    assert lines == [{"output_image": "x.png", "seed": 3}]
