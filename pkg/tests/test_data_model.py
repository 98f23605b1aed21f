import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camchex.data import (
    DEFAULT_LABEL_NAMES,
    ClassGroup,
    Dataset,
    Gender,
    LabelKind,
    LabelVector,
    ManifestError,
    PrevalenceError,
    Split,
    Study,
    SynthSpec,
    View,
    ViewImage,
    VitalSigns,
    Vocabulary,
    compute_prevalence,
    generate_synthetic,
    parse_manifest,
    read_image_sidecar,
    render_vitals_text,
    subsample_views,
    write_image_sidecar,
    write_manifest,
)
from camchex.data.vocab import CLS_ID, UNK_ID
from camchex.seeding import np_rng


# ---------------------------------------------------------------- vitals text

def test_render_vitals_reference_row_a():
    v = VitalSigns(
        temperature=97.9, heart_rate=109.0, respiratory_rate=22.0,
        o2_saturation=94.0, systolic_bp=136.0, diastolic_bp=54.0, gender=Gender.F,
    )
    assert render_vitals_text(v) == (
        "Temperature: 97.9 | Heart rate: 109.0 | Respiratory rate: 22.0 | "
        "O2 Saturation: 94.0 | Systolic BP: 136.0 | Diastolic BP: 54.0 | Gender: F"
    )


def test_render_vitals_reference_row_b():
    v = VitalSigns(
        temperature=98.8, heart_rate=70.0, respiratory_rate=18.0,
        o2_saturation=100.0, systolic_bp=99.0, diastolic_bp=56.0, gender=Gender.M,
    )
    assert render_vitals_text(v) == (
        "Temperature: 98.8 | Heart rate: 70.0 | Respiratory rate: 18.0 | "
        "O2 Saturation: 100.0 | Systolic BP: 99.0 | Diastolic BP: 56.0 | Gender: M"
    )


def test_render_vitals_all_absent():
    assert render_vitals_text(VitalSigns()) == (
        "Temperature: NA | Heart rate: NA | Respiratory rate: NA | "
        "O2 Saturation: NA | Systolic BP: NA | Diastolic BP: NA | Gender: NA"
    )


@given(
    present=st.lists(st.booleans(), min_size=6, max_size=6),
    gender=st.sampled_from(list(Gender)),
)
def test_render_vitals_always_six_separators(present, gender):
    fields = dict(zip(
        ("temperature", "heart_rate", "respiratory_rate", "o2_saturation", "systolic_bp", "diastolic_bp"),
        (98.6, 80.0, 16.0, 97.0, 120.0, 80.0),
    ))
    kwargs = {k: (v if keep else None) for (k, v), keep in zip(fields.items(), present)}
    text = render_vitals_text(VitalSigns(gender=gender, **kwargs))
    assert text.count(" | ") == 6


def test_vitals_rejects_nonpositive():
    with pytest.raises(ValueError):
        VitalSigns(heart_rate=0.0)
    with pytest.raises(ValueError):
        VitalSigns(temperature=float("inf"))


# ----------------------------------------------------------------- tokenizer

def test_tokenize_direct_lookup():
    vocab = Vocabulary.from_corpus(["shortness of breath ."])
    ids = vocab.encode("shortness of breath .")
    assert ids[0] == CLS_ID
    assert ids[1:] == [vocab.id_of(w) for w in ("shortness", "of", "breath", ".")]
    assert UNK_ID not in ids


def test_tokenize_empty_text():
    vocab = Vocabulary.from_corpus(["anything"])
    assert vocab.encode("") == [CLS_ID]


def test_tokenize_truncates_to_max_len():
    words = " ".join(f"w{i}" for i in range(100))
    vocab = Vocabulary.from_corpus([words])
    assert len(vocab.encode(words, max_len=64)) == 64


def test_tokenize_unknown_maps_to_unk():
    vocab = Vocabulary.from_corpus(["known words only"])
    ids = vocab.encode("known unseen")
    assert ids == [CLS_ID, vocab.id_of("known"), UNK_ID]


def test_tokenize_splits_punctuation_and_lowercases():
    vocab = Vocabulary.from_corpus(["s/p r/o chest pain ."])
    ids = vocab.encode("Chest PAIN s/p")
    toks = [vocab.token_of(i) for i in ids[1:]]
    assert toks == ["chest", "pain", "s", "/", "p"]


def test_vocabulary_file_round_trip(tmp_path):
    vocab = Vocabulary.from_corpus(["alpha beta 97.9 |"])
    vocab.save(tmp_path / "vocab.txt")
    loaded = Vocabulary.from_file(tmp_path / "vocab.txt")
    assert len(loaded) == len(vocab)
    assert loaded.id_of("alpha") == vocab.id_of("alpha")


def test_vocabulary_requires_reserved_prefix():
    with pytest.raises(ValueError):
        Vocabulary(["nope", "[UNK]"])


# ------------------------------------------------------------------ manifest

def test_manifest_round_trip_is_identity(tmp_path, mixed_splits):
    for split, dataset in mixed_splits.items():
        path = write_manifest(dataset, tmp_path / f"{split.value}.jsonl")
        back = parse_manifest(path)
        assert back.split is split
        assert back.label_names == dataset.label_names
        assert [s.study_id for s in back.studies] == [s.study_id for s in dataset.studies]
        for a, b in zip(back.studies, dataset.studies):
            assert a.indication == b.indication
            assert a.vitals == b.vitals
            assert a.labels.kind == b.labels.kind
            np.testing.assert_array_equal(a.labels.values, b.labels.values)
            np.testing.assert_array_equal(a.labels.mask, b.labels.mask)
            assert len(a.images) == len(b.images)
            for ia, ib in zip(a.images, b.images):
                assert ia.view is ib.view
                assert ia.acquisition_index == ib.acquisition_index
                np.testing.assert_array_equal(ia.pixels, ib.pixels)


def test_manifest_missing_optionals(tmp_path, train_set):
    path = write_manifest(train_set, tmp_path / "train.jsonl")
    lines = path.read_text().splitlines()
    records = [json.loads(line) for line in lines]
    missing_vitals = [r for r in records if "vitals" not in r]
    assert missing_vitals, "expected the generator to drop vitals for some studies"
    back = parse_manifest(path)
    by_id = {s.study_id: s for s in back.studies}
    for record in missing_vitals:
        assert by_id[record["study_id"]].vitals is None


def test_manifest_malformed_line_reports_line_number(tmp_path, train_set):
    path = write_manifest(train_set, tmp_path / "train.jsonl")
    lines = path.read_text().splitlines()
    lines[2] = "{not json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match="train.jsonl:3"):
        parse_manifest(path)


def test_manifest_unknown_view_rejected(tmp_path, train_set):
    path = write_manifest(train_set, tmp_path / "train.jsonl")
    lines = path.read_text().splitlines()
    record = json.loads(lines[0])
    record["images"][0]["view"] = "oblique"
    lines[0] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match="view"):
        parse_manifest(path)


def test_manifest_duplicate_study_id_rejected(tmp_path, train_set):
    path = write_manifest(train_set, tmp_path / "train.jsonl")
    lines = path.read_text().splitlines()
    lines.append(lines[0])
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match="duplicate study_id"):
        parse_manifest(path)


def test_manifest_short_label_vector_rejected(tmp_path, train_set):
    path = write_manifest(train_set, tmp_path / "train.jsonl")
    lines = path.read_text().splitlines()
    record = json.loads(lines[0])
    record["labels"] = record["labels"][:-1]
    record["mask"] = record["mask"][:-1]
    lines[0] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match="label"):
        parse_manifest(path)


def test_sidecar_round_trip_and_magic(tmp_path):
    pixels = np.random.default_rng(0).random((1, 6, 6)).astype(np.float32)
    write_image_sidecar(tmp_path / "img.cxr", pixels)
    np.testing.assert_array_equal(read_image_sidecar(tmp_path / "img.cxr"), pixels)
    (tmp_path / "bad.cxr").write_bytes(b"XXXX" + b"\0" * 16)
    with pytest.raises(ManifestError, match="magic"):
        read_image_sidecar(tmp_path / "bad.cxr")


def test_study_ingestion_bound():
    image = ViewImage(View.FRONTAL, np.zeros((1, 4, 4), dtype=np.float32), 0)
    labels = LabelVector(values=np.zeros(2), mask=np.ones(2, dtype=bool))
    Study("ok", (image,) * 11, labels)
    with pytest.raises(ValueError, match="ingestion bound"):
        Study("too-many", (image,) * 12, labels)


# ------------------------------------------------------------ view sampling

def _study_with_n_images(n: int) -> Study:
    images = tuple(
        ViewImage(
            View.FRONTAL if i % 3 else View.LATERAL,
            np.full((1, 4, 4), i / max(n - 1, 1), dtype=np.float32),
            i,
        )
        for i in range(n)
    )
    labels = LabelVector(values=np.zeros(2), mask=np.ones(2, dtype=bool))
    return Study(f"s{n}", images, labels)


def test_subsample_identity_under_cap():
    study = _study_with_n_images(2)
    assert subsample_views(study, 4, np.random.default_rng(0)) == study.images


def test_subsample_deterministic_given_seed():
    study = _study_with_n_images(6)
    first = subsample_views(study, 4, np.random.default_rng(42))
    second = subsample_views(study, 4, np.random.default_rng(42))
    assert first == second
    assert len(first) == 4


@given(n=st.integers(1, 11), cap=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_subsample_preserves_order_never_duplicates(n, cap, seed):
    study = _study_with_n_images(n)
    picked = subsample_views(study, cap, np.random.default_rng(seed))
    assert len(picked) == min(n, cap)
    indices = [img.acquisition_index for img in picked]
    assert indices == sorted(indices)
    assert len(set(indices)) == len(indices)


def test_subsample_affected_fraction_matches_configured_tail():
    # Long-count tail configured so ~0.084% of studies exceed the cap of 4.
    spec = SynthSpec(
        num_classes=2,
        prevalence=(0.3, 0.2),
        signals=("image", "image"),
        n_train=30_000,
        n_val=1,
        n_test=1,
        n_pool=1,
        resolution=8,
        image_count_probs=(0.62, 0.25, 0.09, 0.03916, 0.0006, 0.00024),
    )
    train = generate_synthetic(spec, seed=5)[Split.TRAIN]
    affected = sum(1 for s in train.studies if s.num_images > 4)
    p = 0.0006 + 0.00024
    expected = p * len(train)
    sd = (len(train) * p * (1 - p)) ** 0.5
    assert abs(affected - expected) <= 4 * sd
    rng = np_rng(0, "cap")
    for study in train.studies:
        assert len(subsample_views(study, 4, rng)) <= 4


# ------------------------------------------------------------- prevalence

def _dataset_with_positive_counts(pos: int, total: int) -> Dataset:
    image = ViewImage(View.FRONTAL, np.zeros((1, 4, 4), dtype=np.float32), 0)
    studies = tuple(
        Study(
            f"s{i}",
            (image,),
            LabelVector(values=np.array([1.0 if i < pos else 0.0]), mask=np.array([True])),
        )
        for i in range(total)
    )
    return Dataset(studies=studies, label_names=("only",), split=Split.TRAIN)


@pytest.mark.parametrize(
    "pos,total,prevalence,group",
    [(15, 100, 0.15, ClassGroup.HEAD), (5, 100, 0.05, ClassGroup.BODY), (0, 200, 0.0, ClassGroup.TAIL)],
)
def test_prevalence_thresholds(pos, total, prevalence, group):
    table = compute_prevalence(_dataset_with_positive_counts(pos, total))
    assert table.prevalence[0] == pytest.approx(prevalence)
    assert table.groups[0] is group


def test_prevalence_requires_supervision():
    image = ViewImage(View.FRONTAL, np.zeros((1, 4, 4), dtype=np.float32), 0)
    studies = (
        Study(
            "s0",
            (image,),
            LabelVector(values=np.array([1.0, 0.0]), mask=np.array([True, False])),
        ),
    )
    dataset = Dataset(studies=studies, label_names=("a", "b"), split=Split.TRAIN)
    with pytest.raises(PrevalenceError, match="'b'"):
        compute_prevalence(dataset)


def test_groups_partition_label_set(train_set):
    table = compute_prevalence(train_set)
    assert len(table.groups) == train_set.num_classes
    for group in table.groups:
        assert group in (ClassGroup.HEAD, ClassGroup.BODY, ClassGroup.TAIL)


# ------------------------------------------------------- synthetic generator

def test_generate_deterministic_for_equal_seeds():
    spec = SynthSpec(
        num_classes=8,
        prevalence=(0.2,) * 8,
        signals=("text", "text") + ("image",) * 6,
        n_train=16, n_val=4, n_test=4, n_pool=4,
        resolution=16,
    )
    a = generate_synthetic(spec, seed=3)
    b = generate_synthetic(spec, seed=3)
    for split in Split:
        for sa, sb in zip(a[split].studies, b[split].studies):
            assert sa.study_id == sb.study_id
            assert sa.indication == sb.indication
            assert sa.vitals == sb.vitals
            np.testing.assert_array_equal(sa.labels.values, sb.labels.values)
            for ia, ib in zip(sa.images, sb.images):
                np.testing.assert_array_equal(ia.pixels, ib.pixels)


def test_generate_seed_changes_data_but_not_marginals():
    spec = SynthSpec(
        num_classes=4,
        prevalence=(0.3, 0.3, 0.3, 0.3),
        signals=("image",) * 4,
        n_train=2000, n_val=1, n_test=1, n_pool=1,
        resolution=8,
    )
    a = generate_synthetic(spec, seed=1)[Split.TRAIN]
    b = generate_synthetic(spec, seed=2)[Split.TRAIN]
    assert not np.array_equal(a.studies[0].images[0].pixels, b.studies[0].images[0].pixels)
    pa = np.stack([s.labels.values for s in a.studies]).mean(axis=0)
    pb = np.stack([s.labels.values for s in b.studies]).mean(axis=0)
    assert np.abs(pa - pb).max() < 0.06  # ~4 binomial sd at n=2000, p=0.3


def test_generate_prevalence_within_tolerance():
    spec = SynthSpec(
        num_classes=4,
        prevalence=(0.10, 0.10, 0.10, 0.10),
        signals=("image",) * 4,
        n_train=2000, n_val=1, n_test=1, n_pool=1,
        resolution=8,
    )
    train = generate_synthetic(spec, seed=9)[Split.TRAIN]
    empirical = np.stack([s.labels.values for s in train.studies]).mean(axis=0)
    assert np.abs(empirical - 0.10).max() <= 0.02


def test_generate_rejects_bad_prevalence():
    with pytest.raises(ValueError, match="prevalence"):
        SynthSpec(num_classes=2, prevalence=(0.0, 0.5), signals=("image", "image"))
    with pytest.raises(ValueError, match="prevalence"):
        SynthSpec(num_classes=2, prevalence=(1.0, 0.5), signals=("image", "image"))


def test_generate_mask_semantics(mixed_splits):
    for split in (Split.TRAIN, Split.VAL, Split.TEST):
        for study in mixed_splits[split].studies:
            assert study.labels.mask.all()
    for study in mixed_splits[Split.UNLABELED_POOL].studies:
        assert not study.labels.mask.any()


def test_generate_pool_partial_labels():
    spec = SynthSpec(
        num_classes=4,
        prevalence=(0.3,) * 4,
        signals=("image",) * 4,
        n_train=4, n_val=1, n_test=1, n_pool=12,
        resolution=16,
        pool_labeled_classes=(1, 3),
    )
    pool = generate_synthetic(spec, seed=2)[Split.UNLABELED_POOL]
    for study in pool.studies:
        np.testing.assert_array_equal(study.labels.mask, [False, True, False, True])


def test_generate_plants_image_signal():
    spec = SynthSpec(
        num_classes=2,
        prevalence=(0.5, 0.5),
        signals=("image", "image"),
        n_train=400, n_val=1, n_test=1, n_pool=1,
        resolution=32,
        noise_sigma=0.01,
    )
    train = generate_synthetic(spec, seed=4)[Split.TRAIN]
    from camchex.data.synthetic import _blob_centers

    centers = _blob_centers(2, 32)
    cx, cy = int(round(centers[0, 0])), int(round(centers[0, 1]))
    with_signal, without = [], []
    for study in train.studies:
        frontals = [i for i in study.images if i.view is View.FRONTAL]
        if not frontals:
            continue
        patch = frontals[0].pixels[0, cy - 1 : cy + 2, cx - 1 : cx + 2].mean()
        (with_signal if study.labels.values[0] == 1.0 else without).append(patch)
    assert np.mean(with_signal) > np.mean(without) + 0.2


def test_generate_text_and_vitals_signals(mixed_splits):
    from tests.conftest import MIXED_SPEC

    train = mixed_splits[Split.TRAIN]
    marker5 = MIXED_SPEC.marker_word(5)
    hits = misses = 0
    for study in train.studies:
        if study.indication is None:
            continue
        if study.labels.values[5] == 1.0 and marker5 in study.indication:
            hits += 1
        if study.labels.values[5] == 0.0 and marker5 in study.indication:
            misses += 1
    assert hits > 0 and misses == 0

    # vitals class 7 shifts field 7 % 6 == 1 (heart rate) at least 2 sd
    shifted, baseline = [], []
    for study in train.studies:
        if study.vitals is None or study.vitals.heart_rate is None:
            continue
        (shifted if study.labels.values[7] == 1.0 else baseline).append(study.vitals.heart_rate)
    assert min(shifted) >= 80.0 + 2.0 * 12.0
    assert max(baseline) <= 80.0 + 1.5 * 12.0


def test_default_label_names_used_for_26_classes():
    spec = SynthSpec(
        num_classes=26,
        prevalence=(0.2,) * 26,
        signals=("image",) * 26,
        n_train=2, n_val=1, n_test=1, n_pool=1,
        resolution=16,
    )
    assert spec.resolved_label_names() == DEFAULT_LABEL_NAMES
    assert len(DEFAULT_LABEL_NAMES) == 26


def test_label_vector_validation():
    with pytest.raises(ValueError, match="hard labels"):
        LabelVector(values=np.array([0.5]), mask=np.array([True]), kind=LabelKind.HARD)
    LabelVector(values=np.array([0.5]), mask=np.array([True]), kind=LabelKind.SOFT_PSEUDO)
    with pytest.raises(ValueError):
        LabelVector(values=np.array([1.5]), mask=np.array([True]))
