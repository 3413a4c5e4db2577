import json

import numpy as np
import pytest

from cardl.alignment import PairedExample, TrainConfig, fit, project
from cardl.dataio import (
    SyntheticConfig,
    build_index_from_records,
    format_report_table,
    generate_synthetic,
    load_features,
    load_index,
    load_model,
    load_pair_head,
    load_pairs_and_qrels,
    load_report,
    oracle_model,
    save_features,
    save_index,
    save_model,
    save_pair_head,
    save_pairs,
    save_qrels,
    save_report,
    unified_records,
)
from cardl.errors import DataError, NumericError, UsageError
from cardl.evaluation import AP_CONVENTION, EvalReport
from cardl.pairhead import PairExample, fit_pair_head, predict_pair
from cardl.records import FeatureRecord
from cardl.retrieval import build_index


def small_records(seed=0):
    rng = np.random.default_rng(seed)
    texts = [FeatureRecord(f"t{k}", "text", rng.normal(size=5)) for k in range(4)]
    images = [FeatureRecord(f"i{k}", "image", rng.normal(size=3)) for k in range(4)]
    return texts, images


# ---------------------------------------------------------------- features --

def test_features_round_trip_bitwise(tmp_path):
    texts, images = small_records()
    path = tmp_path / "f.jsonl"
    save_features(texts + images, path)
    back = load_features(path)
    assert [r.id for r in back] == [r.id for r in texts + images]
    for a, b in zip(texts + images, back):
        assert a.modality == b.modality
        assert np.array_equal(a.vector, b.vector)  # repr round-trip is exact


def test_features_line_format(tmp_path):
    path = tmp_path / "f.jsonl"
    save_features([FeatureRecord("a", "text", np.array([1.5, -2.0]))], path)
    line = path.read_text().strip()
    assert json.loads(line) == {"id": "a", "modality": "text", "vector": [1.5, -2.0]}


def test_features_duplicate_id_names_line(tmp_path):
    path = tmp_path / "f.jsonl"
    rows = [
        {"id": "a", "modality": "text", "vector": [1.0]},
        {"id": "a", "modality": "text", "vector": [2.0]},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    with pytest.raises(DataError, match="line 2"):
        load_features(path)


def test_features_inconsistent_dim_names_line(tmp_path):
    path = tmp_path / "f.jsonl"
    rows = [
        {"id": "a", "modality": "text", "vector": [1.0, 2.0]},
        {"id": "b", "modality": "image", "vector": [1.0]},
        {"id": "c", "modality": "text", "vector": [1.0, 2.0, 3.0]},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    with pytest.raises(DataError, match="line 3"):
        load_features(path)


def test_features_malformed_json_and_missing_keys(tmp_path):
    path = tmp_path / "f.jsonl"
    path.write_text('{"id": "a"\n')
    with pytest.raises(DataError, match="line 1"):
        load_features(path)
    path.write_text('{"id": "a", "modality": "text"}\n')
    with pytest.raises(DataError):
        load_features(path)
    path.write_text('{"id": "a", "modality": "hologram", "vector": [1.0]}\n')
    with pytest.raises(DataError):
        load_features(path)
    path.write_text('{"id": "a", "modality": "text", "vector": [1.0, null]}\n')
    with pytest.raises(DataError):
        load_features(path)


def test_features_empty_file_rejected(tmp_path):
    path = tmp_path / "f.jsonl"
    path.write_text("\n\n")
    with pytest.raises(DataError, match="empty"):
        load_features(path)


def test_features_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_features(tmp_path / "nope.jsonl")


# ------------------------------------------------------------ pairs, qrels --

def test_pairs_round_trip_with_labels(tmp_path):
    pairs = [
        PairedExample("t0", "i0"),
        PairedExample("t1", "i1", label="optics"),
    ]
    path = tmp_path / "p.tsv"
    save_pairs(pairs, path)
    back, _ = load_pairs_and_qrels(path)
    assert [(p.text_id, p.image_id, p.label) for p in back] == [
        ("t0", "i0", None),
        ("t1", "i1", "optics"),
    ]


def test_pairs_derive_partner_qrels(tmp_path):
    path = tmp_path / "p.tsv"
    save_pairs([PairedExample("t0", "i0"), PairedExample("t1", "i1")], path)
    _, qrels = load_pairs_and_qrels(path)
    assert qrels == {"t0": {"i0"}, "i0": {"t0"}, "t1": {"i1"}, "i1": {"t1"}}


def test_qrels_file_overrides_and_drops_zero_rows(tmp_path):
    ppath = tmp_path / "p.tsv"
    qpath = tmp_path / "q.tsv"
    save_pairs([PairedExample("t0", "i0"), PairedExample("t1", "i1")], ppath)
    qpath.write_text("t0\ti0\t1\nt0\ti1\t1\nt1\ti1\t0\n")
    _, qrels = load_pairs_and_qrels(ppath, qpath)
    assert qrels == {"t0": {"i0", "i1"}}  # the rel=0 row contributes nothing


def test_pairs_duplicate_row_rejected(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("t0\ti0\nt0\ti0\n")
    with pytest.raises(DataError, match="line 2"):
        load_pairs_and_qrels(path)


def test_pairs_unknown_id_rejected_with_known_ids(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("t0\ti0\nt1\ti9\n")
    with pytest.raises(DataError, match="i9"):
        load_pairs_and_qrels(path, known_ids={"t0", "i0", "t1"})


def test_pairs_malformed_field_count(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("t0\n")
    with pytest.raises(DataError):
        load_pairs_and_qrels(path)


def test_qrels_bad_relevance_flag(tmp_path):
    ppath = tmp_path / "p.tsv"
    qpath = tmp_path / "q.tsv"
    save_pairs([PairedExample("t0", "i0")], ppath)
    qpath.write_text("t0\ti0\tmaybe\n")
    with pytest.raises(DataError):
        load_pairs_and_qrels(ppath, qpath)


def test_save_qrels_round_trip(tmp_path):
    qrels = {"t1": {"i2", "i0"}, "t0": {"i1"}}
    qpath = tmp_path / "q.tsv"
    ppath = tmp_path / "p.tsv"
    save_qrels(qrels, qpath)
    assert qpath.read_text() == "t0\ti1\t1\nt1\ti0\t1\nt1\ti2\t1\n"
    save_pairs([PairedExample("t0", "i1"), PairedExample("t1", "i0")], ppath)
    _, back = load_pairs_and_qrels(ppath, qpath, known_ids={"t0", "t1", "i0", "i1", "i2"})
    assert back == {"t0": {"i1"}, "t1": {"i0", "i2"}}


# ------------------------------------------------------------------- model --

def test_model_round_trip_projections_bitwise(tmp_path):
    texts, images = small_records()
    pairs = [PairedExample(f"t{k}", f"i{k}") for k in range(4)]
    cfg = TrainConfig(epochs=2, batch_size=2, hidden_dims=(8,), unified_dim=3, seed=5)
    model, _ = fit(texts, images, pairs, cfg)
    path = tmp_path / "m.json"
    save_model(model, path, train_config=cfg)
    back = load_model(path)
    assert back.unified_dim == model.unified_dim
    assert back.temperature == model.temperature
    x = np.stack([r.vector for r in texts])
    assert np.array_equal(project(model.text_head, x), project(back.text_head, x))


def test_model_save_is_deterministic(tmp_path):
    texts, images = small_records()
    pairs = [PairedExample(f"t{k}", f"i{k}") for k in range(4)]
    cfg = TrainConfig(epochs=1, batch_size=2, hidden_dims=(4,), unified_dim=2, seed=1)
    model, _ = fit(texts, images, pairs, cfg)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_model(model, p1, train_config=cfg)
    save_model(model, p2, train_config=cfg)
    assert p1.read_bytes() == p2.read_bytes()


def test_model_version_mismatch_names_both(tmp_path):
    texts, images = small_records()
    pairs = [PairedExample(f"t{k}", f"i{k}") for k in range(4)]
    model, _ = fit(texts, images, pairs, TrainConfig(epochs=0, hidden_dims=(4,), unified_dim=2))
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="99"):
        load_model(path)


def test_model_corrupt_layer_is_a_data_error(tmp_path):
    texts, images = small_records()
    pairs = [PairedExample(f"t{k}", f"i{k}") for k in range(4)]
    model, _ = fit(texts, images, pairs, TrainConfig(epochs=0, hidden_dims=(4,), unified_dim=2))
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    doc["text_head"][0]["weight"] = "garbage"
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="text_head"):
        load_model(path)


# --------------------------------------------------------------- pair head --

def test_pair_head_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    examples = []
    for _ in range(20):
        x = rng.normal(size=4)
        examples.append(PairExample(x, x.copy(), relevant=True))
        examples.append(PairExample(x, rng.normal(size=4), relevant=False))
    head = fit_pair_head(examples, TrainConfig(epochs=10, batch_size=8, seed=0))
    path = tmp_path / "h.json"
    save_pair_head(head, path, seed=0)
    back = load_pair_head(path)
    assert back.embedding_dim == head.embedding_dim
    x, y = rng.normal(size=4), rng.normal(size=4)
    assert predict_pair(back, x, y) == predict_pair(head, x, y)


# ------------------------------------------------------------------- index --

def test_index_round_trip_byte_exact(tmp_path):
    rng = np.random.default_rng(1)
    items = [(f"v{k}", "text" if k % 2 else "image", rng.normal(size=4)) for k in range(6)]
    index = build_index(items)
    p1, p2 = tmp_path / "i1.json", tmp_path / "i2.json"
    save_index(index, p1)
    back = load_index(p1)
    assert back.ids == index.ids
    assert back.modalities == index.modalities
    assert np.array_equal(back.vectors, index.vectors)
    save_index(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_index_load_rejects_non_unit_rows(tmp_path):
    index = build_index([("a", "text", np.array([1.0, 0.0]))])
    path = tmp_path / "i.json"
    save_index(index, path)
    doc = json.loads(path.read_text())
    doc["entries"][0]["vector"] = [2.0, 0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(NumericError, match="unit-norm"):
        load_index(path)


def test_index_load_rejects_unsorted_entries(tmp_path):
    index = build_index(
        [("a", "text", np.array([1.0, 0.0])), ("b", "image", np.array([0.0, 1.0]))]
    )
    path = tmp_path / "i.json"
    save_index(index, path)
    doc = json.loads(path.read_text())
    doc["entries"].reverse()
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="canonical"):
        load_index(path)


def test_empty_index_round_trip(tmp_path):
    path = tmp_path / "i.json"
    save_index(build_index([]), path)
    back = load_index(path)
    assert len(back) == 0


# ------------------------------------------------------------------ report --

def make_report(direction="txt2img"):
    return EvalReport(
        direction=direction,
        map_at={1: 0.5, 10: 0.75},
        ap_per_query={1: {"q1": 0.5, "q0": 0.5}, 10: {"q1": 1.0, "q0": 0.5}},
        evaluated=2,
        skipped=1,
    )


def test_report_round_trip(tmp_path):
    reports = {"txt2img": make_report(), "img2txt": make_report("img2txt")}
    path = tmp_path / "r.json"
    save_report(reports, path)
    back = load_report(path)
    assert set(back) == {"txt2img", "img2txt"}
    assert back["txt2img"].map_at == {1: 0.5, 10: 0.75}
    assert back["txt2img"].ap_per_query[10] == {"q0": 0.5, "q1": 1.0}
    assert back["txt2img"].evaluated == 2
    assert back["txt2img"].skipped == 1
    assert back["txt2img"].ap_convention == AP_CONVENTION


def test_report_table_shape():
    text = format_report_table({"txt2img": make_report(), "img2txt": make_report("img2txt")})
    lines = text.strip().splitlines()
    assert lines[0] == f"# {AP_CONVENTION}"
    assert lines[1].split() == ["direction", "MAP@1", "MAP@10", "evaluated", "skipped"]
    # directions come out sorted
    assert lines[2].startswith("img2txt")
    assert lines[3].startswith("txt2img")
    assert "0.5000" in lines[2] and "0.7500" in lines[2]


# --------------------------------------------------------------- synthetic --

def test_synthetic_config_validation():
    with pytest.raises(UsageError):
        SyntheticConfig(clusters=1)
    with pytest.raises(UsageError):
        SyntheticConfig(pairs_per_cluster=0)
    with pytest.raises(UsageError):
        SyntheticConfig(latent_dim=0)
    with pytest.raises(UsageError):
        SyntheticConfig(latent_dim=200, text_dim=128, image_dim=192)
    with pytest.raises(UsageError):
        SyntheticConfig(noise_sigma=-0.1)


def test_synthetic_deterministic_and_shaped():
    cfg = SyntheticConfig(clusters=3, pairs_per_cluster=4, text_dim=10, image_dim=12, latent_dim=5, seed=9)
    a = generate_synthetic(cfg)
    b = generate_synthetic(cfg)
    assert len(a.pairs) == 12
    assert [r.id for r in a.text_records] == [f"t{k:04d}" for k in range(12)]
    assert [r.id for r in a.image_records] == [f"i{k:04d}" for k in range(12)]
    assert a.text_records[0].dim == 10
    assert a.image_records[0].dim == 12
    assert a.cluster_ids == [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
    for ra, rb in zip(a.text_records, b.text_records):
        assert np.array_equal(ra.vector, rb.vector)
    assert np.array_equal(a.text_map, b.text_map)
    c = generate_synthetic(SyntheticConfig(clusters=3, pairs_per_cluster=4, text_dim=10, image_dim=12, latent_dim=5, seed=10))
    assert not np.array_equal(a.text_records[0].vector, c.text_records[0].vector)


def test_synthetic_qrels_partner_only_by_default():
    ds = generate_synthetic(SyntheticConfig(clusters=2, pairs_per_cluster=3, text_dim=6, image_dim=6, latent_dim=2))
    assert ds.qrels["t0000"] == {"i0000"}
    assert ds.qrels["i0004"] == {"t0004"}


def test_synthetic_same_cluster_relevance():
    ds = generate_synthetic(
        SyntheticConfig(clusters=2, pairs_per_cluster=3, text_dim=6, image_dim=6, latent_dim=2, same_cluster_relevant=True)
    )
    assert ds.qrels["t0000"] == {"i0000", "i0001", "i0002"}
    assert ds.qrels["i0005"] == {"t0003", "t0004", "t0005"}


def test_synthetic_noise_free_recovery_is_exact():
    cfg = SyntheticConfig(clusters=2, pairs_per_cluster=2, text_dim=8, image_dim=9, latent_dim=3, noise_sigma=0.0, seed=1)
    ds = generate_synthetic(cfg)
    # with zero noise, recovery maps invert the forward maps on every item
    t = ds.text_records[0].vector
    i = ds.image_records[0].vector
    z_t = ds.text_recovery @ t
    z_i = ds.image_recovery @ i
    assert np.max(np.abs(z_t - z_i)) < 1e-9


def test_synthetic_injectable_maps_and_rank_check():
    cfg = SyntheticConfig(clusters=2, pairs_per_cluster=2, text_dim=3, image_dim=3, latent_dim=3)
    ds = generate_synthetic(cfg, text_map=np.eye(3), image_map=np.eye(3))
    assert np.array_equal(ds.text_map, np.eye(3))
    with pytest.raises(NumericError, match="rank"):
        generate_synthetic(cfg, text_map=np.zeros((3, 3)))
    with pytest.raises(UsageError):
        generate_synthetic(cfg, text_map=np.eye(4))


def test_oracle_model_ranks_partner_first():
    cfg = SyntheticConfig(clusters=3, pairs_per_cluster=5, text_dim=12, image_dim=14, latent_dim=4, noise_sigma=0.05, seed=2)
    ds = generate_synthetic(cfg)
    model = oracle_model(ds)
    index = build_index_from_records(
        unified_records(model, ds.text_records + ds.image_records)
    )
    from cardl.retrieval import cross_media_search

    hits = sum(
        cross_media_search(model, index, rec, 1, "txt2img")[0].id == pair.image_id
        for rec, pair in zip(ds.text_records, ds.pairs)
    )
    assert hits >= 14  # near-perfect top-1 under mild noise


def test_unified_records_dim_check():
    model = oracle_model(generate_synthetic(SyntheticConfig(clusters=2, pairs_per_cluster=2, text_dim=6, image_dim=7, latent_dim=2)))
    with pytest.raises(DataError, match="wrong"):
        unified_records(model, [FeatureRecord("wrong", "text", np.ones(9))])
