"""File formats, persistence, and the synthetic oracle dataset generator.

Formats (all byte-deterministic under a fixed seed):
  - features:  one JSON object per line, fields id / modality / vector
  - pairs:     TSV rows  text_id <TAB> image_id [<TAB> label]
  - qrels:     TSV rows  query_id <TAB> doc_id <TAB> 0|1
  - model, pair head, index, report: versioned JSON with sorted keys and
    round-trip-exact floats (json uses the shortest exact decimal repr)

All writes go through a write-temp-then-rename helper so readers never see
partial files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .alignment import AlignmentModel, PairedExample, TrainConfig, linear_model
from .errors import DataError, NumericError, UsageError
from .evaluation import AP_CONVENTION, EvalReport, RelevanceJudgments
from .nn import LinearLayer, MlpParams
from .pairhead import PairHead
from .records import IMAGE, MODALITIES, TEXT, FeatureRecord
from .retrieval import UnifiedIndex, build_index

MODEL_FORMAT_VERSION = 1
INDEX_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1
PAIRHEAD_FORMAT_VERSION = 1

# The vectors this package consumes come from external encoders; recorded in
# model files so downstream users know what produced the inputs.
ENCODER_NOTES = {
    "text": "precomputed by an external language-model encoder",
    "image": "precomputed by an external CNN encoder (256x256 input convention)",
}

_SEED_MASK = (1 << 64) - 1


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------- features --

def save_features(records: Sequence[FeatureRecord], path: str | Path) -> None:
    lines = [
        _json_line({"id": r.id, "modality": r.modality, "vector": r.vector.tolist()})
        for r in records
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_features(path: str | Path) -> list[FeatureRecord]:
    """Parse a feature file; order is preserved, dims must be uniform per modality."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read feature file {path}: {exc}") from exc
    records: list[FeatureRecord] = []
    dims: dict[str, tuple[int, int]] = {}  # modality -> (dim, line where first seen)
    seen_ids: set[str] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            record = FeatureRecord(
                id=str(obj["id"]), modality=obj["modality"], vector=obj["vector"]
            )
        except (ValueError, KeyError, TypeError, DataError) as exc:
            raise DataError(f"{path}: malformed record at line {lineno}: {exc}") from exc
        if record.id in seen_ids:
            raise DataError(f"{path}: duplicate id {record.id!r} at line {lineno}")
        seen_ids.add(record.id)
        if record.modality in dims:
            dim, first_line = dims[record.modality]
            if record.dim != dim:
                raise DataError(
                    f"{path}: inconsistent {record.modality} dimension at line "
                    f"{lineno}: {dim} vs {record.dim}"
                )
        else:
            dims[record.modality] = (record.dim, lineno)
        records.append(record)
    if not records:
        raise DataError(f"{path}: feature file is empty")
    return records


# ----------------------------------------------------------- pairs / qrels --

def save_pairs(pairs: Sequence[PairedExample], path: str | Path) -> None:
    lines = []
    for p in pairs:
        row = [p.text_id, p.image_id]
        if p.label is not None:
            row.append(p.label)
        lines.append("\t".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def save_qrels(qrels: Mapping[str, set[str]], path: str | Path) -> None:
    lines = [
        f"{qid}\t{doc}\t1"
        for qid in sorted(qrels)
        for doc in sorted(qrels[qid])
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_pairs_and_qrels(
    pairs_path: str | Path,
    qrels_path: str | Path | None = None,
    known_ids: set[str] | None = None,
) -> tuple[list[PairedExample], RelevanceJudgments]:
    """Read pairs (and qrels, if present) from tab-separated files.

    Without a qrels file, each pair's partner is its sole relevant document
    in both directions.  When `known_ids` is given, any id not in it is a
    hard data error.
    """
    try:
        raw = Path(pairs_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read pairs file {pairs_path}: {exc}") from exc
    pairs: list[PairedExample] = []
    seen_rows: set[tuple[str, str]] = set()
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (2, 3):
            raise DataError(
                f"{pairs_path}: line {lineno}: expected 2 or 3 tab-separated "
                f"fields, got {len(fields)}"
            )
        text_id, image_id = fields[0], fields[1]
        label = fields[2] if len(fields) == 3 else None
        if (text_id, image_id) in seen_rows:
            raise DataError(f"{pairs_path}: line {lineno}: duplicate pair {text_id} -> {image_id}")
        seen_rows.add((text_id, image_id))
        for id_ in (text_id, image_id):
            if known_ids is not None and id_ not in known_ids:
                raise DataError(f"{pairs_path}: line {lineno}: unknown id {id_!r}")
        pairs.append(PairedExample(text_id=text_id, image_id=image_id, label=label))
    if not pairs:
        raise DataError(f"{pairs_path}: no pairs found")

    qrels: RelevanceJudgments = {}
    if qrels_path is None:
        for p in pairs:
            qrels.setdefault(p.text_id, set()).add(p.image_id)
            qrels.setdefault(p.image_id, set()).add(p.text_id)
        return pairs, qrels

    try:
        raw = Path(qrels_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read qrels file {qrels_path}: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 3 or fields[2] not in ("0", "1"):
            raise DataError(
                f"{qrels_path}: line {lineno}: expected 'query<TAB>doc<TAB>0|1'"
            )
        qid, doc, rel = fields
        for id_ in (qid, doc):
            if known_ids is not None and id_ not in known_ids:
                raise DataError(f"{qrels_path}: line {lineno}: unknown id {id_!r}")
        if rel == "1":
            qrels.setdefault(qid, set()).add(doc)
    return pairs, qrels


# -------------------------------------------------------------------- model --

def _layers_to_json(mlp: MlpParams) -> list[dict]:
    return [
        {"weight": l.weight.tolist(), "bias": l.bias.tolist()} for l in mlp.layers
    ]


def _layers_from_json(obj, where: str) -> MlpParams:
    if not isinstance(obj, list) or not obj:
        raise DataError(f"{where}: expected a nonempty list of layers")
    layers = []
    for k, entry in enumerate(obj):
        try:
            weight = np.array(entry["weight"], dtype=np.float64)
            bias = np.array(entry["bias"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where} layer {k}: malformed arrays: {exc}") from exc
        if weight.ndim != 2:
            raise DataError(f"{where} layer {k}: weight rows have ragged lengths")
        if bias.ndim != 1 or bias.size != weight.shape[0]:
            raise DataError(
                f"{where} layer {k}: bias length {bias.size} does not match "
                f"{weight.shape[0]} weight rows"
            )
        layers.append(LinearLayer(weight, bias))
    try:
        return MlpParams(layers)
    except Exception as exc:
        raise DataError(f"{where}: inconsistent layer shapes: {exc}") from exc


def save_model(
    model: AlignmentModel,
    path: str | Path,
    train_config: TrainConfig | None = None,
    seed: int | None = None,
) -> None:
    if seed is None and train_config is not None:
        seed = train_config.seed
    config_echo = None
    if train_config is not None:
        config_echo = {
            "epochs": train_config.epochs,
            "batch_size": train_config.batch_size,
            "learning_rate": train_config.learning_rate,
            "temperature": train_config.temperature,
            "hidden_dims": list(train_config.hidden_dims),
            "unified_dim": train_config.unified_dim,
            "seed": train_config.seed,
            "beta1": train_config.beta1,
            "beta2": train_config.beta2,
            "epsilon": train_config.epsilon,
        }
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "alignment_model",
        "unified_dim": model.unified_dim,
        "temperature": model.temperature,
        "text_input_dim": model.text_input_dim,
        "image_input_dim": model.image_input_dim,
        "text_head": _layers_to_json(model.text_head),
        "image_head": _layers_to_json(model.image_head),
        "train_config": config_echo,
        "seed": seed,
        "encoder_notes": ENCODER_NOTES,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def _check_version(doc: dict, expected: int, path) -> None:
    version = doc.get("format_version")
    if version != expected:
        raise DataError(f"{path}: file version {version!r} unsupported (expected {expected})")


def load_model(path: str | Path) -> AlignmentModel:
    """Reload a saved model; projections are bit-identical to the original."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    _check_version(doc, MODEL_FORMAT_VERSION, path)
    try:
        return AlignmentModel(
            text_head=_layers_from_json(doc["text_head"], "text_head"),
            image_head=_layers_from_json(doc["image_head"], "image_head"),
            unified_dim=int(doc["unified_dim"]),
            temperature=float(doc["temperature"]),
            text_input_dim=int(doc["text_input_dim"]),
            image_input_dim=int(doc["image_input_dim"]),
        )
    except KeyError as exc:
        raise DataError(f"{path}: missing field {exc}") from exc


def save_pair_head(head: PairHead, path: str | Path, seed: int | None = None) -> None:
    doc = {
        "format_version": PAIRHEAD_FORMAT_VERSION,
        "kind": "pair_head",
        "embedding_dim": head.embedding_dim,
        "mlp": _layers_to_json(head.mlp),
        "seed": seed,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_pair_head(path: str | Path) -> PairHead:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read pair head file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    _check_version(doc, PAIRHEAD_FORMAT_VERSION, path)
    return PairHead(_layers_from_json(doc.get("mlp"), "pair head"))


# -------------------------------------------------------------------- index --

def save_index(index: UnifiedIndex, path: str | Path) -> None:
    entries = [
        {"id": id_, "modality": mod, "vector": index.vectors[row].tolist()}
        for row, (id_, mod) in enumerate(zip(index.ids, index.modalities))
    ]
    doc = {
        "format_version": INDEX_FORMAT_VERSION,
        "kind": "unified_index",
        "dimension": index.dimension,
        "entries": entries,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_index(path: str | Path) -> UnifiedIndex:
    """Reload an index verbatim (no renormalization, so round-trips are exact)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read index file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    _check_version(doc, INDEX_FORMAT_VERSION, path)
    entries = doc.get("entries", [])
    if not entries:
        return UnifiedIndex(ids=(), modalities=(), vectors=np.zeros((0, 0)))
    ids, modalities, rows = [], [], []
    dim = doc.get("dimension")
    for k, entry in enumerate(entries):
        try:
            id_, mod, vec = entry["id"], entry["modality"], entry["vector"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed entry {k}: {exc}") from exc
        if mod not in MODALITIES:
            raise DataError(f"{path}: entry {id_!r}: unknown modality {mod!r}")
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size != dim:
            raise DataError(
                f"{path}: entry {id_!r}: vector dim {vec.size} does not match "
                f"declared dimension {dim}"
            )
        if abs(np.linalg.norm(vec) - 1.0) > 1e-9:
            raise NumericError(f"{path}: entry {id_!r}: stored vector is not unit-norm")
        ids.append(str(id_))
        modalities.append(mod)
        rows.append(vec)
    if ids != sorted(ids):
        raise DataError(f"{path}: entries are not in canonical (ascending id) order")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate ids in index file")
    return UnifiedIndex(ids=tuple(ids), modalities=tuple(modalities), vectors=np.stack(rows))


# ------------------------------------------------------------------- report --

def save_report(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    directions = {}
    for direction, rep in sorted(reports.items()):
        directions[direction] = {
            "map_at": {str(k): v for k, v in sorted(rep.map_at.items())},
            "ap_per_query": {
                str(k): dict(sorted(per.items()))
                for k, per in sorted(rep.ap_per_query.items())
            },
            "evaluated": rep.evaluated,
            "skipped": rep.skipped,
        }
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "kind": "retrieval_report",
        "ap_convention": AP_CONVENTION,
        "directions": directions,
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def load_report(path: str | Path) -> dict[str, EvalReport]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read report file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    _check_version(doc, REPORT_FORMAT_VERSION, path)
    reports = {}
    for direction, body in doc.get("directions", {}).items():
        reports[direction] = EvalReport(
            direction=direction,
            map_at={int(k): v for k, v in body["map_at"].items()},
            ap_per_query={
                int(k): dict(per) for k, per in body["ap_per_query"].items()
            },
            evaluated=int(body["evaluated"]),
            skipped=int(body["skipped"]),
            ap_convention=doc.get("ap_convention", AP_CONVENTION),
        )
    return reports


def format_report_table(reports: Mapping[str, EvalReport]) -> str:
    """Aligned plain-text table, one row per direction, one MAP column per k."""
    k_list = sorted({k for rep in reports.values() for k in rep.map_at})
    header = ["direction"] + [f"MAP@{k}" for k in k_list] + ["evaluated", "skipped"]
    rows = [header]
    for direction in sorted(reports):
        rep = reports[direction]
        rows.append(
            [direction]
            + [f"{rep.map_at[k]:.4f}" if k in rep.map_at else "-" for k in k_list]
            + [str(rep.evaluated), str(rep.skipped)]
        )
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = [f"# {AP_CONVENTION}"]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


# --------------------------------------------------------- synthetic oracle --

@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the clustered linear-latent generator.

    Each cluster plays the role of a subject field; items from other
    clusters act as the cross-field negatives.
    """

    clusters: int = 8
    pairs_per_cluster: int = 50
    text_dim: int = 128
    image_dim: int = 192
    latent_dim: int = 16
    noise_sigma: float = 0.1
    seed: int = 42
    same_cluster_relevant: bool = False

    def __post_init__(self):
        if self.clusters < 2:
            raise UsageError(f"need at least 2 clusters, got {self.clusters}")
        if self.pairs_per_cluster < 1:
            raise UsageError(f"pairs_per_cluster must be >= 1, got {self.pairs_per_cluster}")
        if not 1 <= self.latent_dim <= min(self.text_dim, self.image_dim):
            raise UsageError(
                f"latent_dim {self.latent_dim} must lie in 1..min(text_dim, "
                f"image_dim) = {min(self.text_dim, self.image_dim)}"
            )
        if self.noise_sigma < 0:
            raise UsageError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass
class SyntheticDataset:
    """Generated corpus plus the ground-truth maps that make it an oracle."""

    config: SyntheticConfig
    text_records: list[FeatureRecord]
    image_records: list[FeatureRecord]
    pairs: list[PairedExample]
    qrels: RelevanceJudgments
    cluster_ids: list[int]  # cluster of each pair, in pair order
    text_map: np.ndarray  # (text_dim, latent): latent -> text features
    image_map: np.ndarray  # (image_dim, latent)
    text_recovery: np.ndarray  # (latent, text_dim): pseudo-inverse, text -> latent
    image_recovery: np.ndarray  # (latent, image_dim)


def generate_synthetic(
    config: SyntheticConfig,
    text_map: np.ndarray | None = None,
    image_map: np.ndarray | None = None,
) -> SyntheticDataset:
    """Draw a clustered paired corpus with known linear structure.

    Per pair: a latent point near its cluster center, then a text view
    A_t @ z and an image view A_i @ z, each plus isotropic noise.  The
    pseudo-inverses of A_t and A_i recover the latent exactly when noise is
    zero, so an untrained exact-alignment model always exists.  Identical
    configs produce identical datasets byte for byte.

    The forward maps can be injected (tests use the identity); by default
    they are drawn from the seed.
    """
    rng = np.random.default_rng(config.seed & _SEED_MASK)
    centers = rng.normal(size=(config.clusters, config.latent_dim))
    if text_map is None:
        text_map = rng.normal(size=(config.text_dim, config.latent_dim))
    else:
        text_map = np.asarray(text_map, dtype=np.float64)
    if image_map is None:
        image_map = rng.normal(size=(config.image_dim, config.latent_dim))
    else:
        image_map = np.asarray(image_map, dtype=np.float64)
    for name, mat, rows in (
        ("text_map", text_map, config.text_dim),
        ("image_map", image_map, config.image_dim),
    ):
        if mat.shape != (rows, config.latent_dim):
            raise UsageError(
                f"{name} must have shape ({rows}, {config.latent_dim}), got {mat.shape}"
            )
        if np.linalg.matrix_rank(mat) < config.latent_dim:
            raise NumericError(f"{name} is rank-deficient; latent recovery impossible")

    total = config.clusters * config.pairs_per_cluster
    width = max(4, len(str(total - 1)))
    text_records, image_records, pairs, cluster_ids = [], [], [], []
    qrels: RelevanceJudgments = {}
    cluster_members: dict[int, list[int]] = {}
    for k in range(total):
        cluster = k // config.pairs_per_cluster
        z = centers[cluster] + config.noise_sigma * rng.standard_normal(config.latent_dim)
        text_vec = text_map @ z + config.noise_sigma * rng.standard_normal(config.text_dim)
        image_vec = image_map @ z + config.noise_sigma * rng.standard_normal(config.image_dim)
        tid, iid = f"t{k:0{width}d}", f"i{k:0{width}d}"
        text_records.append(FeatureRecord(id=tid, modality=TEXT, vector=text_vec))
        image_records.append(FeatureRecord(id=iid, modality=IMAGE, vector=image_vec))
        pairs.append(PairedExample(text_id=tid, image_id=iid))
        cluster_ids.append(cluster)
        cluster_members.setdefault(cluster, []).append(k)

    for k, pair in enumerate(pairs):
        if config.same_cluster_relevant:
            members = cluster_members[cluster_ids[k]]
            qrels[pair.text_id] = {pairs[j].image_id for j in members}
            qrels[pair.image_id] = {pairs[j].text_id for j in members}
        else:
            qrels[pair.text_id] = {pair.image_id}
            qrels[pair.image_id] = {pair.text_id}

    return SyntheticDataset(
        config=config,
        text_records=text_records,
        image_records=image_records,
        pairs=pairs,
        qrels=qrels,
        cluster_ids=cluster_ids,
        text_map=text_map,
        image_map=image_map,
        text_recovery=np.linalg.pinv(text_map),
        image_recovery=np.linalg.pinv(image_map),
    )


def oracle_model(dataset: SyntheticDataset, temperature: float = 0.07) -> AlignmentModel:
    """Exact-alignment model built from the generator's recovery maps."""
    return linear_model(dataset.text_recovery, dataset.image_recovery, temperature)


def unified_records(model: AlignmentModel, records: Sequence[FeatureRecord]) -> list[FeatureRecord]:
    """Project raw feature records through the matching head of the model."""
    from .alignment import project

    out = []
    for r in records:
        head = model.head_for(r.modality)
        if r.dim != head.input_dim:
            raise DataError(
                f"record {r.id!r}: {r.modality} vector has dim {r.dim}, model "
                f"expects {head.input_dim}"
            )
        vec = project(head, r.vector[None, :], ids=[r.id])[0]
        out.append(FeatureRecord(id=r.id, modality=r.modality, vector=vec))
    return out


def build_index_from_records(records: Sequence[FeatureRecord]) -> UnifiedIndex:
    return build_index(records)
