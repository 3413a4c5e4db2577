"""Exact cosine-similarity search over an immutable index of unified vectors.

No approximate structures: every query scans all entries of the requested
modality, sorts by score (ties broken by ascending id), and returns the
top-k.  That keeps evaluation honest at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentModel, project
from .errors import DataError, DimensionError, NumericError, UsageError
from .records import IMAGE, MODALITIES, TEXT, FeatureRecord

TXT2IMG = "txt2img"
IMG2TXT = "img2txt"
DIRECTIONS = (TXT2IMG, IMG2TXT)

# direction -> (query modality, result modality)
_DIRECTION_SIDES = {TXT2IMG: (TEXT, IMAGE), IMG2TXT: (IMAGE, TEXT)}


def l2_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NumericError("cannot normalize the zero vector (cosine undefined)")
    return v / norm


def cosine_sim(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine similarity sum(x_i*y_i) / sqrt((x.x)*(y.y)), clamped to [-1, 1].

    The denominator is one sqrt of the norm-squared product, so rational
    cases like ([1,2], [2,1]) -> 0.8 and self-similarity -> 1.0 come out
    exact instead of off by a final-bit rounding of ||x||*||y||.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"vector dims differ: {x.shape} vs {y.shape}")
    xx = float(np.sum(x * x))
    yy = float(np.sum(y * y))
    if xx == 0.0 or yy == 0.0:
        raise NumericError("cosine similarity undefined for the zero vector")
    return float(np.clip(np.sum(x * y) / np.sqrt(xx * yy), -1.0, 1.0))


@dataclass(frozen=True)
class RetrievalResult:
    id: str
    score: float
    rank: int


@dataclass(frozen=True)
class UnifiedIndex:
    """Unit-norm vectors in canonical (ascending id) order; immutable."""

    ids: tuple[str, ...]
    modalities: tuple[str, ...]
    vectors: np.ndarray  # shape (len(ids), dimension), rows unit-norm

    def __post_init__(self):
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int | None:
        return None if len(self.ids) == 0 else self.vectors.shape[1]


def build_index(items) -> UnifiedIndex:
    """Normalize, sort by id, and freeze a list of (id, modality, vector).

    Input order never matters: the same item set always produces the same
    index, so serialization is deterministic.
    """
    triples = []
    for item in items:
        if isinstance(item, FeatureRecord):
            triples.append((item.id, item.modality, item.vector))
        else:
            triples.append(tuple(item))
    seen: set[str] = set()
    dim = None
    for id_, modality, vec in triples:
        if id_ in seen:
            raise DataError(f"duplicate id {id_!r} in index input")
        seen.add(id_)
        if modality not in MODALITIES:
            raise DataError(f"entry {id_!r}: unknown modality {modality!r}")
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1:
            raise DimensionError(f"entry {id_!r}: vector must be 1-D, got shape {vec.shape}")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise DimensionError(
                f"entry {id_!r}: vector dim {vec.size} differs from index dim {dim}"
            )
    triples.sort(key=lambda t: t[0])
    if not triples:
        return UnifiedIndex(ids=(), modalities=(), vectors=np.zeros((0, 0)))
    vectors = np.empty((len(triples), dim))
    for row, (id_, _, vec) in enumerate(triples):
        v = np.asarray(vec, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise NumericError(f"entry {id_!r} is the zero vector; cannot index")
        vectors[row] = v / norm
    return UnifiedIndex(
        ids=tuple(t[0] for t in triples),
        modalities=tuple(t[1] for t in triples),
        vectors=vectors,
    )


def query_topk(
    index: UnifiedIndex, q: np.ndarray, k: int, filter_modality: str
) -> list[RetrievalResult]:
    """Exact top-k among entries of one modality, ties broken by ascending id."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if filter_modality not in MODALITIES:
        raise UsageError(f"unknown modality filter {filter_modality!r}")
    if len(index) == 0:
        return []
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionError(
            f"query dim {q.shape} does not match index dim ({index.dimension},)"
        )
    q = l2_normalize(q)
    rows = [i for i, m in enumerate(index.modalities) if m == filter_modality]
    if not rows:
        return []
    # one dot per candidate, not a matvec: BLAS reorders accumulation, and
    # ranking exactness is checked against a per-row reference
    scores = np.clip([float(np.dot(index.vectors[i], q)) for i in rows], -1.0, 1.0)
    order = sorted(range(len(rows)), key=lambda i: (-scores[i], index.ids[rows[i]]))
    return [
        RetrievalResult(id=index.ids[rows[i]], score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order[:k], start=1)
    ]


def cross_media_search(
    model: AlignmentModel,
    index: UnifiedIndex,
    query: FeatureRecord,
    k: int,
    direction: str,
) -> list[RetrievalResult]:
    """Project a raw query through the matching head and search the other modality."""
    if direction not in DIRECTIONS:
        raise UsageError(f"unknown direction {direction!r}; expected one of {DIRECTIONS}")
    source, target = _DIRECTION_SIDES[direction]
    if query.modality != source:
        raise UsageError(
            f"direction {direction} takes a {source} query, got modality "
            f"{query.modality!r} (id {query.id!r})"
        )
    unified = project(model.head_for(source), query.vector[None, :], ids=[query.id])[0]
    return query_topk(index, unified, k, filter_modality=target)
