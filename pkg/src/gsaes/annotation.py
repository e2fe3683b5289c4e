"""View-level aesthetic annotations and their scene-level aggregation.

External annotators emit one record per rendered view: an overall score and
eight attribute sub-scores, all on a 0-100 scale.  Scene labels are the mean
over views, normalized to [0, 1], in two variants: the overall score
("total") and the mean of the eight attributes ("attr8").  This module also
computes the dataset statistics used to sanity-check a corpus: within-scene
score gaps, inter-attribute correlations, and total-vs-attr8 consistency.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .metrics import pearson, spearman

ATTRIBUTES = (
    "composition",
    "visual_elements",
    "technical",
    "originality",
    "theme",
    "emotion",
    "gestalt",
    "comprehensive",
)

PROMPT_TEMPLATE = (
    "Rate the aesthetic quality of this image from the aspect of "
    "{attr_name} on a 0–100 scale. Output only one number."
)

CSV_COLUMNS = ("scene_id", "view_id", "total") + ATTRIBUTES


class AnnotationError(ValueError):
    pass


@dataclass
class ViewLevelAnnotation:
    """One annotated view: overall score plus the eight attribute sub-scores,
    all in [0, 100].  ``text`` keeps any free-form evaluation verbatim."""

    scene_id: str
    view_id: str
    total: float
    attributes: dict[str, float]
    text: str | None = None

    def __post_init__(self):
        missing = [a for a in ATTRIBUTES if a not in self.attributes]
        if missing:
            raise AnnotationError(
                f"view {self.view_id!r}: missing attributes {missing}"
            )
        extra = [a for a in self.attributes if a not in ATTRIBUTES]
        if extra:
            raise AnnotationError(f"view {self.view_id!r}: unknown attributes {extra}")
        for name, value in [("total", self.total)] + list(self.attributes.items()):
            if not (0.0 <= value <= 100.0):
                raise AnnotationError(
                    f"view {self.view_id!r}: score {name}={value} outside [0, 100]"
                )

    def attr_mean(self):
        return float(np.mean([self.attributes[a] for a in ATTRIBUTES]))


@dataclass
class SceneLabel:
    """Scene-level supervision in [0, 1] with its variant and provenance."""

    scene_id: str
    value: float
    variant: str
    view_count: int

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise AnnotationError(
                f"scene {self.scene_id!r}: label {self.value} outside [0, 1]"
            )
        if self.view_count < 1:
            raise AnnotationError(f"scene {self.scene_id!r}: view_count < 1")
        if self.variant not in ("total", "attr8"):
            raise AnnotationError(f"unknown label variant {self.variant!r}")


def build_attribute_prompt(attr_name):
    """The exact attribute-scoring prompt string for one canonical attribute."""
    if attr_name not in ATTRIBUTES:
        raise AnnotationError(f"unknown attribute {attr_name!r}")
    return PROMPT_TEMPLATE.format(attr_name=attr_name)


def aggregate_scene_score(views, variant="attr8"):
    """Average view-level scores into one scene label, normalized to [0, 1].

    ``total`` averages the overall scores; ``attr8`` averages the per-view
    mean of the eight attribute scores.  Aggregation is permutation-invariant
    over views.
    """
    views = list(views)
    if not views:
        raise AnnotationError("aggregate_scene_score: no views")
    scene_ids = {v.scene_id for v in views}
    if len(scene_ids) != 1:
        raise AnnotationError(f"views span multiple scenes: {sorted(scene_ids)}")
    if variant == "total":
        raw = np.mean([v.total for v in views])
    elif variant == "attr8":
        raw = np.mean([v.attr_mean() for v in views])
    else:
        raise AnnotationError(f"unknown label variant {variant!r}")
    return SceneLabel(
        scene_id=views[0].scene_id,
        value=float(raw) / 100.0,
        variant=variant,
        view_count=len(views),
    )


@dataclass
class GapStats:
    """Distribution of within-scene view score gaps (max - min, on [0, 1])."""

    mean: float
    median: float
    p90: float
    max: float
    frac_above_020: float
    frac_above_030: float

    def as_dict(self):
        return {
            "mean": self.mean,
            "median": self.median,
            "p90": self.p90,
            "max": self.max,
            "frac_above_020": self.frac_above_020,
            "frac_above_030": self.frac_above_030,
        }


def score_gap_stats(per_scene_scores):
    """Summarize per-scene gaps between the best and worst view scores.

    ``per_scene_scores`` maps scene_id to a sequence of normalized [0, 1]
    view-level scores.  The p90 uses the nearest-rank convention (value at
    rank ceil(0.9 n) of the sorted gaps); threshold fractions use a strict
    comparison.
    """
    gaps = []
    for scene_id, scores in per_scene_scores.items():
        scores = np.asarray(list(scores), dtype=np.float64)
        if scores.size == 0:
            raise AnnotationError(f"scene {scene_id!r} has no view scores")
        gaps.append(float(scores.max() - scores.min()))
    gaps = np.sort(np.asarray(gaps))
    n = len(gaps)
    p90 = float(gaps[min(max(int(np.ceil(0.9 * n)), 1), n) - 1])
    return GapStats(
        mean=float(gaps.mean()),
        median=float(np.median(gaps)),
        p90=p90,
        max=float(gaps.max()),
        frac_above_020=float(np.mean(gaps > 0.20)),
        frac_above_030=float(np.mean(gaps > 0.30)),
    )


def attribute_correlations(matrix):
    """Pearson and Spearman matrices over scene-level attribute columns.

    ``matrix`` is (n_scenes, 8).  Returns ``(pearson_8x8, spearman_8x8,
    degenerate_columns)``; zero-variance columns keep a unit diagonal but are
    zeroed off-diagonal and flagged.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(ATTRIBUTES):
        raise AnnotationError(
            f"attribute matrix must be (n, {len(ATTRIBUTES)}), got {matrix.shape}"
        )
    if matrix.shape[0] < 3:
        raise AnnotationError("attribute_correlations: need at least 3 scenes")
    k = matrix.shape[1]
    degenerate = np.array([np.std(matrix[:, j]) == 0.0 for j in range(k)])
    pearson_m = np.eye(k)
    spearman_m = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            if degenerate[i] or degenerate[j]:
                continue
            pearson_m[i, j] = pearson_m[j, i] = pearson(matrix[:, i], matrix[:, j])
            spearman_m[i, j] = spearman_m[j, i] = spearman(matrix[:, i], matrix[:, j])
    return pearson_m, spearman_m, degenerate


def label_consistency(total_labels, attr8_labels):
    """Pearson and Spearman correlation between the two label variants."""
    total_labels = np.asarray(total_labels, dtype=np.float64)
    attr8_labels = np.asarray(attr8_labels, dtype=np.float64)
    if total_labels.shape != attr8_labels.shape:
        raise AnnotationError("label vectors must cover the same scenes")
    return pearson(total_labels, attr8_labels), spearman(total_labels, attr8_labels)


@dataclass
class RowError:
    line: int
    message: str


def read_annotation_csv(source):
    """Parse an annotation CSV, collecting malformed rows instead of raising.

    The header must be ``scene_id,view_id,total,<8 attributes>[,text]``.
    Rows with the wrong arity, non-numeric scores, out-of-range values, or
    missing attributes are rejected and reported with their line numbers.
    Returns ``(views, errors)``.
    """
    if hasattr(source, "read"):
        fh = source
        close = False
    else:
        fh = open(source, "r", encoding="utf-8", newline="")
        close = True
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationError("annotation CSV is empty") from None
        base = tuple(h.strip() for h in header[: len(CSV_COLUMNS)])
        has_text = len(header) == len(CSV_COLUMNS) + 1 and header[-1].strip() == "text"
        if base != CSV_COLUMNS or (len(header) != len(CSV_COLUMNS) and not has_text):
            raise AnnotationError(
                f"unexpected CSV header {header!r}; expected {list(CSV_COLUMNS)}[,text]"
            )
        views = []
        errors = []
        expected = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != expected:
                errors.append(
                    RowError(lineno, f"expected {expected} columns, got {len(row)}")
                )
                continue
            try:
                scores = [float(v) for v in row[2 : 2 + 1 + len(ATTRIBUTES)]]
            except ValueError as exc:
                errors.append(RowError(lineno, f"non-numeric score: {exc}"))
                continue
            try:
                views.append(
                    ViewLevelAnnotation(
                        scene_id=row[0],
                        view_id=row[1],
                        total=scores[0],
                        attributes=dict(zip(ATTRIBUTES, scores[1:])),
                        text=row[-1] if has_text else None,
                    )
                )
            except AnnotationError as exc:
                errors.append(RowError(lineno, str(exc)))
        return views, errors
    finally:
        if close:
            fh.close()


def group_by_scene(views):
    grouped: dict[str, list[ViewLevelAnnotation]] = {}
    for view in views:
        grouped.setdefault(view.scene_id, []).append(view)
    return grouped


def build_labels(views):
    """Scene label map ``{scene_id: {total, attr8, view_count}}`` from views."""
    labels = {}
    for scene_id, scene_views in sorted(group_by_scene(views).items()):
        total = aggregate_scene_score(scene_views, "total")
        attr8 = aggregate_scene_score(scene_views, "attr8")
        labels[scene_id] = {
            "total": total.value,
            "attr8": attr8.value,
            "view_count": total.view_count,
        }
    return labels


def dataset_statistics(views, variant="attr8"):
    """Full statistics block for an annotated corpus.

    Covers scene/view counts, the label distribution, within-scene score
    gaps, the 8x8 attribute correlation matrices, and total-vs-attr8
    consistency.  The attribute matrix holds scene-level attribute means
    normalized to [0, 1].
    """
    grouped = group_by_scene(views)
    if not grouped:
        raise AnnotationError("dataset_statistics: no views")
    scene_ids = sorted(grouped)

    def view_score(view):
        return (view.attr_mean() if variant == "attr8" else view.total) / 100.0

    per_scene_scores = {
        sid: [view_score(v) for v in grouped[sid]] for sid in scene_ids
    }
    labels = np.array(
        [float(np.mean(per_scene_scores[sid])) for sid in scene_ids]
    )
    attr_matrix = np.array(
        [
            [
                np.mean([v.attributes[a] for v in grouped[sid]]) / 100.0
                for a in ATTRIBUTES
            ]
            for sid in scene_ids
        ]
    )
    total_labels = np.array(
        [np.mean([v.total for v in grouped[sid]]) / 100.0 for sid in scene_ids]
    )
    attr8_labels = np.array(
        [np.mean([v.attr_mean() for v in grouped[sid]]) / 100.0 for sid in scene_ids]
    )

    stats = {
        "variant": variant,
        "scene_count": len(scene_ids),
        "view_count": sum(len(grouped[sid]) for sid in scene_ids),
        "label_mean": float(labels.mean()),
        "label_median": float(np.median(labels)),
        "label_std": float(labels.std()),
        "label_min": float(labels.min()),
        "label_max": float(labels.max()),
        "gaps": score_gap_stats(per_scene_scores).as_dict(),
    }
    if len(scene_ids) >= 3:
        pearson_m, spearman_m, degenerate = attribute_correlations(attr_matrix)
        consistency = label_consistency(total_labels, attr8_labels)
        stats["attribute_pearson"] = pearson_m.tolist()
        stats["attribute_spearman"] = spearman_m.tolist()
        stats["degenerate_attributes"] = [bool(d) for d in degenerate]
        stats["total_vs_attr8"] = {
            "pearson": consistency[0],
            "spearman": consistency[1],
        }
    return stats
