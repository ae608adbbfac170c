"""Detection evaluation: IoU, greedy matching, per-class AP, mAP.

Follows the PASCAL VOC protocol: detections are ranked by confidence per
class over the whole dataset, matched greedily against at most one ground
truth each (IoU >= 0.5 by default), and AP is the area under the resulting
precision-recall curve with all-points interpolation. An 11-point mode and a
strict (>) IoU boundary are available as flags.
"""

from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .core.types import BoundingBox, Detection, LogoClass, classes_by_name
from .errors import LogomineError, ManifestError

Truth = tuple[int, BoundingBox]


def kernel_backend() -> str:
    """Which matching kernel is active: 'compiled' or 'pure'."""
    return _kernels.BACKEND


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0.0 for disjoint boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _boxes_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def match_detections(
    dets: Sequence[Detection],
    truths: Sequence[Truth],
    iou_thresh: float = 0.5,
    strict: bool = False,
) -> list[bool]:
    """Per-detection TP/FP labels for a single image.

    Within each class, detections are taken in descending score order (ties
    keep input order) and each greedily claims the unmatched truth with the
    highest IoU. Returns flags aligned with the input detection order.
    """
    labels = [False] * len(dets)
    by_class: dict[int, list[int]] = defaultdict(list)
    for idx, det in enumerate(dets):
        by_class[det.cls].append(idx)
    truth_boxes_by_class: dict[int, list[BoundingBox]] = defaultdict(list)
    for cls, box in truths:
        truth_boxes_by_class[cls].append(box)
    for cls, indices in by_class.items():
        scores = np.array([dets[i].score for i in indices], dtype=np.float64)
        order = np.argsort(-scores, kind="stable")
        det_boxes = _boxes_array([dets[indices[k]].box for k in order])
        tp, _ = _kernels.greedy_match(
            det_boxes, _boxes_array(truth_boxes_by_class.get(cls, [])), iou_thresh, strict
        )
        for rank, k in enumerate(order):
            labels[indices[k]] = bool(tp[rank])
    return labels


def _ranked_flags(
    cls: int,
    detections_by_image: Mapping[str, Sequence[Detection]],
    truths_by_image: Mapping[str, Sequence[Truth]],
    iou_thresh: float,
    strict: bool,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Dataset-wide (scores, tp flags) for one class, descending score."""
    scores: list[float] = []
    flags: list[int] = []
    keys: list[tuple[float, str, int]] = []
    n_truth = 0
    for image_id in sorted(truths_by_image.keys() | detections_by_image.keys()):
        truths = [b for c, b in truths_by_image.get(image_id, ()) if c == cls]
        n_truth += len(truths)
        dets = [d for d in detections_by_image.get(image_id, ()) if d.cls == cls]
        if not dets:
            continue
        local_scores = np.array([d.score for d in dets], dtype=np.float64)
        order = np.argsort(-local_scores, kind="stable")
        det_boxes = _boxes_array([dets[k].box for k in order])
        tp, _ = _kernels.greedy_match(det_boxes, _boxes_array(truths), iou_thresh, strict)
        for rank, k in enumerate(order):
            scores.append(float(local_scores[k]))
            flags.append(int(tp[rank]))
            keys.append((-float(local_scores[k]), image_id, rank))
    if not scores:
        return np.zeros(0), np.zeros(0, dtype=np.int64), n_truth
    order = sorted(range(len(scores)), key=lambda i: keys[i])
    return (
        np.array([scores[i] for i in order]),
        np.array([flags[i] for i in order], dtype=np.int64),
        n_truth,
    )


def _ap_from_curve(recall: np.ndarray, precision: np.ndarray, interpolation: str) -> float:
    if interpolation == "11pt":
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            mask = recall >= t
            ap += float(precision[mask].max()) if mask.any() else 0.0
        return ap / 11.0
    if interpolation != "all":
        raise LogomineError(f"unknown interpolation {interpolation!r}")
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return ap


def _ap_from_flags(flags: np.ndarray, n_truth: int, interpolation: str) -> float | None:
    if n_truth == 0:
        return None
    if flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1 - flags)
    recall = tp_cum / n_truth
    precision = tp_cum / (tp_cum + fp_cum)
    return _ap_from_curve(recall, precision, interpolation)


def average_precision(
    cls: int,
    detections_by_image: Mapping[str, Sequence[Detection]],
    truths_by_image: Mapping[str, Sequence[Truth]],
    iou_thresh: float = 0.5,
    interpolation: str = "all",
    strict: bool = False,
) -> float | None:
    """AP for one class over a dataset; None when the class has no truths."""
    _, flags, n_truth = _ranked_flags(
        cls, detections_by_image, truths_by_image, iou_thresh, strict
    )
    return _ap_from_flags(flags, n_truth, interpolation)


@dataclass(frozen=True)
class EvalResult:
    """Per-class AP plus matching tallies; mAP is the unweighted class mean."""

    ap: dict[int, float]
    mean: float
    tallies: dict[int, tuple[int, int, int]] = field(default_factory=dict)  # tp, fp, fn
    excluded: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "mAP": self.mean,
            "per_class_ap": {str(c): v for c, v in sorted(self.ap.items())},
            "tallies": {
                str(c): {"tp": t[0], "fp": t[1], "fn": t[2]}
                for c, t in sorted(self.tallies.items())
            },
            "excluded_classes": list(self.excluded),
        }


def mean_ap(aps: Mapping[int, float] | EvalResult | Iterable[float]) -> float:
    """Unweighted mean of per-class APs; errors when nothing was evaluated."""
    if isinstance(aps, EvalResult):
        values = list(aps.ap.values())
    elif isinstance(aps, Mapping):
        values = list(aps.values())
    else:
        values = list(aps)
    if not values:
        raise LogomineError("mean AP over zero evaluated classes")
    return float(sum(values) / len(values))


def evaluate_detections(
    detections_by_image: Mapping[str, Sequence[Detection]],
    truths_by_image: Mapping[str, Sequence[Truth]],
    iou_thresh: float = 0.5,
    interpolation: str = "all",
    strict: bool = False,
) -> EvalResult:
    """Full evaluation over a dataset.

    Classes with at least one ground-truth instance get an AP; classes that
    only appear in detections are excluded from the mean (standard VOC
    behaviour) and reported in ``excluded``.
    """
    truth_classes = {c for truths in truths_by_image.values() for c, _ in truths}
    det_classes = {d.cls for dets in detections_by_image.values() for d in dets}
    aps: dict[int, float] = {}
    tallies: dict[int, tuple[int, int, int]] = {}
    for cls in sorted(truth_classes):
        _, flags, n_truth = _ranked_flags(
            cls, detections_by_image, truths_by_image, iou_thresh, strict
        )
        tp = int(flags.sum()) if flags.size else 0
        fp = int(flags.size - tp)
        tallies[cls] = (tp, fp, n_truth - tp)
        ap = _ap_from_flags(flags, n_truth, interpolation)
        aps[cls] = ap if ap is not None else 0.0
    if not aps:
        raise LogomineError("evaluation needs at least one class with ground truth")
    return EvalResult(
        ap=aps,
        mean=mean_ap(aps),
        tallies=tallies,
        excluded=tuple(sorted(det_classes - truth_classes)),
    )


def load_detections(
    path: str | os.PathLike, classes: list[LogoClass]
) -> dict[str, list[Detection]]:
    """Detections file: ``image_id <TAB> class_name <TAB> score <TAB>
    x0,y0,x1,y1`` per line, UTF-8, LF."""
    by_name = classes_by_name(classes)
    out: dict[str, list[Detection]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise ManifestError(f"expected 4 columns, got {len(cols)}", line_no)
            image_id, name, score_s, coords = cols
            if name not in by_name:
                raise ManifestError(f"unknown class name {name!r}", line_no)
            parts = coords.split(",")
            if len(parts) != 4:
                raise ManifestError(f"box needs 4 coordinates, got {coords!r}", line_no)
            try:
                box = BoundingBox(*(int(p) for p in parts))
                det = Detection(cls=by_name[name].id, score=float(score_s), box=box)
            except (ValueError, LogomineError) as exc:
                raise ManifestError(str(exc), line_no) from None
            out[image_id].append(det)
    return dict(out)


def save_detections(
    detections_by_image: Mapping[str, Sequence[Detection]],
    path: str | os.PathLike,
    classes: list[LogoClass],
) -> None:
    names = {c.id: c.name for c in classes}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for image_id in sorted(detections_by_image):
            for det in detections_by_image[image_id]:
                b = det.box
                fh.write(
                    f"{image_id}\t{names[det.cls]}\t{det.score!r}\t"
                    f"{b.x_min},{b.y_min},{b.x_max},{b.y_max}\n"
                )
