"""Pure-Python matching kernels.

Reference implementation and import-time fallback for the compiled module.
Arithmetic mirrors _matchc.pyx operation-for-operation so both backends
produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def iou_pair(
    ax0: float, ay0: float, ax1: float, ay1: float,
    bx0: float, by0: float, bx1: float, by1: float,
) -> float:
    iw = min(ax1, bx1) - max(ax0, bx0)
    if iw <= 0.0:
        return 0.0
    ih = min(ay1, by1) - max(ay0, by0)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    for i in range(a.shape[0]):
        ax0, ay0, ax1, ay1 = a[i, 0], a[i, 1], a[i, 2], a[i, 3]
        for j in range(b.shape[0]):
            out[i, j] = iou_pair(ax0, ay0, ax1, ay1, b[j, 0], b[j, 1], b[j, 2], b[j, 3])
    return out


def greedy_match(
    det_boxes: np.ndarray, truth_boxes: np.ndarray, iou_thresh: float, strict: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Label detections TP/FP against truths of one class in one image.

    ``det_boxes`` must already be in descending score order. Each detection
    greedily claims the unmatched truth with the highest IoU; it is a TP when
    that IoU passes the threshold (>= by default, > when strict). Each truth
    is claimed at most once.

    Returns (tp flags uint8, claimed truth index int64 or -1), aligned with
    the detection order.
    """
    det_boxes = np.ascontiguousarray(det_boxes, dtype=np.float64)
    truth_boxes = np.ascontiguousarray(truth_boxes, dtype=np.float64)
    n, m = det_boxes.shape[0], truth_boxes.shape[0]
    tp = np.zeros(n, dtype=np.uint8)
    matched = np.full(n, -1, dtype=np.int64)
    used = np.zeros(m, dtype=np.uint8)
    for i in range(n):
        dx0, dy0, dx1, dy1 = det_boxes[i, 0], det_boxes[i, 1], det_boxes[i, 2], det_boxes[i, 3]
        best_iou = -1.0
        best_j = -1
        for j in range(m):
            if used[j]:
                continue
            iou = iou_pair(
                dx0, dy0, dx1, dy1,
                truth_boxes[j, 0], truth_boxes[j, 1], truth_boxes[j, 2], truth_boxes[j, 3],
            )
            if iou > best_iou:
                best_iou = iou
                best_j = j
        if best_j < 0:
            continue
        hit = best_iou > iou_thresh if strict else best_iou >= iou_thresh
        if hit:
            tp[i] = 1
            matched[i] = best_j
            used[best_j] = 1
    return tp, matched
