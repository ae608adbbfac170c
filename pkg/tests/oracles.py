"""Slow, independent reference implementations used only to check the fast
paths. Everything here is deliberately written from the definitions, not by
reusing package code."""

from __future__ import annotations


def iou_direct(a, b) -> float:
    """IoU from explicit area arithmetic over two (x0, y0, x1, y1) tuples."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax1, bx1), min(ay1, by1)
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    return inter / (area_a + area_b - inter)


def greedy_labels(ranked, truths_by_image, iou_thresh, strict=False):
    """Walk detections of one class in global rank order, claiming per-image
    truths greedily. ``ranked`` is a list of (image_id, score, box tuple).
    Returns TP flags in rank order."""
    used: dict[str, set[int]] = {}
    flags = []
    for image_id, _score, box in ranked:
        truths = truths_by_image.get(image_id, [])
        taken = used.setdefault(image_id, set())
        best_iou, best_j = -1.0, -1
        for j, tbox in enumerate(truths):
            if j in taken:
                continue
            value = iou_direct(box, tbox)
            if value > best_iou:
                best_iou, best_j = value, j
        ok = best_iou > iou_thresh if strict else best_iou >= iou_thresh
        if best_j >= 0 and ok:
            taken.add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def ap_enumerated(flags, n_truth) -> float:
    """All-points AP by exhaustive enumeration: at every TP rank, the
    precision is the maximum over all later ranks (O(n^2) double loop)."""
    if n_truth == 0:
        raise ValueError("class with no truths has no AP")
    if not flags:
        return 0.0
    precisions = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += int(flag)
        precisions.append(tp / k)
    ap = 0.0
    prev_recall = 0.0
    tp = 0
    for k, flag in enumerate(flags):
        if not flag:
            continue
        tp += 1
        recall = tp / n_truth
        best = max(precisions[k:])
        ap += (recall - prev_recall) * best
        prev_recall = recall
    return ap


def oracle_average_precision(cls, dets_by_image, truths_by_image, iou_thresh, strict=False):
    """End-to-end AP for one class: independent ranking, matching, and PR
    enumeration. Detection tuples are (score, box tuple); ties broken by
    image id then input position, mirroring the documented contract."""
    ranked = []
    n_truth = 0
    for image_id in sorted(set(dets_by_image) | set(truths_by_image)):
        for pos, (score, box) in enumerate(
            sorted(dets_by_image.get(image_id, []), key=lambda d: -d[0])
        ):
            ranked.append(((-score, image_id, pos), (image_id, score, box)))
        n_truth += len(truths_by_image.get(image_id, []))
    if n_truth == 0:
        return None
    ranked.sort(key=lambda pair: pair[0])
    ordered = [entry for _, entry in ranked]
    flags = greedy_labels(
        ordered,
        {i: list(t) for i, t in truths_by_image.items()},
        iou_thresh,
        strict,
    )
    return ap_enumerated(flags, n_truth)


def dedupe_reference(images):
    """Set-based duplicate removal oracle: first occurrence per
    (label, width, height) wins."""
    out = []
    for i, im in enumerate(images):
        earlier = any(
            (jm.weak_label, jm.width, jm.height) == (im.weak_label, im.width, im.height)
            for jm in images[:i]
        )
        if not earlier:
            out.append(im)
    return out
