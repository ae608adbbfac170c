# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled matching kernels; semantics identical to _matchpy."""

import numpy as np


cdef inline double _iou(
    double ax0, double ay0, double ax1, double ay1,
    double bx0, double by0, double bx1, double by1,
) noexcept nogil:
    cdef double iw = min(ax1, bx1) - max(ax0, bx0)
    if iw <= 0.0:
        return 0.0
    cdef double ih = min(ay1, by1) - max(ay0, by0)
    if ih <= 0.0:
        return 0.0
    cdef double inter = iw * ih
    cdef double union_ = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union_


def iou_pair(
    double ax0, double ay0, double ax1, double ay1,
    double bx0, double by0, double bx1, double by1,
):
    return _iou(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1)


def iou_matrix(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] av = a
    cdef double[:, ::1] bv = b
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(m):
                ov[i, j] = _iou(
                    av[i, 0], av[i, 1], av[i, 2], av[i, 3],
                    bv[j, 0], bv[j, 1], bv[j, 2], bv[j, 3],
                )
    return out


def greedy_match(det_boxes, truth_boxes, double iou_thresh, bint strict=False):
    """See _matchpy.greedy_match; detections must be score-desc ordered."""
    det_boxes = np.ascontiguousarray(det_boxes, dtype=np.float64)
    truth_boxes = np.ascontiguousarray(truth_boxes, dtype=np.float64)
    cdef double[:, ::1] dv = det_boxes
    cdef double[:, ::1] tv = truth_boxes
    cdef Py_ssize_t n = dv.shape[0], m = tv.shape[0]
    tp = np.zeros(n, dtype=np.uint8)
    matched = np.full(n, -1, dtype=np.int64)
    used = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] tpv = tp
    cdef long long[::1] mv = matched
    cdef unsigned char[::1] uv = used
    cdef Py_ssize_t i, j, best_j
    cdef double best_iou, iou
    cdef bint hit
    with nogil:
        for i in range(n):
            best_iou = -1.0
            best_j = -1
            for j in range(m):
                if uv[j]:
                    continue
                iou = _iou(
                    dv[i, 0], dv[i, 1], dv[i, 2], dv[i, 3],
                    tv[j, 0], tv[j, 1], tv[j, 2], tv[j, 3],
                )
                if iou > best_iou:
                    best_iou = iou
                    best_j = j
            if best_j < 0:
                continue
            hit = best_iou > iou_thresh if strict else best_iou >= iou_thresh
            if hit:
                tpv[i] = 1
                mv[i] = best_j
                uv[best_j] = 1
    return tp, matched
