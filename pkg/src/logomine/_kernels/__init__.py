"""Matching kernel selection.

Prefers the compiled extension, falls back to the pure-Python twin when the
extension is missing or LOGOMINE_PURE=1 is set. Both produce bit-identical
results; the compiled path is just faster (see benchmarks/bench_matching.py).
"""

import os

from . import _matchpy

if os.environ.get("LOGOMINE_PURE") == "1":
    _impl = _matchpy
    BACKEND = "pure"
else:
    try:
        from . import _matchc as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _matchpy
        BACKEND = "pure"

greedy_match = _impl.greedy_match
iou_matrix = _impl.iou_matrix
iou_pair = _impl.iou_pair

__all__ = ["BACKEND", "greedy_match", "iou_matrix", "iou_pair"]
