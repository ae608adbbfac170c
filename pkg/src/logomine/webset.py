"""Weakly-labelled dataset construction from a stream source.

A stream source yields (image payload, accompanying text) items exactly once
per session. Items are weak-labelled by case-insensitive whole-word keyword
match of class names against the text, then cleaned by a size filter and
per-class duplicate removal. No live social-media client lives here; the
directory / replay sources are the seam where one would attach.
"""

from __future__ import annotations

import json
import os
import re
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core.rng import make_rng
from .core.types import LogoClass, WebImage
from .errors import LogomineError

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


@dataclass(frozen=True)
class StreamItem:
    """One raw item pulled from a source: payload plus accompanying text."""

    id: str
    payload: object  # path str or ndarray
    text: str


class ListSource:
    """In-memory source; mostly for tests and composition."""

    def __init__(self, items: Iterable[StreamItem]):
        self._items = list(items)

    def __iter__(self) -> Iterator[StreamItem]:
        yield from self._items


class DirectorySource:
    """Reads a directory of images with a sidecar ``<image>.txt`` per image
    holding the accompanying text (``one.png.txt`` or ``one.txt`` both work).
    Items are yielded in sorted name order."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def __iter__(self) -> Iterator[StreamItem]:
        for path in sorted(self.root.iterdir()):
            if path.suffix.lower() not in IMAGE_EXTS:
                continue
            text = ""
            for sidecar in (path.with_suffix(path.suffix + ".txt"), path.with_suffix(".txt")):
                if sidecar.exists():
                    text = sidecar.read_text(encoding="utf-8")
                    break
            yield StreamItem(id=path.stem, payload=str(path), text=text)


class ReplaySource:
    """Replays a recorded stream: JSONL with ``id``, ``path``, ``text``."""

    def __init__(self, record_path: str | os.PathLike):
        self.record_path = Path(record_path)

    def __iter__(self) -> Iterator[StreamItem]:
        with open(self.record_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                yield StreamItem(id=obj["id"], payload=obj["path"], text=obj.get("text", ""))


@dataclass
class CollectTally:
    yielded: int = 0
    skipped_undecodable: int = 0
    matched: int = 0


def _payload_dims(payload: object) -> tuple[int, int]:
    if isinstance(payload, np.ndarray):
        h, w = payload.shape[:2]
        return int(w), int(h)
    with Image.open(payload) as img:
        return img.size


def _keyword_patterns(classes: list[LogoClass]) -> list[tuple[LogoClass, re.Pattern]]:
    pats = []
    for cls in classes:
        if not cls.name:
            raise LogomineError("collect requires non-empty class names")
        pats.append((cls, re.compile(rf"\b{re.escape(cls.name)}\b", re.IGNORECASE)))
    return pats


def collect(
    source: Iterable[StreamItem],
    classes: list[LogoClass],
    tally: CollectTally | None = None,
) -> list[WebImage]:
    """Pull the source once and weak-label items by keyword match.

    An item whose text matches several class names produces one record per
    matched class. Undecodable payloads are skipped and tallied, source
    exhaustion is normal termination.
    """
    patterns = _keyword_patterns(classes)
    out: list[WebImage] = []
    for item in source:
        if tally is not None:
            tally.yielded += 1
        matched = [cls for cls, pat in patterns if pat.search(item.text)]
        if not matched:
            continue
        try:
            width, height = _payload_dims(item.payload)
        except (OSError, UnidentifiedImageError, ValueError):
            if tally is not None:
                tally.skipped_undecodable += 1
            continue
        for cls in matched:
            out.append(
                WebImage(
                    id=f"{item.id}::{cls.name}",
                    width=width,
                    height=height,
                    pixels=item.payload if isinstance(item.payload, str) else None,
                    weak_label=cls.id,
                    source="stream",
                )
            )
            if tally is not None:
                tally.matched += 1
    return out


def filter_noise(images: list[WebImage], min_dim: int = 100) -> list[WebImage]:
    """Drop images whose width or height falls below ``min_dim``."""
    if min_dim < 1:
        raise LogomineError(f"min_dim must be >= 1, got {min_dim}")
    return [im for im in images if im.width >= min_dim and im.height >= min_dim]


def dedupe_by_size(images: list[WebImage]) -> list[WebImage]:
    """Within each weak-label class keep the first image per (width, height).

    Size collisions across different classes are never compared.
    """
    seen: set[tuple[int, int, int]] = set()
    out = []
    for im in images:
        key = (im.weak_label, im.width, im.height)
        if key in seen:
            continue
        seen.add(key)
        out.append(im)
    return out


@dataclass(frozen=True)
class ClassStats:
    counts: dict[int, int]
    min_count: int
    median_count: float
    max_count: int
    imbalance_ratio: float

    def to_json(self) -> dict:
        return {
            "per_class": {str(c): n for c, n in sorted(self.counts.items())},
            "min": self.min_count,
            "median": self.median_count,
            "max": self.max_count,
            "imbalance_ratio": self.imbalance_ratio,
        }


def class_stats(images: list[WebImage]) -> ClassStats:
    """Per-class counts with min/median/max and max/min imbalance ratio,
    over the classes that actually appear."""
    if not images:
        raise LogomineError("class_stats needs at least one image")
    counts: dict[int, int] = {}
    for im in images:
        counts[im.weak_label] = counts.get(im.weak_label, 0) + 1
    values = sorted(counts.values())
    return ClassStats(
        counts=counts,
        min_count=values[0],
        median_count=float(statistics.median(values)),
        max_count=values[-1],
        imbalance_ratio=values[-1] / values[0],
    )


def estimate_noise_rate(
    images: list[WebImage],
    cls: LogoClass,
    oracle: Callable[[str], bool],
    sample_n: int = 1000,
    seed: int = 0,
) -> float:
    """Fraction of a seeded random sample the oracle marks as true logos.

    Draws min(sample_n, class count) images uniformly without replacement.
    The oracle stands in for manual inspection and maps image id -> bool.
    """
    members = [im for im in images if im.weak_label == cls.id]
    if not members:
        raise LogomineError(f"no images for class {cls.name!r}")
    rng = make_rng(seed, "noise-rate", cls.id)
    k = min(sample_n, len(members))
    picked = rng.choice(len(members), size=k, replace=False)
    hits = sum(1 for idx in picked if oracle(members[int(idx)].id))
    return hits / k
