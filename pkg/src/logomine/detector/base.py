"""Uniform detector interface.

A DetectorSlot pairs a name with a backend implementation (simulated or
external). Slots are immutable: fine_tune/bootstrap return a new slot, so a
failed update leaves the caller's slot untouched and iteration rollback is
free. Two co-learning slots never share training state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from ..core.types import AnnotatedImage, Detection, WebImage
from ..errors import LogomineError, SlotNotInitializedError


@dataclass(frozen=True)
class DetectorSlot:
    name: str
    backend: str  # "simulated" | "external"
    impl: object
    initialized: bool = False


def _require_initialized(slot: DetectorSlot) -> None:
    if not slot.initialized:
        raise SlotNotInitializedError(
            f"slot {slot.name!r} must be bootstrapped or fine-tuned before use"
        )


def detect(slot: DetectorSlot, image: WebImage | AnnotatedImage) -> list[Detection]:
    """All detections on one image, scores in [0, 1]."""
    _require_initialized(slot)
    return slot.impl.detect(image)


def max_score(slot: DetectorSlot, image: WebImage | AnnotatedImage, cls: int) -> float:
    """Maximal detection score of the image on one class; 0.0 when the class
    never fires. Defined directly over detect() so the two can never drift."""
    scores = [d.score for d in detect(slot, image) if d.cls == cls]
    return max(scores, default=0.0)


def fine_tune(slot: DetectorSlot, training: Sequence[AnnotatedImage]) -> DetectorSlot:
    """Update the slot on a training batch; returns the updated slot.

    The input slot is never mutated, so any failure leaves it unchanged.
    """
    if not training:
        raise LogomineError(f"slot {slot.name!r}: fine-tune batch must be non-empty")
    new_impl = slot.impl.fine_tuned(training)
    return replace(slot, impl=new_impl, initialized=True)


def bootstrap(slot: DetectorSlot, synthetic: Sequence[AnnotatedImage]) -> DetectorSlot:
    """(Re)initialize the slot from synthetic coverage of every class."""
    new_impl = slot.impl.bootstrapped(synthetic)
    return replace(slot, impl=new_impl, initialized=True)
