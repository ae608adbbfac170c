"""Domain value types shared by every stage of the pipeline.

All types except PoolState are immutable and safe to share across workers.
PoolState is mutated only through its own methods and only by the engine
(single writer); everyone else takes snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import LogomineError

SOURCES = ("stream", "synthetic", "external")


@dataclass(frozen=True, slots=True)
class LogoClass:
    """One detectable brand: dense 1-based id, query name, clean icon files."""

    id: int
    name: str
    icon_refs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.id < 1:
            raise LogomineError(f"class id must be >= 1, got {self.id}")
        if not self.name:
            raise LogomineError("class name must be non-empty")


def validate_classes(classes: list[LogoClass]) -> None:
    """Check ids are dense 1..m and names unique."""
    if not classes:
        raise LogomineError("at least one class is required")
    ids = sorted(c.id for c in classes)
    if ids != list(range(1, len(classes) + 1)):
        raise LogomineError(f"class ids must be dense 1..{len(classes)}, got {ids}")
    names = [c.name for c in classes]
    if len(set(names)) != len(names):
        raise LogomineError("class names must be unique")


def classes_by_name(classes: list[LogoClass]) -> dict[str, LogoClass]:
    return {c.name: c for c in classes}


def classes_by_id(classes: list[LogoClass]) -> dict[int, LogoClass]:
    return {c.id: c for c in classes}


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Integer pixel box, max edges exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise LogomineError(f"box coordinates must be >= 0: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise LogomineError(
                f"box must have positive extent: "
                f"({self.x_min},{self.y_min},{self.x_max},{self.y_max})"
            )

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def fits_within(self, width: int, height: int) -> bool:
        return self.x_max <= width and self.y_max <= height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True, slots=True)
class WebImage:
    """A weakly-labelled image record.

    ``pixels`` is an opaque payload reference: usually a path relative to the
    manifest, an in-memory array for freshly composited images, or None for
    bookkeeping-only synthetic records that are never persisted.
    """

    id: str
    width: int
    height: int
    pixels: object
    weak_label: int
    source: str = "stream"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise LogomineError(f"image {self.id}: dimensions must be >= 1")
        if self.source not in SOURCES:
            raise LogomineError(f"image {self.id}: unknown source {self.source!r}")


@dataclass(frozen=True, slots=True)
class Detection:
    """A detector output: class id, confidence, box."""

    cls: int
    score: float
    box: BoundingBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise LogomineError(f"detection score out of [0,1]: {self.score}")


@dataclass(frozen=True, slots=True)
class AnnotatedImage:
    """An image with exact per-instance (class, box) ground truth.

    ``truths`` may be empty (pure background). For such records the weak
    label of the wrapped image is nominal.
    """

    image: WebImage
    truths: tuple[tuple[int, BoundingBox], ...] = ()

    def __post_init__(self):
        for cls, box in self.truths:
            if not box.fits_within(self.image.width, self.image.height):
                raise LogomineError(
                    f"image {self.image.id}: truth box {box.as_tuple()} exceeds "
                    f"{self.image.width}x{self.image.height}"
                )


ManifestRecord = WebImage | AnnotatedImage


def record_image(record: ManifestRecord) -> WebImage:
    return record.image if isinstance(record, AnnotatedImage) else record


@dataclass(slots=True)
class PoolState:
    """Disjoint (discovered, unexplored) id sets for one detector slot.

    The discovered set only grows; the union never changes within a run.
    """

    discovered: set[str] = field(default_factory=set)
    unexplored: set[str] = field(default_factory=set)
    iteration: int = 0

    def validate(self, total: int | None = None, prev: "PoolState | None" = None) -> None:
        overlap = self.discovered & self.unexplored
        if overlap:
            raise LogomineError(f"pool sets overlap on {len(overlap)} ids")
        if total is not None and len(self.discovered) + len(self.unexplored) != total:
            raise LogomineError(
                f"pool size changed: {len(self.discovered)}+{len(self.unexplored)} != {total}"
            )
        if self.iteration < 0:
            raise LogomineError("pool iteration must be >= 0")
        if prev is not None:
            if not prev.discovered <= self.discovered:
                raise LogomineError("discovered set must grow monotonically")
            if len(prev.discovered) + len(prev.unexplored) != len(self.discovered) + len(
                self.unexplored
            ):
                raise LogomineError("pool union size must stay constant")

    def snapshot(self) -> "PoolState":
        return PoolState(set(self.discovered), set(self.unexplored), self.iteration)

    @classmethod
    def fresh(cls, ids) -> "PoolState":
        return cls(discovered=set(), unexplored=set(ids), iteration=0)
