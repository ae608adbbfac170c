"""Line-delimited dataset manifests.

One image per line, tab-separated:

    id <TAB> relative_path <TAB> width <TAB> height <TAB> weak_label_name
       <TAB> source [<TAB> class:x_min,y_min,x_max,y_max ...]

UTF-8, LF endings. Records with truth columns load as AnnotatedImage, plain
records as WebImage. An annotated record with zero truths carries a single
``-`` marker column so the distinction survives a round-trip. Pixel payloads
stay on disk; the manifest only stores the reference.
"""

from __future__ import annotations

import os

from ..errors import LogomineError, ManifestError
from .types import (
    AnnotatedImage,
    BoundingBox,
    LogoClass,
    ManifestRecord,
    WebImage,
    classes_by_id,
    classes_by_name,
)

_EMPTY_TRUTHS = "-"


def _parse_box(token: str, line_no: int) -> tuple[str, BoundingBox]:
    name, sep, coords = token.partition(":")
    if not sep:
        raise ManifestError(f"bad truth column {token!r}", line_no)
    parts = coords.split(",")
    if len(parts) != 4:
        raise ManifestError(f"truth box needs 4 coordinates, got {token!r}", line_no)
    try:
        x0, y0, x1, y1 = (int(p) for p in parts)
    except ValueError:
        raise ManifestError(f"non-integer coordinate in {token!r}", line_no) from None
    try:
        return name, BoundingBox(x0, y0, x1, y1)
    except LogomineError as exc:
        raise ManifestError(str(exc), line_no) from None


def load_manifest(path: str | os.PathLike, classes: list[LogoClass]) -> list[ManifestRecord]:
    """Read records in file order; every record passes type invariants."""
    by_name = classes_by_name(classes)
    records: list[ManifestRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 6:
                raise ManifestError(f"expected >= 6 columns, got {len(cols)}", line_no)
            img_id, rel_path, w_s, h_s, label_name, source = cols[:6]
            try:
                width, height = int(w_s), int(h_s)
            except ValueError:
                raise ManifestError(f"non-integer dimension {w_s!r}/{h_s!r}", line_no) from None
            if label_name not in by_name:
                raise ManifestError(f"unknown class name {label_name!r}", line_no)
            try:
                image = WebImage(
                    id=img_id,
                    width=width,
                    height=height,
                    pixels=rel_path,
                    weak_label=by_name[label_name].id,
                    source=source,
                )
            except LogomineError as exc:
                raise ManifestError(str(exc), line_no) from None
            extra = cols[6:]
            if not extra:
                records.append(image)
                continue
            if extra == [_EMPTY_TRUTHS]:
                records.append(AnnotatedImage(image=image, truths=()))
                continue
            truths = []
            for token in extra:
                name, box = _parse_box(token, line_no)
                if name not in by_name:
                    raise ManifestError(f"unknown class name {name!r}", line_no)
                truths.append((by_name[name].id, box))
            try:
                records.append(AnnotatedImage(image=image, truths=tuple(truths)))
            except LogomineError as exc:
                raise ManifestError(str(exc), line_no) from None
    return records


def _format_record(record: ManifestRecord, id_to_name: dict[int, str]) -> str:
    if isinstance(record, AnnotatedImage):
        image, truths = record.image, record.truths
    else:
        image, truths = record, None
    if not isinstance(image.pixels, str):
        raise LogomineError(
            f"image {image.id}: pixels must be a path reference to serialize "
            "(materialize in-memory payloads first)"
        )
    cols = [
        image.id,
        image.pixels,
        str(image.width),
        str(image.height),
        id_to_name[image.weak_label],
        image.source,
    ]
    if truths is not None:
        if not truths:
            cols.append(_EMPTY_TRUTHS)
        else:
            cols.extend(
                f"{id_to_name[cls]}:{b.x_min},{b.y_min},{b.x_max},{b.y_max}"
                for cls, b in truths
            )
    return "\t".join(cols)


def save_manifest(
    records: list[ManifestRecord], path: str | os.PathLike, classes: list[LogoClass]
) -> None:
    """Write records; load_manifest(save_manifest(r)) reproduces r exactly."""
    id_to_name = {c.id: c.name for c in classes_by_id(classes).values()}
    lines = [_format_record(r, id_to_name) for r in records]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def load_classes(path: str | os.PathLike) -> list[LogoClass]:
    """Class registry: ``id <TAB> name [<TAB> icon,icon,...]`` per line."""
    classes = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ManifestError("class line needs at least id and name", line_no)
            icons = tuple(p for p in cols[2].split(",") if p) if len(cols) > 2 else ()
            try:
                classes.append(LogoClass(id=int(cols[0]), name=cols[1], icon_refs=icons))
            except (ValueError, LogomineError) as exc:
                raise ManifestError(str(exc), line_no) from None
    from .types import validate_classes

    validate_classes(classes)
    return classes


def save_classes(classes: list[LogoClass], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cls in sorted(classes, key=lambda c: c.id):
            cols = [str(cls.id), cls.name]
            if cls.icon_refs:
                cols.append(",".join(cls.icon_refs))
            fh.write("\t".join(cols))
            fh.write("\n")
