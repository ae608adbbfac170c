"""Synthetic training images: icons pasted onto backgrounds with exact boxes.

The transform pipeline is scale -> rotate (nearest-neighbour, so a binary
alpha mask stays binary) -> colour jitter -> opacity, after which the icon is
tight-cropped to its alpha support. The recorded truth box is therefore
exactly the pasted pixel footprint: position plus cropped extent. One logo
instance per synthetic image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .core.rng import make_rng
from .core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage
from .errors import CompositeError, LogomineError


@dataclass(frozen=True)
class TransformSpec:
    """Icon transform: plain scale multiplier, rotation in degrees,
    per-channel colour factors, global opacity."""

    scale: float = 1.0
    rotation: float = 0.0
    color_jitter: tuple[float, float, float] = (1.0, 1.0, 1.0)
    opacity: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise LogomineError(f"scale must be > 0, got {self.scale}")
        if not 0.0 < self.opacity <= 1.0:
            raise LogomineError(f"opacity must be in (0,1], got {self.opacity}")
        for f in self.color_jitter:
            if not 0.5 <= f <= 1.5:
                raise LogomineError(f"colour jitter factor out of [0.5,1.5]: {f}")


# Default sampling ranges for synth_batch; scale_fraction is relative to the
# background's smaller dimension.
DEFAULT_SCALE_FRACTION = (0.3, 1.0)
DEFAULT_ROTATION = (-15.0, 15.0)
DEFAULT_JITTER = (0.8, 1.2)


def _to_rgba(icon: np.ndarray) -> np.ndarray:
    if icon.ndim != 3 or icon.shape[2] not in (3, 4):
        raise LogomineError(f"icon must be HxWx3 or HxWx4, got shape {icon.shape}")
    if icon.shape[2] == 3:
        alpha = np.full(icon.shape[:2] + (1,), 255, dtype=np.uint8)
        icon = np.concatenate([icon, alpha], axis=2)
    return icon.astype(np.uint8, copy=False)


def transform_icon(icon: np.ndarray, transform: TransformSpec) -> np.ndarray:
    """Apply the transform and tight-crop to the alpha support."""
    rgba = _to_rgba(icon)
    img = Image.fromarray(rgba, "RGBA")
    h, w = rgba.shape[:2]
    new_w = max(1, round(w * transform.scale))
    new_h = max(1, round(h * transform.scale))
    if (new_w, new_h) != (w, h):
        img = img.resize((new_w, new_h), Image.NEAREST)
    if transform.rotation % 360 != 0:
        img = img.rotate(transform.rotation, expand=True, resample=Image.NEAREST)
    out = np.asarray(img, dtype=np.uint8).copy()
    jitter = np.asarray(transform.color_jitter, dtype=np.float64)
    if not np.all(jitter == 1.0):
        out[:, :, :3] = np.clip(
            np.rint(out[:, :, :3].astype(np.float64) * jitter), 0, 255
        ).astype(np.uint8)
    if transform.opacity < 1.0:
        out[:, :, 3] = np.rint(out[:, :, 3].astype(np.float64) * transform.opacity).astype(
            np.uint8
        )
    mask = out[:, :, 3] > 0
    if not mask.any():
        raise CompositeError("icon is fully transparent after transform")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return out[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]


def composite(
    icon: np.ndarray,
    background: np.ndarray,
    transform: TransformSpec,
    position: tuple[int, int] | None,
    cls: int,
    image_id: str = "synthetic",
    rng: np.random.Generator | None = None,
) -> AnnotatedImage:
    """Alpha-blend the transformed icon onto the background.

    ``position`` is the paste origin; pass None to draw it uniformly from the
    valid range using ``rng``. The single truth box is the pasted footprint.
    The blended pixels ride along as the image payload.
    """
    if background.ndim != 3 or background.shape[2] != 3:
        raise LogomineError(f"background must be HxWx3, got shape {background.shape}")
    patch = transform_icon(icon, transform)
    ph, pw = patch.shape[:2]
    bh, bw = background.shape[:2]
    if pw > bw or ph > bh:
        raise CompositeError(
            f"transformed icon {pw}x{ph} exceeds background {bw}x{bh}; rescale first"
        )
    if position is None:
        if rng is None:
            raise LogomineError("random placement needs an rng")
        x = int(rng.integers(0, bw - pw + 1))
        y = int(rng.integers(0, bh - ph + 1))
    else:
        x, y = position
    if x < 0 or y < 0 or x + pw > bw or y + ph > bh:
        raise CompositeError(
            f"icon {pw}x{ph} at ({x},{y}) exceeds background {bw}x{bh}"
        )
    out = background.astype(np.uint8, copy=True)
    region = out[y : y + ph, x : x + pw].astype(np.float64)
    alpha = patch[:, :, 3:4].astype(np.float64) / 255.0
    blended = np.rint(region * (1.0 - alpha) + patch[:, :, :3].astype(np.float64) * alpha)
    out[y : y + ph, x : x + pw] = blended.astype(np.uint8)
    image = WebImage(
        id=image_id,
        width=bw,
        height=bh,
        pixels=out,
        weak_label=cls,
        source="synthetic",
    )
    return AnnotatedImage(image=image, truths=((cls, BoundingBox(x, y, x + pw, y + ph)),))


def _fit_scale(
    icon: np.ndarray, background: np.ndarray, fraction: float, rotation: float
) -> float:
    """Scale multiplier so the rotated icon's longer side is ``fraction`` of
    the background's smaller dimension, shrunk if rotation expansion would
    overflow the background."""
    bh, bw = background.shape[:2]
    ih, iw = icon.shape[:2]
    scale = fraction * min(bw, bh) / max(iw, ih)
    theta = np.deg2rad(rotation)
    cos, sin = abs(np.cos(theta)), abs(np.sin(theta))
    rot_w = iw * cos + ih * sin
    rot_h = iw * sin + ih * cos
    limit = min(bw / rot_w, bh / rot_h)
    if scale > limit:
        scale = limit * 0.99
    return max(scale, 1.0 / max(iw, ih))


def synth_batch(
    cls: LogoClass,
    n: int,
    backgrounds: Sequence[np.ndarray],
    seed: int,
    icons: Sequence[np.ndarray] | None = None,
    scale_fraction: tuple[float, float] = DEFAULT_SCALE_FRACTION,
    rotation_range: tuple[float, float] = DEFAULT_ROTATION,
    jitter_range: tuple[float, float] = DEFAULT_JITTER,
    opacity: float = 1.0,
) -> list[AnnotatedImage]:
    """Generate exactly ``n`` synthetic images for one class.

    Backgrounds and icons are sampled with replacement; every image draws its
    transform from a seed derived as (seed, class, index), so batches are
    reproducible and images are independent (parallelizable by index).
    Icons default to the class's icon_refs loaded from disk.
    """
    if n < 0:
        raise LogomineError(f"n must be >= 0, got {n}")
    if n == 0:
        return []
    if not backgrounds:
        raise LogomineError("synth_batch needs at least one background")
    if icons is None:
        if not cls.icon_refs:
            raise LogomineError(f"class {cls.name!r} has no icon references")
        icons = [load_image(p, "RGBA") for p in cls.icon_refs]
    if not icons:
        raise LogomineError("synth_batch needs at least one icon")
    out = []
    for i in range(n):
        rng = make_rng(seed, "synth", cls.id, i)
        background = backgrounds[int(rng.integers(0, len(backgrounds)))]
        icon = icons[int(rng.integers(0, len(icons)))]
        rotation = float(rng.uniform(*rotation_range))
        fraction = float(rng.uniform(*scale_fraction))
        jitter = tuple(float(rng.uniform(*jitter_range)) for _ in range(3))
        scale = _fit_scale(icon, background, fraction, rotation)
        for _ in range(4):  # rasterized extent can overshoot the estimate by a pixel
            spec = TransformSpec(
                scale=scale, rotation=rotation, color_jitter=jitter, opacity=opacity
            )
            try:
                out.append(
                    composite(
                        icon,
                        background,
                        spec,
                        position=None,
                        cls=cls.id,
                        image_id=f"syn-{cls.name}-{seed}-{i:06d}",
                        rng=rng,
                    )
                )
                break
            except CompositeError:
                scale *= 0.9
        else:
            raise CompositeError(
                f"could not fit icon into {background.shape[1]}x{background.shape[0]} background"
            )
    return out


def context_augment_count(per_class_quota: int, mined_count: int) -> int:
    """Synthetic images needed to top a class up to its per-iteration quota."""
    if per_class_quota < 0 or mined_count < 0:
        raise LogomineError("counts must be >= 0")
    return max(0, per_class_quota - mined_count)


def cross_class_backgrounds(
    mined: dict[int, list[WebImage]],
    target: LogoClass,
    seed: int,
    n: int = 32,
) -> list[object]:
    """Sample background payloads from the other classes' mined images.

    Only classes different from the target are eligible; the result is empty
    when no other class has mined images (callers then fall back to the
    bootstrap background pool). Sampling is with replacement.
    """
    eligible = [
        im for cls_id, images in sorted(mined.items()) if cls_id != target.id for im in images
    ]
    if not eligible:
        return []
    rng = make_rng(seed, "ctx-bg", target.id)
    picks = rng.integers(0, len(eligible), size=n)
    return [eligible[int(k)].pixels for k in picks]


def load_image(path: str | os.PathLike, mode: str = "RGB") -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert(mode), dtype=np.uint8)


def save_png(pixels: np.ndarray, path: str | os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PNG")
