"""Synthetic-world fixtures for desk-scale simulated runs.

Generates a weakly-labelled pool with hidden per-image ground truth (the
latent world the simulated detector consults), an annotated evaluation set,
and a class registry. Class sizes follow a geometric decay, reproducing the
long-tailed imbalance of stream-collected data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .core.manifest import save_classes, save_manifest
from .core.rng import make_rng
from .core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage
from .detector.simulated import LatentWorld
from .errors import LogomineError


@dataclass(frozen=True)
class SimWorldSpec:
    n_classes: int = 12
    max_count: int = 1500
    min_count: int = 6
    decay: float = 0.6
    true_rate: float = 0.25
    eval_positives: int = 20
    eval_backgrounds: int = 120
    seed: int = 0

    def class_counts(self) -> list[int]:
        return [
            max(self.min_count, round(self.max_count * self.decay**rank))
            for rank in range(self.n_classes)
        ]


@dataclass
class SimWorld:
    classes: list[LogoClass]
    pool: list[WebImage]
    world: LatentWorld
    eval_images: list[AnnotatedImage]

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_classes(self.classes, out / "classes.tsv")
        save_manifest(self.pool, out / "pool.manifest", self.classes)
        save_manifest(self.eval_images, out / "eval.manifest", self.classes)
        self.world.save(out / "latents.json")


def _random_box(rng, width: int, height: int) -> tuple[int, int, int, int]:
    w = int(rng.integers(max(8, width // 8), max(9, width // 2)))
    h = int(rng.integers(max(8, height // 8), max(9, height // 2)))
    w, h = min(w, width), min(h, height)
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return (x, y, x + w, y + h)


def generate_world(spec: SimWorldSpec) -> SimWorld:
    if spec.n_classes < 1:
        raise LogomineError("need at least one class")
    classes = [
        LogoClass(id=i + 1, name=f"brand{i + 1:02d}") for i in range(spec.n_classes)
    ]
    counts = spec.class_counts()
    pool: list[WebImage] = []
    latent: dict[str, int] = {}
    boxes: dict[str, tuple[int, int, int, int]] = {}
    for cls, count in zip(classes, counts):
        rng = make_rng(spec.seed, "pool", cls.id)
        for j in range(count):
            image_id = f"web-{cls.name}-{j:05d}"
            width = int(rng.integers(120, 641))
            height = int(rng.integers(120, 641))
            is_true = rng.random() < spec.true_rate
            pool.append(
                WebImage(
                    id=image_id,
                    width=width,
                    height=height,
                    pixels=f"pool/{image_id}.png",
                    weak_label=cls.id,
                    source="stream",
                )
            )
            if is_true:
                latent[image_id] = cls.id
                boxes[image_id] = _random_box(rng, width, height)
    eval_images: list[AnnotatedImage] = []
    for cls in classes:
        rng = make_rng(spec.seed, "eval", cls.id)
        for j in range(spec.eval_positives):
            image_id = f"eval-{cls.name}-{j:04d}"
            width = int(rng.integers(160, 641))
            height = int(rng.integers(160, 641))
            box = BoundingBox(*_random_box(rng, width, height))
            eval_images.append(
                AnnotatedImage(
                    image=WebImage(
                        id=image_id,
                        width=width,
                        height=height,
                        pixels=f"eval/{image_id}.png",
                        weak_label=cls.id,
                        source="external",
                    ),
                    truths=((cls.id, box),),
                )
            )
    rng = make_rng(spec.seed, "eval-bg")
    for j in range(spec.eval_backgrounds):
        image_id = f"eval-bg-{j:04d}"
        width = int(rng.integers(160, 641))
        height = int(rng.integers(160, 641))
        eval_images.append(
            AnnotatedImage(
                image=WebImage(
                    id=image_id,
                    width=width,
                    height=height,
                    pixels=f"eval/{image_id}.png",
                    weak_label=classes[j % len(classes)].id,
                    source="external",
                ),
                truths=(),
            )
        )
    return SimWorld(
        classes=classes,
        pool=pool,
        world=LatentWorld(latent=latent, boxes=boxes),
        eval_images=eval_images,
    )
