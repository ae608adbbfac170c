"""The incremental mining and co-training loop.

Each iteration: both slots sweep their own unexplored pool and keep every
image whose weak-label score clears the confidence threshold, with the
qualifying detections frozen in as pseudo-truth boxes. Each slot then
fine-tunes on the *other* slot's newly mined set (its own in self mode) plus
enough synthetic context images to top every class up to the per-iteration
quota, using other classes' mined images as backgrounds. Both slots are
evaluated after every iteration and the run stops once the deployment slot's
mAP gain drops to the configured epsilon (or the iteration cap is hit).

Iterations are transactional: all updates are computed functionally and
committed together, so a failed iteration leaves slots and pools untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .compositor import context_augment_count, cross_class_backgrounds
from .core.manifest import save_manifest
from .core.rng import derive_seed
from .core.types import AnnotatedImage, BoundingBox, LogoClass, PoolState, WebImage
from .detector.base import (
    DetectorSlot,
    _require_initialized,
    bootstrap,
    detect,
    fine_tune,
    max_score,
)
from .errors import LogomineError
from .evalkit import EvalResult, evaluate_detections

Synthesizer = Callable[[LogoClass, int, list, str], list[AnnotatedImage]]


@dataclass(frozen=True)
class MiningConfig:
    """Loop parameters; defaults follow the reference operating point."""

    threshold: float = 0.9
    per_class_quota: int = 500
    max_iterations: int = 8
    stop_epsilon: float = 0.0
    bootstrap_per_class: int = 1000
    mode: str = "co"  # "co": cross-assign mined sets; "self": keep own
    deployment: str | None = None  # slot name; defaults to the second slot

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise LogomineError(f"threshold must be in (0,1], got {self.threshold}")
        if self.per_class_quota < 0:
            raise LogomineError("per_class_quota must be >= 0")
        if self.max_iterations < 1:
            raise LogomineError("max_iterations must be >= 1")
        if self.mode not in ("co", "self"):
            raise LogomineError(f"mode must be 'co' or 'self', got {self.mode!r}")


@dataclass
class IterationReport:
    """Everything worth keeping from one iteration."""

    iteration: int
    mined_per_slot: dict[str, dict[int, int]]
    synthetic_per_slot: dict[str, dict[int, int]]
    cumulative_images: int
    map_per_slot: dict[str, float]
    gain_per_slot: dict[str, float | None]
    stop: bool = False

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "mined_per_slot": {
                slot: {str(c): n for c, n in sorted(counts.items())}
                for slot, counts in sorted(self.mined_per_slot.items())
            },
            "synthetic_per_slot": {
                slot: {str(c): n for c, n in sorted(counts.items())}
                for slot, counts in sorted(self.synthetic_per_slot.items())
            },
            "cumulative_images": self.cumulative_images,
            "map_per_slot": {k: v for k, v in sorted(self.map_per_slot.items())},
            "gain_per_slot": {k: v for k, v in sorted(self.gain_per_slot.items())},
            "stop": self.stop,
        }


class MetadataSynthesizer:
    """Bookkeeping-only synthetic records for simulated backends.

    The simulated detector learns from counts and sources, not pixels, so
    rendering would be wasted work. Records carry no payload and are never
    persisted. Swap in RenderingSynthesizer to emit real composites.
    """

    def __init__(self, classes: list[LogoClass], nominal_size: int = 256):
        self.classes = classes
        self.nominal_size = nominal_size
        quarter = nominal_size // 4
        self._truths = {
            cls.id: ((cls.id, BoundingBox(quarter, quarter, 3 * quarter, 3 * quarter)),)
            for cls in classes
        }

    def __call__(
        self, cls: LogoClass, count: int, backgrounds: list, tag: str
    ) -> list[AnnotatedImage]:
        s = self.nominal_size
        truths = self._truths[cls.id]
        out = []
        for i in range(count):
            image = WebImage(
                id=f"syn-{tag}-{cls.name}-{i:05d}",
                width=s,
                height=s,
                pixels=None,
                weak_label=cls.id,
                source="synthetic",
            )
            out.append(AnnotatedImage(image=image, truths=truths))
        return out


class RenderingSynthesizer:
    """Full compositor-backed synthesis for external backends and exports."""

    def __init__(
        self,
        classes: list[LogoClass],
        icons_by_class: Mapping[int, list],
        fallback_backgrounds: list,
        seed: int,
        out_dir: str | Path | None = None,
    ):
        self.classes = classes
        self.icons_by_class = icons_by_class
        self.fallback_backgrounds = fallback_backgrounds
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir else None

    def __call__(
        self, cls: LogoClass, count: int, backgrounds: list, tag: str
    ) -> list[AnnotatedImage]:
        from . import compositor

        pool = [b for b in backgrounds if b is not None] or self.fallback_backgrounds
        arrays = [
            compositor.load_image(b) if isinstance(b, str) else b for b in pool
        ]
        rendered = compositor.synth_batch(
            cls,
            count,
            arrays,
            seed=derive_seed(self.seed, tag, cls.id),
            icons=self.icons_by_class.get(cls.id),
        )
        if self.out_dir is None:
            return rendered
        out = []
        for item in rendered:
            rel = f"synth/{tag}/{item.image.id}.png"
            compositor.save_png(item.image.pixels, self.out_dir / rel)
            out.append(
                AnnotatedImage(image=replace(item.image, pixels=rel), truths=item.truths)
            )
        return out


def select(slot: DetectorSlot, image: WebImage, threshold: float) -> bool:
    """Keep an image iff its weak-label class scores at or above threshold;
    other classes' detections never qualify an image."""
    return max_score(slot, image, image.weak_label) >= threshold


def _pseudo_annotation(
    slot: DetectorSlot, image: WebImage, threshold: float
) -> AnnotatedImage:
    truths = tuple(
        (d.cls, d.box)
        for d in detect(slot, image)
        if d.cls == image.weak_label and d.score >= threshold
    )
    return AnnotatedImage(image=image, truths=truths)


def self_mine(
    slot: DetectorSlot,
    pool: PoolState,
    threshold: float,
    universe: Mapping[str, WebImage],
    failures: list[str] | None = None,
) -> tuple[PoolState, list[AnnotatedImage]]:
    """One sweep over the unexplored pool.

    Selected images move to the discovered set with their qualifying
    detections as pseudo-truths; the rest stay unexplored for later
    iterations. A detector failure leaves the image unexplored and is
    tallied in ``failures``.
    """
    order = sorted(pool.unexplored)
    images = [universe[i] for i in order]
    mined: list[AnnotatedImage] = []
    impl = slot.impl
    if hasattr(impl, "mine_candidates"):
        _require_initialized(slot)
        selected, scores, boxes = impl.mine_candidates(images, threshold)
        for i, picked in enumerate(selected):
            if not picked:
                continue
            box = boxes[i]
            truths = ((images[i].weak_label, box),) if box is not None else ()
            mined.append(AnnotatedImage(image=images[i], truths=truths))
    else:
        for image in images:
            try:
                if select(slot, image, threshold):
                    mined.append(_pseudo_annotation(slot, image, threshold))
            except LogomineError:
                if failures is not None:
                    failures.append(image.id)
    mined_ids = {m.image.id for m in mined}
    new_pool = PoolState(
        discovered=pool.discovered | mined_ids,
        unexplored=pool.unexplored - mined_ids,
        iteration=pool.iteration + 1,
    )
    new_pool.validate(total=len(pool.discovered) + len(pool.unexplored), prev=pool)
    return new_pool, mined


def evaluate_slot(
    slot: DetectorSlot, eval_images: Sequence[AnnotatedImage]
) -> EvalResult:
    """mAP of one slot over an annotated evaluation set."""
    impl = slot.impl
    if hasattr(impl, "detect_batch"):
        _require_initialized(slot)
        detections = impl.detect_batch(eval_images)
    else:
        detections = {a.image.id: detect(slot, a) for a in eval_images}
    truths = {a.image.id: list(a.truths) for a in eval_images}
    return evaluate_detections(detections, truths)


def _count_by_class(items: Sequence[AnnotatedImage]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for item in items:
        counts[item.image.weak_label] = counts.get(item.image.weak_label, 0) + 1
    return counts


def _augment(
    mined: list[AnnotatedImage],
    classes: list[LogoClass],
    quota: int,
    synthesizer: Synthesizer,
    seed: int,
    tag: str,
) -> list[AnnotatedImage]:
    """Synthetic top-up so each class gains at least ``quota`` new images,
    drawing backgrounds from other classes' freshly mined images."""
    mined_by_class: dict[int, list[WebImage]] = {}
    for item in mined:
        mined_by_class.setdefault(item.image.weak_label, []).append(item.image)
    counts = _count_by_class(mined)
    out: list[AnnotatedImage] = []
    for cls in classes:
        need = context_augment_count(quota, counts.get(cls.id, 0))
        if need == 0:
            continue
        backgrounds = cross_class_backgrounds(
            mined_by_class, cls, seed=derive_seed(seed, tag, "ctx", cls.id)
        )
        out.extend(synthesizer(cls, need, backgrounds, tag))
    return out


def colearn_iteration(
    slot_a: DetectorSlot,
    slot_b: DetectorSlot,
    pool_a: PoolState,
    pool_b: PoolState,
    config: MiningConfig,
    universe: Mapping[str, WebImage],
    eval_images: Sequence[AnnotatedImage],
    classes: list[LogoClass],
    seed: int,
    synthesizer: Synthesizer,
    prev: IterationReport | None = None,
    mined_sink: dict[str, list[AnnotatedImage]] | None = None,
) -> tuple[DetectorSlot, DetectorSlot, PoolState, PoolState, IterationReport]:
    """One full iteration: mine, augment, cross-train, evaluate, report.

    ``mined_sink`` (slot name -> list) collects the newly mined annotations
    for callers that persist the discovered sets.
    """
    iteration = pool_a.iteration + 1
    new_pool_a, mined_a = self_mine(slot_a, pool_a, config.threshold, universe)
    new_pool_b, mined_b = self_mine(slot_b, pool_b, config.threshold, universe)
    if mined_sink is not None:
        mined_sink.setdefault(slot_a.name, []).extend(mined_a)
        mined_sink.setdefault(slot_b.name, []).extend(mined_b)

    tag_a = f"it{iteration}-{slot_a.name}"
    tag_b = f"it{iteration}-{slot_b.name}"
    synth_a = _augment(mined_a, classes, config.per_class_quota, synthesizer, seed, tag_a)
    synth_b = _augment(mined_b, classes, config.per_class_quota, synthesizer, seed, tag_b)

    if config.mode == "co":
        batch_a = mined_b + synth_a
        batch_b = mined_a + synth_b
    else:
        batch_a = mined_a + synth_a
        batch_b = mined_b + synth_b

    new_slot_a = fine_tune(slot_a, batch_a) if batch_a else slot_a
    new_slot_b = fine_tune(slot_b, batch_b) if batch_b else slot_b

    maps = {
        new_slot_a.name: evaluate_slot(new_slot_a, eval_images).mean,
        new_slot_b.name: evaluate_slot(new_slot_b, eval_images).mean,
    }
    gains = {
        name: (None if prev is None else maps[name] - prev.map_per_slot.get(name, 0.0))
        for name in maps
    }
    added = len(mined_a) + len(mined_b) + len(synth_a) + len(synth_b)
    report = IterationReport(
        iteration=iteration,
        mined_per_slot={
            slot_a.name: _count_by_class(mined_a),
            slot_b.name: _count_by_class(mined_b),
        },
        synthetic_per_slot={
            slot_a.name: _count_by_class(synth_a),
            slot_b.name: _count_by_class(synth_b),
        },
        cumulative_images=(prev.cumulative_images if prev else 0) + added,
        map_per_slot=maps,
        gain_per_slot=gains,
    )
    return new_slot_a, new_slot_b, new_pool_a, new_pool_b, report


def should_stop(
    history: Sequence[IterationReport],
    epsilon: float = 0.0,
    deployment: str | None = None,
    max_iterations: int | None = None,
) -> bool:
    """Stop when the deployment slot's latest gain is <= epsilon (inclusive)
    or the iteration cap is reached. A lone report (no gain yet) never stops."""
    if not history:
        raise LogomineError("should_stop needs a non-empty history")
    last = history[-1]
    if max_iterations is not None and last.iteration >= max_iterations:
        return True
    if deployment is None:
        deployment = sorted(last.gain_per_slot)[-1]
    gain = last.gain_per_slot.get(deployment)
    if gain is None:
        return False
    return gain <= epsilon


@dataclass
class RunResult:
    reports: list[IterationReport]
    slots: tuple[DetectorSlot, DetectorSlot]
    mined: dict[str, list[AnnotatedImage]] = field(default_factory=dict)

    @property
    def final_map(self) -> dict[str, float]:
        return self.reports[-1].map_per_slot


def run(
    config: MiningConfig,
    classes: list[LogoClass],
    pool_images: Sequence[WebImage],
    eval_images: Sequence[AnnotatedImage],
    slot_a: DetectorSlot,
    slot_b: DetectorSlot,
    seed: int,
    synthesizer: Synthesizer | None = None,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Bootstrap both slots, iterate until the stop criterion fires.

    Writes ``iteration_<t>.report.json`` per iteration plus a final
    ``T_final_<slot>.manifest`` of each slot's mined set when ``out_dir`` is
    given; reports written before an aborting error stay on disk.
    """
    if not pool_images:
        raise LogomineError("run needs a non-empty pool")
    universe = {im.id: im for im in pool_images}
    if len(universe) != len(pool_images):
        raise LogomineError("pool image ids must be unique")
    out_path = Path(out_dir) if out_dir else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    if synthesizer is None:
        synthesizer = MetadataSynthesizer(classes)

    boot_set: list[AnnotatedImage] = []
    for cls in classes:
        boot_set.extend(synthesizer(cls, config.bootstrap_per_class, [], "bootstrap"))
    slot_a = bootstrap(slot_a, boot_set)
    slot_b = bootstrap(slot_b, boot_set)
    deployment = config.deployment or slot_b.name

    boot_counts = _count_by_class(boot_set)
    baseline = IterationReport(
        iteration=0,
        mined_per_slot={slot_a.name: {}, slot_b.name: {}},
        synthetic_per_slot={slot_a.name: dict(boot_counts), slot_b.name: dict(boot_counts)},
        cumulative_images=len(boot_set),
        map_per_slot={
            slot_a.name: evaluate_slot(slot_a, eval_images).mean,
            slot_b.name: evaluate_slot(slot_b, eval_images).mean,
        },
        gain_per_slot={slot_a.name: None, slot_b.name: None},
    )
    reports = [baseline]
    _persist_report(out_path, baseline)

    pool_a = PoolState.fresh(universe)
    pool_b = PoolState.fresh(universe)
    mined_total: dict[str, list[AnnotatedImage]] = {slot_a.name: [], slot_b.name: []}

    while True:
        slot_a, slot_b, pool_a, pool_b, report = colearn_iteration(
            slot_a,
            slot_b,
            pool_a,
            pool_b,
            config,
            universe,
            eval_images,
            classes,
            seed,
            synthesizer,
            prev=reports[-1],
            mined_sink=mined_total,
        )
        report.stop = should_stop(
            reports + [report], config.stop_epsilon, deployment, config.max_iterations
        )
        reports.append(report)
        _persist_report(out_path, report)
        if report.stop:
            break

    result = RunResult(
        reports=reports,
        slots=(slot_a, slot_b),
        mined={
            name: sorted(records, key=lambda r: r.image.id)
            for name, records in mined_total.items()
        },
    )
    if out_path is not None:
        for name, records in result.mined.items():
            save_manifest(records, out_path / f"T_final_{name}.manifest", classes)
    return result


def _persist_report(out_path: Path | None, report: IterationReport) -> None:
    if out_path is None:
        return
    path = out_path / f"iteration_{report.iteration}.report.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
