"""Stochastic stand-in detector for desk-scale runs.

The backend models a detector's skill as one competence value per class.
Detection outcomes are keyed draws (seed, image id, class), so behaviour is
a pure function of state: two calls agree regardless of order, the same run
replays bit-identically, and raising competence only ever unlocks more
detections (monotone dynamics).

Generative model per image and class:

* the image's latent class fires with probability equal to the class
  competence, scoring near competence with a configurable spread and using
  the latent box;
* any absent class false-fires with a fixed per-class rate, scoring from a
  low-skewed power law with a pseudo-random box.

Learning (fine_tuned) folds a training batch into competence per class:

* each verified-clean mined image pulls competence toward 1 with a gain
  scaled by how informative the image is to this detector (one minus its own
  current score on it), so images it already detects confidently teach
  little;
* synthetic images pull competence toward a ceiling below 1 (rendering gap),
  with diminishing returns;
* each mislabelled image applies a penalty, amplified when it sits in this
  detector's own blind spot (it would false-fire there itself), i.e.
  training on one's own mistakes entrenches them more than inheriting
  someone else's.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core import rng as crng
from ..core.types import (
    AnnotatedImage,
    BoundingBox,
    Detection,
    LogoClass,
    WebImage,
    record_image,
)
from ..errors import LogomineError, MissingClassError

# draw-purpose salts
_TAG_HIT_FIRE = 0x11
_TAG_HIT_NORM = 0x12
_TAG_FF_FIRE = 0x21
_TAG_FF_SCORE = 0x22
_TAG_FF_BOX = 0x23


class LatentWorld:
    """Ground-truth oracle behind the simulation.

    Maps image id -> latent class (0 = no logo) and optionally a latent box.
    Shared by all slots of a run; holds the id-hash cache.
    """

    def __init__(
        self,
        latent: Mapping[str, int] | None = None,
        boxes: Mapping[str, tuple[int, int, int, int]] | None = None,
    ):
        self.latent: dict[str, int] = dict(latent or {})
        self.boxes: dict[str, tuple[int, int, int, int]] = dict(boxes or {})
        self._hash_cache: dict[str, int] = {}

    def latent_of(self, image_id: str) -> int:
        return self.latent.get(image_id, 0)

    def uhash(self, image_id: str) -> int:
        h = self._hash_cache.get(image_id)
        if h is None:
            h = crng.hash_id(image_id)
            self._hash_cache[image_id] = h
        return h

    def uhash_many(self, ids: Sequence[str]) -> np.ndarray:
        return np.array([self.uhash(i) for i in ids], dtype=np.uint64)

    def latent_box(self, image: WebImage) -> BoundingBox:
        coords = self.boxes.get(image.id)
        if coords is not None:
            return BoundingBox(*coords)
        # deterministic default: centered box covering half of each dimension
        w4, h4 = max(1, image.width // 4), max(1, image.height // 4)
        return BoundingBox(w4, h4, min(image.width, 3 * w4 + 1), min(image.height, 3 * h4 + 1))

    def save(self, path: str | os.PathLike) -> None:
        payload = {
            "latent": dict(sorted(self.latent.items())),
            "boxes": {k: list(v) for k, v in sorted(self.boxes.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=0, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LatentWorld":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            latent={k: int(v) for k, v in payload.get("latent", {}).items()},
            boxes={k: tuple(v) for k, v in payload.get("boxes", {}).items()},
        )


@dataclass(frozen=True)
class SimulatedDetectorParams:
    """Behaviour knobs for one simulated slot.

    ``false_fire`` and ``competence`` accept a scalar (broadcast over
    classes) or a per-class sequence. Co-learning slots should get distinct
    seeds and spreads so their errors are complementary.
    """

    seed: int = 0
    competence: float | Sequence[float] = 0.0
    false_fire: float | Sequence[float] = 0.05
    score_spread: float = 0.1
    clean_gain: float = 0.025
    noise_penalty: float = 0.01
    synth_gain: float = 0.0016
    synth_ceiling: float = 0.88
    entrenchment: float = 1.5
    min_informativeness: float = 0.05
    false_score_power: float = 3.0

    def __post_init__(self):
        if self.score_spread <= 0:
            raise LogomineError("score_spread must be > 0")
        for name in ("clean_gain", "synth_gain"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise LogomineError(f"{name} must be in [0,1)")
        if not 0.0 < self.synth_ceiling <= 1.0:
            raise LogomineError("synth_ceiling must be in (0,1]")


def _per_class(value: float | Sequence[float], m: int, name: str) -> np.ndarray:
    arr = np.full(m, float(value)) if np.isscalar(value) else np.asarray(value, dtype=float)
    if arr.shape != (m,):
        raise LogomineError(f"{name} must be scalar or length {m}")
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise LogomineError(f"{name} values must lie in [0,1]")
    return arr


class SimulatedDetector:
    """Immutable simulated backend; learning methods return new instances."""

    def __init__(
        self,
        params: SimulatedDetectorParams,
        classes: list[LogoClass],
        world: LatentWorld,
        competence: np.ndarray | None = None,
    ):
        self.params = params
        self.classes = classes
        self.world = world
        m = len(classes)
        if competence is None:
            competence = _per_class(params.competence, m, "competence")
        self.competence = np.clip(np.asarray(competence, dtype=float), 0.0, 1.0)
        self.false_fire = _per_class(params.false_fire, m, "false_fire")

    # -- keyed draw helpers -------------------------------------------------

    def _keys(self, hashes: np.ndarray, cls: int, tag: int, extra: int = 0) -> np.ndarray:
        return crng.combine(hashes, self.params.seed, cls * 0x10001 + tag, extra)

    def _hit_scores(self, hashes: np.ndarray, cls: int, extra: int = 0) -> np.ndarray:
        """Score of the latent-class detection per image; 0 where not firing."""
        kappa = self.competence[cls - 1]
        fire = crng.uniform_from(self._keys(hashes, cls, _TAG_HIT_FIRE, extra)) < kappa
        z = crng.normal_from(self._keys(hashes, cls, _TAG_HIT_NORM, extra))
        score = np.clip(kappa + self.params.score_spread * z, 0.0, 1.0)
        return np.where(fire, score, 0.0)

    def _false_scores(self, hashes: np.ndarray, cls: int) -> np.ndarray:
        """False-fire score per image; 0 where not firing."""
        fire = (
            crng.uniform_from(self._keys(hashes, cls, _TAG_FF_FIRE))
            < self.false_fire[cls - 1]
        )
        u = crng.uniform_from(self._keys(hashes, cls, _TAG_FF_SCORE))
        return np.where(fire, u**self.params.false_score_power, 0.0)

    def _false_boxes(self, images: Sequence[WebImage], cls: int) -> list[BoundingBox]:
        hashes = self.world.uhash_many([im.id for im in images])
        u = np.stack(
            [
                crng.uniform_from(self._keys(hashes, cls, _TAG_FF_BOX, j))
                for j in range(4)
            ]
        )
        widths = np.array([im.width for im in images], dtype=np.int64)
        heights = np.array([im.height for im in images], dtype=np.int64)
        w = np.minimum(np.maximum(1, np.rint((0.2 + 0.4 * u[0]) * widths)), widths).astype(int)
        h = np.minimum(np.maximum(1, np.rint((0.2 + 0.4 * u[1]) * heights)), heights).astype(int)
        x = np.rint(u[2] * (widths - w)).astype(int)
        y = np.rint(u[3] * (heights - h)).astype(int)
        return [
            BoundingBox(int(x[i]), int(y[i]), int(x[i] + w[i]), int(y[i] + h[i]))
            for i in range(len(images))
        ]

    def _false_box(self, image: WebImage, cls: int) -> BoundingBox:
        return self._false_boxes([image], cls)[0]

    # -- detection ----------------------------------------------------------

    def _truth_entries(self, image: WebImage | AnnotatedImage):
        """(class, box, salt) triples the hit model applies to this image."""
        if isinstance(image, AnnotatedImage):
            return [(c, b, k) for k, (c, b) in enumerate(image.truths)]
        lat = self.world.latent_of(image.id)
        if lat:
            return [(lat, self.world.latent_box(image), 0)]
        return []

    def detect(self, image: WebImage | AnnotatedImage) -> list[Detection]:
        base = record_image(image)
        hashes = np.array([self.world.uhash(base.id)], dtype=np.uint64)
        truth_entries = self._truth_entries(image)
        present = {c for c, _, _ in truth_entries}
        out: list[Detection] = []
        for cls in range(1, len(self.classes) + 1):
            for c, box, salt in truth_entries:
                if c != cls:
                    continue
                score = float(self._hit_scores(hashes, cls, salt)[0])
                if score > 0.0:
                    out.append(Detection(cls=cls, score=score, box=box))
            if cls not in present:
                score = float(self._false_scores(hashes, cls)[0])
                if score > 0.0:
                    out.append(Detection(cls=cls, score=score, box=self._false_box(base, cls)))
        return out

    def weak_label_scores(self, images: Sequence[WebImage]) -> np.ndarray:
        """Vectorized max_score of each image on its own weak label."""
        if not images:
            return np.zeros(0)
        ids = [im.id for im in images]
        hashes = self.world.uhash_many(ids)
        labels = np.array([im.weak_label for im in images], dtype=np.int64)
        latents = np.array([self.world.latent_of(i) for i in ids], dtype=np.int64)
        scores = np.zeros(len(images))
        for cls in np.unique(labels):
            cls = int(cls)
            sel = labels == cls
            is_true = latents[sel] == cls
            hit = self._hit_scores(hashes[sel], cls)
            false = self._false_scores(hashes[sel], cls)
            scores[sel] = np.where(is_true, hit, false)
        return scores

    def mine_candidates(
        self, images: Sequence[WebImage], threshold: float
    ) -> tuple[np.ndarray, np.ndarray, list[BoundingBox | None]]:
        """Bulk mining: (selected mask, weak-label scores, pseudo box per
        selected image). Equals the per-image detect() path exactly."""
        scores = self.weak_label_scores(images)
        selected = scores >= threshold
        boxes: list[BoundingBox | None] = [None] * len(images)
        false_by_class: dict[int, list[int]] = {}
        for i in np.flatnonzero(selected & (scores > 0.0)):
            im = images[int(i)]
            if self.world.latent_of(im.id) == im.weak_label:
                boxes[int(i)] = self.world.latent_box(im)
            else:
                false_by_class.setdefault(im.weak_label, []).append(int(i))
        for cls, indices in false_by_class.items():
            for i, box in zip(indices, self._false_boxes([images[i] for i in indices], cls)):
                boxes[i] = box
        return selected, scores, boxes

    def detect_batch(
        self, annotated: Sequence[AnnotatedImage]
    ) -> dict[str, list[Detection]]:
        """Vectorized detect() over an evaluation set, keyed by image id."""
        out: dict[str, list[Detection]] = {a.image.id: [] for a in annotated}
        if not annotated:
            return out
        ids = [a.image.id for a in annotated]
        hashes = self.world.uhash_many(ids)
        m = len(self.classes)
        truth_lookup: list[dict[int, list[tuple[int, BoundingBox]]]] = []
        for a in annotated:
            per_cls: dict[int, list[tuple[int, BoundingBox]]] = {}
            for k, (c, b) in enumerate(a.truths):
                per_cls.setdefault(c, []).append((k, b))
            truth_lookup.append(per_cls)
        for cls in range(1, m + 1):
            entries = [
                (i, salt, box)
                for i, per_cls in enumerate(truth_lookup)
                for salt, box in per_cls.get(cls, ())
            ]
            by_salt: dict[int, list[tuple[int, BoundingBox]]] = {}
            for i, salt, box in entries:
                by_salt.setdefault(salt, []).append((i, box))
            for salt, group in sorted(by_salt.items()):
                idx = np.array([g[0] for g in group], dtype=np.int64)
                scores = self._hit_scores(hashes[idx], cls, salt)
                for (i, box), score in zip(group, scores):
                    if score > 0.0:
                        out[ids[i]].append(Detection(cls=cls, score=float(score), box=box))
            absent = np.array(
                [cls not in per_cls for per_cls in truth_lookup], dtype=bool
            )
            if absent.any():
                idx = np.flatnonzero(absent)
                scores = self._false_scores(hashes[idx], cls)
                firing = np.flatnonzero(scores > 0.0)
                boxes = self._false_boxes(
                    [annotated[int(idx[k])].image for k in firing], cls
                )
                for k, box in zip(firing, boxes):
                    i = int(idx[int(k)])
                    out[ids[i]].append(
                        Detection(cls=cls, score=float(scores[int(k)]), box=box)
                    )
        return out

    # -- learning -----------------------------------------------------------

    def _copy_with(self, competence: np.ndarray) -> "SimulatedDetector":
        return SimulatedDetector(self.params, self.classes, self.world, competence)

    def fine_tuned(self, training: Sequence[AnnotatedImage]) -> "SimulatedDetector":
        p = self.params
        kappa = self.competence.copy()
        by_class: dict[int, dict[str, list[WebImage]]] = {}
        for item in training:
            image = record_image(item)
            groups = by_class.setdefault(image.weak_label, {"synth": [], "stream": []})
            key = "synth" if image.source == "synthetic" else "stream"
            groups[key].append(image)
        for cls, groups in sorted(by_class.items()):
            c = cls - 1
            stream = groups["stream"]
            clean = [im for im in stream if self.world.latent_of(im.id) == cls]
            noisy = [im for im in stream if self.world.latent_of(im.id) != cls]
            k = kappa[c]
            if clean:
                pre_scores = self.weak_label_scores(clean)
                weight = np.clip(1.0 - pre_scores, p.min_informativeness, 1.0)
                k = 1.0 - (1.0 - k) * float(np.prod(1.0 - p.clean_gain * weight))
            n_synth = len(groups["synth"])
            if n_synth and k < p.synth_ceiling:
                k = p.synth_ceiling - (p.synth_ceiling - k) * (1.0 - p.synth_gain) ** n_synth
            if noisy:
                hashes = self.world.uhash_many([im.id for im in noisy])
                blind = (
                    crng.uniform_from(self._keys(hashes, cls, _TAG_FF_FIRE))
                    < self.false_fire[c]
                )
                n_own = int(blind.sum())
                n_other = len(noisy) - n_own
                k -= p.noise_penalty * (n_other + (1.0 + p.entrenchment) * n_own)
            kappa[c] = min(1.0, max(0.0, k))
        return self._copy_with(kappa)

    def bootstrapped(self, synthetic: Sequence[AnnotatedImage]) -> "SimulatedDetector":
        """Reset competence and derive it from per-class synthetic counts."""
        p = self.params
        counts = np.zeros(len(self.classes), dtype=np.int64)
        for item in synthetic:
            image = record_image(item)
            counts[image.weak_label - 1] += 1
        missing = [c.name for c in self.classes if counts[c.id - 1] == 0]
        if missing:
            raise MissingClassError(missing)
        kappa = p.synth_ceiling * (1.0 - (1.0 - p.synth_gain) ** counts.astype(float))
        return self._copy_with(kappa)
