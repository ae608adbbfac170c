from .manifest import load_manifest, save_manifest
from .rng import derive_seed, make_rng
from .types import (
    AnnotatedImage,
    BoundingBox,
    Detection,
    LogoClass,
    ManifestRecord,
    PoolState,
    WebImage,
    classes_by_id,
    classes_by_name,
    record_image,
    validate_classes,
)

__all__ = [
    "AnnotatedImage",
    "BoundingBox",
    "Detection",
    "LogoClass",
    "ManifestRecord",
    "PoolState",
    "WebImage",
    "classes_by_id",
    "classes_by_name",
    "derive_seed",
    "load_manifest",
    "make_rng",
    "record_image",
    "save_manifest",
    "validate_classes",
]
