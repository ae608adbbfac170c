import sys
from pathlib import Path

try:
    import logomine  # noqa: F401
except ImportError:  # running from a checkout without install
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np
import pytest

from logomine.core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage


@pytest.fixture
def classes():
    return [
        LogoClass(id=1, name="acme"),
        LogoClass(id=2, name="bolt"),
        LogoClass(id=3, name="crane"),
    ]


@pytest.fixture
def web_image():
    def make(image_id="img-0", width=320, height=240, label=1, source="stream", pixels="x.png"):
        return WebImage(
            id=image_id, width=width, height=height, pixels=pixels,
            weak_label=label, source=source,
        )

    return make


@pytest.fixture
def annotated(web_image):
    def make(image_id="img-0", label=1, box=(10, 10, 50, 50), **kw):
        img = web_image(image_id=image_id, label=label, **kw)
        return AnnotatedImage(image=img, truths=((label, BoundingBox(*box)),))

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
