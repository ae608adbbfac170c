import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logomine.core.manifest import (
    load_classes,
    load_manifest,
    save_classes,
    save_manifest,
)
from logomine.core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage
from logomine.errors import LogomineError, ManifestError

CLASSES = [LogoClass(1, "acme"), LogoClass(2, "bolt"), LogoClass(3, "crane")]


def _write(tmp_path, text):
    path = tmp_path / "m.manifest"
    path.write_text(text, encoding="utf-8")
    return path


def test_three_line_manifest_order_preserved(tmp_path):
    text = (
        "a\tp/a.png\t200\t100\tacme\tstream\n"
        "b\tp/b.png\t300\t200\tbolt\tstream\n"
        "c\tp/c.png\t400\t300\tcrane\tsynthetic\n"
    )
    records = load_manifest(_write(tmp_path, text), CLASSES)
    assert [r.id for r in records] == ["a", "b", "c"]
    assert [r.weak_label for r in records] == [1, 2, 3]


def test_empty_file_gives_empty_list(tmp_path):
    assert load_manifest(_write(tmp_path, ""), CLASSES) == []


def test_bad_box_reports_line_number(tmp_path):
    text = (
        "a\tp/a.png\t200\t100\tacme\tstream\n"
        "b\tp/b.png\t300\t200\tbolt\tstream\tbolt:50,10,20,60\n"
    )
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(_write(tmp_path, text), CLASSES)
    assert "line 2" in str(excinfo.value)


def test_unknown_class_names_token(tmp_path):
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(_write(tmp_path, "a\tp.png\t200\t100\tzorb\tstream\n"), CLASSES)
    assert "zorb" in str(excinfo.value)


def test_annotated_round_trip(tmp_path):
    img = WebImage(id="t1", width=640, height=480, pixels="img/t1.png", weak_label=2)
    record = AnnotatedImage(
        image=img,
        truths=((2, BoundingBox(10, 20, 110, 220)), (1, BoundingBox(0, 0, 5, 5))),
    )
    path = tmp_path / "ann.manifest"
    save_manifest([record], path, CLASSES)
    (loaded,) = load_manifest(path, CLASSES)
    assert loaded == record


def test_empty_truths_survive_round_trip(tmp_path):
    record = AnnotatedImage(
        image=WebImage(id="bg", width=64, height=64, pixels="bg.png", weak_label=1)
    )
    path = tmp_path / "bg.manifest"
    save_manifest([record], path, CLASSES)
    (loaded,) = load_manifest(path, CLASSES)
    assert isinstance(loaded, AnnotatedImage)
    assert loaded.truths == ()


def test_double_save_is_byte_identical(tmp_path):
    records = [
        WebImage(id=f"i{k}", width=100 + k, height=200, pixels=f"p/{k}.png", weak_label=1)
        for k in range(100)
    ]
    p1, p2 = tmp_path / "one.manifest", tmp_path / "two.manifest"
    save_manifest(records, p1, CLASSES)
    save_manifest(records, p2, CLASSES)
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert digest(p1) == digest(p2)


def test_in_memory_pixels_refuse_to_serialize(tmp_path):
    import numpy as np

    record = WebImage(id="m", width=4, height=4, pixels=np.zeros((4, 4, 3)), weak_label=1)
    with pytest.raises(LogomineError):
        save_manifest([record], tmp_path / "x.manifest", CLASSES)


_ids = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x7E),
    min_size=1,
    max_size=12,
)


@st.composite
def records(draw):
    width = draw(st.integers(1, 2000))
    height = draw(st.integers(1, 2000))
    image = WebImage(
        id=draw(_ids),
        width=width,
        height=height,
        pixels=draw(_ids) + ".png",
        weak_label=draw(st.integers(1, 3)),
        source=draw(st.sampled_from(["stream", "synthetic", "external"])),
    )
    if not draw(st.booleans()):
        return image
    truths = []
    for _ in range(draw(st.integers(0, 3))):
        x0 = draw(st.integers(0, width - 1))
        y0 = draw(st.integers(0, height - 1))
        x1 = draw(st.integers(x0 + 1, width))
        y1 = draw(st.integers(y0 + 1, height))
        truths.append((draw(st.integers(1, 3)), BoundingBox(x0, y0, x1, y1)))
    return AnnotatedImage(image=image, truths=tuple(truths))


@settings(max_examples=60, deadline=None)
@given(st.lists(records(), max_size=20))
def test_round_trip_property(tmp_path_factory, batch):
    path = tmp_path_factory.mktemp("mf") / "r.manifest"
    save_manifest(batch, path, CLASSES)
    assert load_manifest(path, CLASSES) == batch


def test_class_registry_round_trip(tmp_path):
    classes = [
        LogoClass(1, "acme", ("icons/acme.png",)),
        LogoClass(2, "bolt", ("icons/b1.png", "icons/b2.png")),
    ]
    path = tmp_path / "classes.tsv"
    save_classes(classes, path)
    assert load_classes(path) == classes


def test_class_registry_rejects_sparse_ids(tmp_path):
    path = tmp_path / "classes.tsv"
    path.write_text("1\tacme\n3\tbolt\n", encoding="utf-8")
    with pytest.raises(LogomineError):
        load_classes(path)
