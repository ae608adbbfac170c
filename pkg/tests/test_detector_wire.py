import json
import socket
import struct
import sys
import threading

import pytest

from logomine.core.manifest import load_manifest
from logomine.core.types import AnnotatedImage, BoundingBox, LogoClass, WebImage
from logomine.detector.base import DetectorSlot, bootstrap, detect, fine_tune
from logomine.detector.external import (
    ExternalDetector,
    StdioEndpoint,
    TcpEndpoint,
    read_frame,
    write_frame,
)
from logomine.errors import MissingClassError, TransportError

CLASSES = [LogoClass(1, "acme"), LogoClass(2, "bolt")]
HEADER = struct.Struct(">I")


class StubServer(threading.Thread):
    """Loopback detector server speaking the length-prefixed JSON protocol."""

    def __init__(self, detections=None, reply_ok=True, hang=False):
        super().__init__(daemon=True)
        self.detections = detections or []
        self.reply_ok = reply_ok
        self.hang = hang
        self.received = []
        self.raw_frames = []
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.port = self.sock.getsockname()[1]

    def run(self):
        try:
            conn, _ = self.sock.accept()
        except OSError:
            return
        rfile = conn.makefile("rb")
        wfile = conn.makefile("wb")
        try:
            while True:
                header = rfile.read(HEADER.size)
                if len(header) < HEADER.size:
                    return
                (length,) = HEADER.unpack(header)
                body = rfile.read(length)
                self.raw_frames.append(body)
                message = json.loads(body.decode("utf-8"))
                self.received.append(message)
                if self.hang:
                    return  # never reply
                if message["op"] == "detect":
                    write_frame(wfile, {"detections": self.detections})
                elif message["op"] == "finetune":
                    write_frame(wfile, {"ok": self.reply_ok})
        except (OSError, ValueError):
            pass
        finally:
            conn.close()

    def close(self):
        self.sock.close()


@pytest.fixture
def image(tmp_path):
    path = tmp_path / "img.png"
    path.write_bytes(b"\x89PNG fake")
    return WebImage(id="im1", width=100, height=100, pixels=str(path), weak_label=1)


def make_client(server, tmp_path, **kw):
    kw.setdefault("timeout", 2.0)
    kw.setdefault("retries", 1)
    return ExternalDetector(
        CLASSES, TcpEndpoint("127.0.0.1", server.port), spool_dir=str(tmp_path / "spool"), **kw
    )


def test_detect_round_trip(image, tmp_path):
    server = StubServer(
        detections=[{"class": "acme", "score": 0.93, "box": [5, 6, 50, 60]}]
    )
    server.start()
    client = make_client(server, tmp_path)
    slot = DetectorSlot("ext", "external", client, initialized=True)
    dets = detect(slot, image)
    assert len(dets) == 1
    assert dets[0].cls == 1
    assert dets[0].score == 0.93
    assert dets[0].box == BoundingBox(5, 6, 50, 60)
    assert server.received[0] == {"op": "detect", "image": image.pixels}
    client.close()
    server.close()


def test_finetune_sends_manifest_and_acks(image, tmp_path):
    server = StubServer()
    server.start()
    client = make_client(server, tmp_path)
    slot = DetectorSlot("ext", "external", client, initialized=True)
    batch = [AnnotatedImage(image=image, truths=((1, BoundingBox(0, 0, 10, 10)),))]
    new_slot = fine_tune(slot, batch)
    assert new_slot.initialized
    message = server.received[0]
    assert message["op"] == "finetune"
    # the manifest the server sees parses back to exactly the batch sent
    records = load_manifest(message["manifest"], CLASSES)
    assert records == batch
    client.close()
    server.close()


def test_wire_frames_byte_exact(image, tmp_path):
    server = StubServer()
    server.start()
    client = make_client(server, tmp_path)
    slot = DetectorSlot("ext", "external", client, initialized=True)
    batch = [AnnotatedImage(image=image, truths=((1, BoundingBox(0, 0, 10, 10)),))]
    fine_tune(slot, batch)
    client.close()
    server.join(timeout=2)
    expected = json.dumps(
        {"op": "finetune", "manifest": server.received[0]["manifest"]}, sort_keys=True
    ).encode("utf-8")
    assert server.raw_frames[0] == expected
    server.close()


def test_bootstrap_requires_class_coverage(image, tmp_path):
    server = StubServer()
    server.start()
    client = make_client(server, tmp_path)
    slot = DetectorSlot("ext", "external", client)
    only_acme = [AnnotatedImage(image=image, truths=((1, BoundingBox(0, 0, 5, 5)),))]
    with pytest.raises(MissingClassError):
        bootstrap(slot, only_acme)
    bolt_img = WebImage(id="im2", width=50, height=50, pixels=image.pixels, weak_label=2)
    full = only_acme + [AnnotatedImage(image=bolt_img, truths=((2, BoundingBox(0, 0, 5, 5)),))]
    booted = bootstrap(slot, full)
    assert booted.initialized
    assert server.received[0]["op"] == "finetune"
    client.close()
    server.close()


def test_detect_retries_then_raises_with_attempt_count(image, tmp_path):
    # nothing listens on this port: every attempt fails to connect
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    client = ExternalDetector(
        CLASSES, TcpEndpoint("127.0.0.1", port), timeout=0.3, retries=2
    )
    slot = DetectorSlot("ext", "external", client, initialized=True)
    with pytest.raises(TransportError) as excinfo:
        detect(slot, image)
    assert excinfo.value.attempts == 3


def test_finetune_timeout_leaves_slot_unchanged(image, tmp_path):
    server = StubServer(hang=True)
    server.start()
    client = make_client(server, tmp_path, timeout=0.3, retries=0)
    slot = DetectorSlot("ext", "external", client, initialized=True)
    batch = [AnnotatedImage(image=image, truths=((1, BoundingBox(0, 0, 10, 10)),))]
    with pytest.raises(TransportError):
        fine_tune(slot, batch)
    assert slot.impl is client  # caller's slot untouched
    client.close()
    server.close()


STDIO_SERVER = r"""
import json, struct, sys
header = struct.Struct(">I")
while True:
    raw = sys.stdin.buffer.read(header.size)
    if len(raw) < header.size:
        break
    (n,) = header.unpack(raw)
    msg = json.loads(sys.stdin.buffer.read(n).decode("utf-8"))
    if msg["op"] == "detect":
        reply = {"detections": [{"class": "bolt", "score": 0.5, "box": [1, 1, 9, 9]}]}
    else:
        reply = {"ok": True}
    body = json.dumps(reply).encode("utf-8")
    sys.stdout.buffer.write(header.pack(len(body)) + body)
    sys.stdout.buffer.flush()
"""


def test_stdio_endpoint_round_trip(image, tmp_path):
    client = ExternalDetector(
        CLASSES,
        StdioEndpoint((sys.executable, "-u", "-c", STDIO_SERVER)),
        timeout=5.0,
        spool_dir=str(tmp_path / "spool"),
    )
    slot = DetectorSlot("ext", "external", client, initialized=True)
    dets = detect(slot, image)
    assert dets[0].cls == 2 and dets[0].score == 0.5
    batch = [AnnotatedImage(image=image, truths=((1, BoundingBox(0, 0, 10, 10)),))]
    assert fine_tune(slot, batch).initialized
    client.close()


def test_frame_codec_round_trip():
    import io

    buf = io.BytesIO()
    payload = {"op": "detect", "image": "x/y.png"}
    body = write_frame(buf, payload)
    assert len(body) == len(buf.getvalue()) - HEADER.size
    buf.seek(0)
    assert read_frame(buf) == payload
