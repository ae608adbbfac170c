"""Wire-protocol client for external detector backends.

The slot where a real region-proposal or grid-regression network attaches.
Messages are length-prefixed JSON: a 4-byte big-endian unsigned length
followed by that many UTF-8 bytes, over a local TCP socket or the stdio of a
spawned child process.

    {"op": "detect", "image": "<path>"}
        -> {"detections": [{"class": "<name>", "score": 0.93,
                            "box": [x0, y0, x1, y1]}, ...]}
    {"op": "finetune", "manifest": "<path>"}
        -> {"ok": true}

Bootstrap reuses the finetune op; the server decides its own schedule from
the manifest size. detect is retried on transport failures up to the
configured count; finetune is not retried and a failure leaves the slot
unchanged.
"""

from __future__ import annotations

import json
import select
import socket
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..core.manifest import save_manifest
from ..core.types import (
    AnnotatedImage,
    BoundingBox,
    Detection,
    LogoClass,
    WebImage,
    classes_by_name,
    record_image,
)
from ..errors import LogomineError, MissingClassError, TransportError

_HEADER = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024


def write_frame(fh, payload: dict) -> bytes:
    """Encode and write one message; returns the raw body bytes."""
    body = json.dumps(payload, sort_keys=True).encode("utf-8")
    fh.write(_HEADER.pack(len(body)) + body)
    fh.flush()
    return body


def read_frame(fh, timeout: float | None = None) -> dict:
    header = _read_exactly(fh, _HEADER.size, timeout)
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise TransportError(f"frame of {length} bytes exceeds limit")
    return json.loads(_read_exactly(fh, length, timeout).decode("utf-8"))


def _read_exactly(fh, n: int, timeout: float | None) -> bytes:
    chunks = b""
    while len(chunks) < n:
        if timeout is not None:
            ready, _, _ = select.select([fh], [], [], timeout)
            if not ready:
                raise TransportError(f"read timed out after {timeout}s")
        chunk = fh.read(n - len(chunks))
        if not chunk:
            raise TransportError("peer closed the connection")
        chunks += chunk
    return chunks


@dataclass(frozen=True)
class TcpEndpoint:
    host: str
    port: int


@dataclass(frozen=True)
class StdioEndpoint:
    argv: tuple[str, ...]


class _Session:
    """One live connection: socket or child process, file-like r/w pair."""

    def __init__(self, endpoint: TcpEndpoint | StdioEndpoint, timeout: float):
        self.timeout = timeout
        self.proc = None
        if isinstance(endpoint, TcpEndpoint):
            sock = socket.create_connection((endpoint.host, endpoint.port), timeout=timeout)
            sock.setblocking(True)
            # unbuffered reader so select() sees exactly what read() will
            self.reader = sock.makefile("rb", buffering=0)
            self.writer = sock.makefile("wb")
            self._sock = sock
        else:
            self.proc = subprocess.Popen(
                list(endpoint.argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
            self.reader = self.proc.stdout
            self.writer = self.proc.stdin
            self._sock = None

    def roundtrip(self, payload: dict) -> dict:
        write_frame(self.writer, payload)
        return read_frame(self.reader, self.timeout)

    def close(self) -> None:
        for fh in (self.reader, self.writer):
            try:
                fh.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self.proc is not None:
            self.proc.terminate()
            self.proc.wait(timeout=5)


class ExternalDetector:
    """Client half of the wire protocol; session state is the live link."""

    def __init__(
        self,
        classes: list[LogoClass],
        endpoint: TcpEndpoint | StdioEndpoint,
        timeout: float = 10.0,
        retries: int = 2,
        spool_dir: str | None = None,
    ):
        self.classes = classes
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.spool_dir = spool_dir
        self._by_name = classes_by_name(classes)
        self._session: _Session | None = None
        self._sent = 0

    def _connect(self) -> _Session:
        if self._session is None:
            try:
                self._session = _Session(self.endpoint, self.timeout)
            except OSError as exc:
                raise TransportError(f"connect failed: {exc}") from exc
        return self._session

    def _reset(self) -> None:
        if self._session is not None:
            self._session.close()
            self._session = None

    def close(self) -> None:
        self._reset()

    def _parse_detections(self, payload: dict) -> list[Detection]:
        out = []
        for det in payload.get("detections", []):
            name = det["class"]
            cls = self._by_name.get(name)
            if cls is None:
                raise LogomineError(f"external backend returned unknown class {name!r}")
            x0, y0, x1, y1 = (int(round(v)) for v in det["box"])
            out.append(Detection(cls=cls.id, score=float(det["score"]), box=BoundingBox(x0, y0, x1, y1)))
        return out

    def detect(self, image: WebImage | AnnotatedImage) -> list[Detection]:
        base = record_image(image)
        if not isinstance(base.pixels, str):
            raise LogomineError(f"image {base.id}: external detect needs a path payload")
        message = {"op": "detect", "image": base.pixels}
        last: Exception | None = None
        attempts = 0
        for attempts in range(1, self.retries + 2):
            try:
                return self._parse_detections(self._connect().roundtrip(message))
            except (TransportError, OSError) as exc:
                last = exc
                self._reset()
        raise TransportError(f"detect failed: {last}", attempts=attempts)

    def _spool_manifest(self, records: Sequence[AnnotatedImage]) -> str:
        root = Path(self.spool_dir or tempfile.mkdtemp(prefix="logomine-wire-"))
        root.mkdir(parents=True, exist_ok=True)
        self.spool_dir = str(root)
        path = root / f"training_{self._sent:05d}.manifest"
        save_manifest(list(records), path, self.classes)
        return str(path)

    def _send_training(self, records: Sequence[AnnotatedImage]) -> "ExternalDetector":
        path = self._spool_manifest(records)
        try:
            reply = self._connect().roundtrip({"op": "finetune", "manifest": path})
        except (TransportError, OSError) as exc:
            self._reset()
            raise TransportError(f"finetune failed: {exc}") from exc
        if not reply.get("ok"):
            raise TransportError(f"finetune rejected: {reply!r}")
        self._sent += 1
        return self

    def fine_tuned(self, training: Sequence[AnnotatedImage]) -> "ExternalDetector":
        return self._send_training(training)

    def bootstrapped(self, synthetic: Sequence[AnnotatedImage]) -> "ExternalDetector":
        covered = {record_image(item).weak_label for item in synthetic}
        missing = [c.name for c in self.classes if c.id not in covered]
        if missing:
            raise MissingClassError(missing)
        return self._send_training(synthetic)
