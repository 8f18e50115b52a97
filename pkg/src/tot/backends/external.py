"""External-process backends speaking newline-delimited JSON over stdio.

One request is in flight per connection at a time.  The engine writes crops
and inputs as temporary PNGs and sends paths; feature replies point at TOTF
tensor files.  Timeouts and malformed replies surface as errors carrying the
raw reply bytes.
"""

from __future__ import annotations

import itertools
import json
import os
import queue
import shlex
import shutil
import subprocess
import tempfile
import threading

import numpy as np

from ..domain import Box, Prediction
from ..errors import (
    BackendError,
    BackendTimeout,
    HandshakeError,
    InvalidBox,
    SpawnError,
)
from ..preprocess import write_png
from ..symbolizer import FeatureMap
from .tensorfile import read_feature_tensor

PROTO_VERSION = 1
DEFAULT_TIMEOUT = 120.0


class ExternalBackend:
    """Predictor/segmenter backed by a subprocess wire-protocol peer."""

    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._tmpdir = tempfile.mkdtemp(prefix="tot-backend-")
        try:
            self.proc = subprocess.Popen(
                args,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise SpawnError(f"cannot start backend {args!r}: {e}") from e
        self._replies: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self.capabilities = self._handshake()

    def _pump(self):
        for line in self.proc.stdout:
            self._replies.put(line)
        self._replies.put(None)

    def _send(self, obj: dict) -> None:
        try:
            self.proc.stdin.write(json.dumps(obj) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BackendError(f"backend pipe closed: {e}") from e

    def _recv(self) -> dict:
        try:
            line = self._replies.get(timeout=self.timeout)
        except queue.Empty:
            raise BackendTimeout(
                f"no reply within {self.timeout}s"
            ) from None
        if line is None:
            raise BackendError("backend closed its output stream")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise BackendError(f"malformed reply: {e}", raw=line) from e
        if not isinstance(obj, dict):
            raise BackendError("reply is not a JSON object", raw=line)
        return obj

    def _handshake(self) -> frozenset[str]:
        try:
            self._send({"op": "hello", "proto": PROTO_VERSION})
            reply = self._recv()
        except BackendError as e:
            raise HandshakeError(f"handshake failed: {e}", raw=e.raw) from e
        if reply.get("op") != "hello" or reply.get("proto") != PROTO_VERSION:
            raise HandshakeError(
                f"bad handshake reply: {reply}", raw=json.dumps(reply)
            )
        caps = reply.get("capabilities", [])
        if not isinstance(caps, list):
            raise HandshakeError(f"bad capabilities: {caps!r}", raw=json.dumps(reply))
        return frozenset(caps)

    def _request(self, op: str, **fields) -> dict:
        with self._lock:
            rid = next(self._ids)
            self._send({"op": op, "id": rid, **fields})
            reply = self._recv()
        if reply.get("op") == "error":
            raise BackendError(
                f"backend error for {op}: {reply.get('message')}",
                raw=json.dumps(reply),
            )
        if reply.get("op") != "result" or reply.get("id") != rid:
            raise BackendError(
                f"unexpected reply to {op} (id {rid}): {reply}",
                raw=json.dumps(reply),
            )
        return reply

    def _stage_image(self, image: np.ndarray) -> str:
        fd, path = tempfile.mkstemp(suffix=".png", dir=self._tmpdir)
        os.close(fd)
        write_png(image, path)
        return path

    def _require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise BackendError(f"backend lacks capability {capability!r}")

    def predict(self, image: np.ndarray) -> list[Prediction]:
        self._require("predict")
        path = self._stage_image(image)
        try:
            reply = self._request("predict", image=path)
        finally:
            os.unlink(path)
        classes = reply.get("classes")
        scores = reply.get("scores")
        if not isinstance(classes, list) or not isinstance(scores, list) or len(
            classes
        ) != len(scores):
            raise BackendError(f"bad predict reply: {reply}", raw=json.dumps(reply))
        return [Prediction(class_id=int(c), score=float(s)) for c, s in zip(classes, scores)]

    def features(self, image: np.ndarray) -> FeatureMap:
        self._require("features")
        path = self._stage_image(image)
        try:
            reply = self._request("features", image=path)
        finally:
            os.unlink(path)
        tensor_path = reply.get("tensor")
        if not isinstance(tensor_path, str):
            raise BackendError(f"bad features reply: {reply}", raw=json.dumps(reply))
        return read_feature_tensor(tensor_path)

    @property
    def has_features(self) -> bool:
        return "features" in self.capabilities

    def segment(self, image: np.ndarray, prompt: str) -> list[tuple[Box, float]]:
        self._require("segment")
        path = self._stage_image(image)
        try:
            reply = self._request("segment", image=path, prompt=prompt)
        finally:
            os.unlink(path)
        boxes = reply.get("boxes")
        scores = reply.get("scores")
        if not isinstance(boxes, list) or not isinstance(scores, list) or len(boxes) != len(scores):
            raise BackendError(f"bad segment reply: {reply}", raw=json.dumps(reply))
        out = []
        for coords, score in zip(boxes, scores):
            try:
                out.append((Box(*[int(c) for c in coords]), float(score)))
            except (TypeError, InvalidBox) as e:
                raise BackendError(
                    f"bad box in segment reply: {coords!r} ({e})", raw=json.dumps(reply)
                ) from e
        return out

    def close(self) -> None:
        try:
            if self.proc.stdin and not self.proc.stdin.closed:
                self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()
        shutil.rmtree(self._tmpdir, ignore_errors=True)

    def __enter__(self) -> "ExternalBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def external_backend(command: str | list[str], timeout: float = DEFAULT_TIMEOUT) -> ExternalBackend:
    """Spawn a wire-protocol subprocess and complete the handshake."""
    return ExternalBackend(command, timeout=timeout)
