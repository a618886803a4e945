"""Cassette record/replay: deterministic offline re-runs of backend traffic.

A cassette is an ordered JSON array of {kind, digest, response_json}. The
digest is a SHA-256 over the canonicalized request: prompt text, image bytes,
caption, box — sampling parameters (temperature) and session tokens are
excluded, so replay tolerates config drift in those fields. Replay serves
responses strictly in order and verifies each digest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..geometry import BBox
from .base import (
    BackendError,
    BackendSet,
    ChatBackend,
    ChatRequest,
    EmbeddingBackend,
    GroundingBackend,
    GroundingResult,
    ProtocolViolation,
    SessionLost,
    TrackerBackend,
    check_vector,
)


class DigestMismatch(BackendError):
    """Replay request differs from the recorded one at the same position."""


class CassetteExhausted(BackendError):
    """More calls were made than the cassette holds."""


def _image_digest(img: Optional[np.ndarray]) -> Optional[str]:
    if img is None:
        return None
    arr = np.ascontiguousarray(img)
    h = hashlib.sha256()
    h.update(f"{arr.shape[1]}x{arr.shape[0]}:".encode("ascii"))
    h.update(arr.tobytes())
    return h.hexdigest()


def request_digest(kind: str, **fields) -> str:
    """Canonical request digest; field values must be JSON-serializable."""
    canon = {"kind": kind, **fields}
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _digest_for(kind: str, *, prompt: str = "", caption: str = "", text: str = "",
                img: Optional[np.ndarray] = None, box: Optional[BBox] = None) -> str:
    fields: dict = {}
    if prompt:
        fields["prompt"] = prompt
    if caption:
        fields["caption"] = caption
    if text:
        fields["text"] = text
    if img is not None:
        fields["image"] = _image_digest(img)
    if box is not None:
        fields["box"] = [repr(v) for v in box.as_tuple()]
    return request_digest(kind, **fields)


class Cassette:
    """In-memory ordered store of recorded calls."""

    def __init__(self, entries: Optional[list[dict]] = None):
        self.entries: list[dict] = entries if entries is not None else []

    def append(self, kind: str, digest: str, response: dict) -> None:
        self.entries.append({"kind": kind, "digest": digest, "response_json": response})

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.entries, indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Cassette":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list):
            raise ValueError(f"cassette {path} is not a JSON array")
        return cls(data)


# ---------------------------------------------------------------------------
# Recording wrappers
# ---------------------------------------------------------------------------

class RecordingChat:
    def __init__(self, inner: ChatBackend, cassette: Cassette):
        self._inner = inner
        self._cassette = cassette

    def complete(self, req: ChatRequest) -> str:
        text = self._inner.complete(req)
        digest = _digest_for("chat", prompt=req.prompt, img=req.image)
        self._cassette.append("chat", digest, {"text": text})
        return text


class RecordingGrounder:
    def __init__(self, inner: GroundingBackend, cassette: Cassette):
        self._inner = inner
        self._cassette = cassette

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult:
        result = self._inner.ground(img, caption)
        digest = _digest_for("ground", caption=caption, img=img)
        self._cassette.append("ground", digest, {
            "tokens": list(result.tokens),
            "boxes": [list(b.as_tuple()) for b in result.proposals],
            "scores": result.alignment.tolist(),
        })
        return result


class RecordingTracker:
    def __init__(self, inner: TrackerBackend, cassette: Cassette):
        self._inner = inner
        self._cassette = cassette

    def init(self, frame: np.ndarray, box: BBox) -> None:
        self._inner.init(frame, box)
        digest = _digest_for("tracker_init", img=frame, box=box)
        self._cassette.append("tracker_init", digest, {"ok": True})

    def predict(self, frame: np.ndarray) -> tuple[BBox, float]:
        box, score = self._inner.predict(frame)
        digest = _digest_for("tracker_predict", img=frame)
        self._cassette.append("tracker_predict", digest,
                              {"box": list(box.as_tuple()), "score": score})
        return box, score


class RecordingEmbedder:
    def __init__(self, inner: EmbeddingBackend, cassette: Cassette):
        self._inner = inner
        self._cassette = cassette

    @property
    def dim(self) -> Optional[int]:
        return self._inner.dim

    def embed_image(self, img: np.ndarray) -> np.ndarray:
        vec = self._inner.embed_image(img)
        digest = _digest_for("embed_image", img=img)
        self._cassette.append("embed_image", digest, {"vector": vec.tolist()})
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        vec = self._inner.embed_text(text)
        digest = _digest_for("embed_text", text=text)
        self._cassette.append("embed_text", digest, {"vector": vec.tolist()})
        return vec


# ---------------------------------------------------------------------------
# Replay wrappers
# ---------------------------------------------------------------------------

class CassetteReplayer:
    """Serves recorded responses in order, verifying kind and digest."""

    def __init__(self, cassette: Cassette):
        self._entries = cassette.entries
        self._pos = 0

    def next(self, kind: str, digest: str) -> dict:
        if self._pos >= len(self._entries):
            raise CassetteExhausted(
                f"cassette exhausted after {len(self._entries)} calls (next: {kind})")
        entry = self._entries[self._pos]
        idx = self._pos
        self._pos += 1
        if entry["kind"] != kind:
            raise DigestMismatch(
                f"call {idx}: expected kind {entry['kind']!r}, got {kind!r}")
        if entry["digest"] != digest:
            raise DigestMismatch(
                f"call {idx} ({kind}): request digest {digest[:12]}... does not match "
                f"recorded {entry['digest'][:12]}...")
        return entry["response_json"]

    @property
    def remaining(self) -> int:
        return len(self._entries) - self._pos


class ReplayChat:
    def __init__(self, replayer: CassetteReplayer):
        self._replayer = replayer

    def complete(self, req: ChatRequest) -> str:
        digest = _digest_for("chat", prompt=req.prompt, img=req.image)
        return self._replayer.next("chat", digest)["text"]


class ReplayGrounder:
    def __init__(self, replayer: CassetteReplayer):
        self._replayer = replayer

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult:
        digest = _digest_for("ground", caption=caption, img=img)
        data = self._replayer.next("ground", digest)
        try:
            proposals = [BBox(*b) for b in data["boxes"]]
            scores = np.asarray(data["scores"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"corrupt cassette grounding entry: {exc}")
        return GroundingResult(list(data["tokens"]), proposals, scores).validate()


class ReplayTracker:
    def __init__(self, replayer: CassetteReplayer):
        self._replayer = replayer
        self._initialized = False

    def init(self, frame: np.ndarray, box: BBox) -> None:
        digest = _digest_for("tracker_init", img=frame, box=box)
        self._replayer.next("tracker_init", digest)
        self._initialized = True

    def predict(self, frame: np.ndarray) -> tuple[BBox, float]:
        if not self._initialized:
            raise SessionLost("tracker predict called before init")
        digest = _digest_for("tracker_predict", img=frame)
        data = self._replayer.next("tracker_predict", digest)
        return BBox(*data["box"]), float(data["score"])


class ReplayEmbedder:
    def __init__(self, replayer: CassetteReplayer):
        self._replayer = replayer
        self._dim: Optional[int] = None

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    def embed_image(self, img: np.ndarray) -> np.ndarray:
        digest = _digest_for("embed_image", img=img)
        return self._vector(self._replayer.next("embed_image", digest))

    def embed_text(self, text: str) -> np.ndarray:
        digest = _digest_for("embed_text", text=text)
        return self._vector(self._replayer.next("embed_text", digest))

    def _vector(self, data: dict) -> np.ndarray:
        vec = check_vector(data["vector"], self._dim)
        if self._dim is None:
            self._dim = vec.shape[0]
        return vec


def record_backends(inner: BackendSet, cassette: Cassette) -> BackendSet:
    """Wrap every backend so each call is appended to the cassette in order."""
    return BackendSet(
        mllm=RecordingChat(inner.mllm, cassette),
        gvlm=RecordingGrounder(inner.gvlm, cassette),
        tracker=RecordingTracker(inner.tracker, cassette),
        embedder=RecordingEmbedder(inner.embedder, cassette),
    )


def replay_backends(cassette: Cassette) -> BackendSet:
    """Backends that serve the cassette's responses; no live calls possible."""
    replayer = CassetteReplayer(cassette)
    return BackendSet(
        mllm=ReplayChat(replayer),
        gvlm=ReplayGrounder(replayer),
        tracker=ReplayTracker(replayer),
        embedder=ReplayEmbedder(replayer),
    )
