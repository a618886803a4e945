"""Scripted mock backends.

Mocks are pure with respect to their configuration: the same config and the
same call sequence always produce the same responses, which makes them usable
under the cassette recorder exactly like live backends.
"""

from __future__ import annotations

import hashlib
from collections import deque
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from ..geometry import BBox
from .base import (
    BackendError,
    ChatRequest,
    GroundingResult,
    SessionLost,
    check_vector,
)


class ScriptExhausted(BackendError):
    """A scripted mock ran out of configured responses."""


class ScriptedChat:
    """Chat mock: either a FIFO of replies or a prompt -> reply function."""

    def __init__(self, script: Union[Sequence[str], Callable[[ChatRequest], str]]):
        if callable(script):
            self._fn = script
            self._queue = None
        else:
            self._fn = None
            self._queue = deque(script)
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        self.calls += 1
        if self._fn is not None:
            return self._fn(req)
        if not self._queue:
            raise ScriptExhausted("ScriptedChat queue is empty")
        return self._queue.popleft()


class ScriptedGrounder:
    """Grounding mock: caption -> result mapping, or an (img, caption) function.

    Results are validated on the way out, so a misconfigured shape surfaces
    as ProtocolViolation exactly like a live backend would.
    """

    def __init__(self, script: Union[Mapping[str, GroundingResult],
                                     Callable[[np.ndarray, str], GroundingResult]]):
        self._script = script
        self.calls = 0

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult:
        self.calls += 1
        if callable(self._script):
            result = self._script(img, caption)
        else:
            try:
                result = self._script[caption]
            except KeyError:
                raise ScriptExhausted(f"no scripted grounding for caption {caption!r}")
        return result.validate()


class ScriptedTracker:
    """Oracle tracker replaying a per-frame box list.

    ``init`` consumes the first frame; each ``predict`` returns the next box.
    """

    def __init__(self, boxes: Sequence[BBox], confidences: Optional[Sequence[float]] = None):
        self._boxes = list(boxes)
        self._conf = list(confidences) if confidences is not None else None
        self._pos: Optional[int] = None

    def init(self, frame: np.ndarray, box: BBox) -> None:
        self._pos = 0

    def predict(self, frame: np.ndarray) -> tuple[BBox, float]:
        if self._pos is None:
            raise SessionLost("tracker predict called before init")
        if self._pos >= len(self._boxes):
            raise ScriptExhausted("ScriptedTracker ran out of boxes")
        box = self._boxes[self._pos]
        conf = self._conf[self._pos] if self._conf is not None else 1.0
        self._pos += 1
        return box, conf


def drifting_boxes(groundtruth: Sequence[BBox], dx: float, dy: float) -> list[BBox]:
    """Per-frame boxes for a tracker that drifts linearly off the groundtruth.

    The k-th predict call (frame k+1, 1-based) returns groundtruth[k] shifted
    by (k*dx, k*dy); the drift grows each frame.
    """
    return [g.shifted(k * dx, k * dy) for k, g in enumerate(groundtruth[1:], start=1)]


class DriftingTracker(ScriptedTracker):
    """Tracker mock that drifts off the groundtruth by (t*dx, t*dy) at frame t."""

    def __init__(self, groundtruth: Sequence[BBox], dx: float, dy: float):
        super().__init__(drifting_boxes(groundtruth, dx, dy))


class ScriptedEmbedder:
    """Embedding mock built from two pure functions."""

    def __init__(self, image_fn: Callable[[np.ndarray], np.ndarray],
                 text_fn: Callable[[str], np.ndarray], dim: int):
        self._image_fn = image_fn
        self._text_fn = text_fn
        self._dim = dim

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    def embed_image(self, img: np.ndarray) -> np.ndarray:
        return check_vector(self._image_fn(img), self._dim)

    def embed_text(self, text: str) -> np.ndarray:
        return check_vector(self._text_fn(text), self._dim)


def _text_hash_vector(text: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    needed = (dim * 4 + len(digest) - 1) // len(digest)
    raw = (digest * needed)[: dim * 4]
    words = np.frombuffer(raw, dtype=np.uint32).astype(float)
    return words / np.iinfo(np.uint32).max


class MeanColorEmbedder(ScriptedEmbedder):
    """4-dim embedder hashing an image to its mean color plus gray spread.

    Deterministic across calls; text falls back to a stable hash vector.
    """

    DIM = 4

    def __init__(self):
        super().__init__(self._image_vec, self._text_vec, self.DIM)

    @staticmethod
    def _image_vec(img: np.ndarray) -> np.ndarray:
        pixels = img.reshape(-1, 3).astype(float)
        mean = pixels.mean(axis=0) / 255.0
        spread = float(pixels.mean(axis=1).std()) / 255.0
        return np.array([mean[0], mean[1], mean[2], spread])

    @staticmethod
    def _text_vec(text: str) -> np.ndarray:
        return _text_hash_vector(text, MeanColorEmbedder.DIM)
