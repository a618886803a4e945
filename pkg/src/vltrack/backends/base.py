"""Call contracts for the four external models and the shared wire types.

Backends come in three interchangeable flavors (HTTP client, scripted mock,
cassette record/replay); everything downstream of this module sees only the
protocols defined here. A backend instance serves one caller at a time;
concurrent sequences get independent instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from ..errors import EngineError
from ..geometry import BBox


class BackendError(EngineError):
    """Base class for backend call failures."""


class Transport(BackendError):
    """Network failure or server-side (5xx) error; retried."""


class Timeout(BackendError):
    """Call exceeded its deadline; retried."""


class Rejected(BackendError):
    """The request itself was refused (4xx); not retried."""


class ProtocolViolation(BackendError):
    """Response broke the wire contract (shape, range, or schema); fail fast."""


class SessionLost(BackendError):
    """Tracker session is gone or was never initialized; re-init required."""


@dataclass
class ChatRequest:
    """One multimodal chat turn: optional image plus a non-empty text prompt."""

    prompt: str
    image: Optional[np.ndarray] = None
    temperature: float = 0.0

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("ChatRequest.prompt must be non-empty")


@dataclass
class GroundingResult:
    """N region proposals plus an N x M token-alignment score matrix.

    ``tokens`` is the backend's tokenization of the caption it was given, so
    callers can map tokens back onto caption words. Scores live in [0, 1].
    """

    tokens: list[str]
    proposals: list[BBox]
    alignment: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.alignment = np.asarray(self.alignment, dtype=float)
        # JSON round-trips an empty matrix as []; restore its 2-D shape. Any
        # other mismatch is left for validate() to flag as ProtocolViolation.
        n, m = len(self.proposals), len(self.tokens)
        if self.alignment.size == 0 and n * m == 0:
            self.alignment = self.alignment.reshape(n, m)

    @property
    def n(self) -> int:
        return len(self.proposals)

    @property
    def m(self) -> int:
        return len(self.tokens)

    def validate(self) -> "GroundingResult":
        """Enforce shape and range invariants; raises ProtocolViolation."""
        n, m = self.n, self.m
        if self.alignment.shape != (n, m):
            raise ProtocolViolation(
                f"alignment shape {self.alignment.shape} != ({n} proposals, {m} tokens)")
        if n and m:
            if not np.isfinite(self.alignment).all():
                raise ProtocolViolation("alignment contains non-finite scores")
            lo, hi = float(self.alignment.min()), float(self.alignment.max())
            if lo < 0.0 or hi > 1.0:
                raise ProtocolViolation(f"alignment scores outside [0,1]: [{lo}, {hi}]")
        return self


def check_vector(values, dim: Optional[int]) -> np.ndarray:
    """Validate an embedding against the backend-declared dimension."""
    vec = np.asarray(values, dtype=float)
    if vec.ndim != 1:
        raise ProtocolViolation(f"embedding must be 1-D, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise ProtocolViolation(f"embedding length {vec.shape[0]} != declared dim {dim}")
    if not np.all(np.isfinite(vec)):
        raise ProtocolViolation("embedding contains non-finite entries")
    return vec


@runtime_checkable
class ChatBackend(Protocol):
    """Multimodal chat model: (image, prompt) -> full text reply."""

    def complete(self, req: ChatRequest) -> str: ...


@runtime_checkable
class GroundingBackend(Protocol):
    """Grounded vision-language model: (image, caption) -> proposals + scores."""

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult: ...


@runtime_checkable
class TrackerBackend(Protocol):
    """Single-object visual tracker; one session per instance.

    ``init`` must precede ``predict``; frames arrive in temporal order.
    """

    def init(self, frame: np.ndarray, box: BBox) -> None: ...

    def predict(self, frame: np.ndarray) -> tuple[BBox, float]: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    """Image/text encoder into a shared feature space.

    ``dim`` is the declared dimension, or None when unknown until first call.
    Vectors are not necessarily unit norm; callers normalize.
    """

    @property
    def dim(self) -> Optional[int]: ...

    def embed_image(self, img: np.ndarray) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


@dataclass
class BackendSet:
    """The four model handles one sequence run needs."""

    mllm: ChatBackend
    gvlm: GroundingBackend
    tracker: TrackerBackend
    embedder: EmbeddingBackend


def l2_normalize(vec: np.ndarray) -> Optional[np.ndarray]:
    """Unit-norm copy of ``vec``, or None for the zero vector."""
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not math.isfinite(norm):
        return None
    return vec / norm
