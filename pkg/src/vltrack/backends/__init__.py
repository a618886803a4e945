"""Pluggable model backends: contracts, HTTP clients, mocks, record/replay."""

from .base import (
    BackendError,
    BackendSet,
    ChatBackend,
    ChatRequest,
    EmbeddingBackend,
    GroundingBackend,
    GroundingResult,
    ProtocolViolation,
    Rejected,
    SessionLost,
    Timeout,
    TrackerBackend,
    Transport,
    l2_normalize,
)
from .cassette import (
    Cassette,
    CassetteExhausted,
    DigestMismatch,
    record_backends,
    replay_backends,
)
from .http import (
    HttpChatBackend,
    HttpEmbeddingBackend,
    HttpGroundingBackend,
    HttpTrackerBackend,
)
from .mock import (
    DriftingTracker,
    MeanColorEmbedder,
    ScriptedChat,
    ScriptedEmbedder,
    ScriptedGrounder,
    ScriptedTracker,
    ScriptExhausted,
    drifting_boxes,
)

__all__ = [
    "BackendError",
    "BackendSet",
    "Cassette",
    "CassetteExhausted",
    "ChatBackend",
    "ChatRequest",
    "DigestMismatch",
    "DriftingTracker",
    "EmbeddingBackend",
    "GroundingBackend",
    "GroundingResult",
    "HttpChatBackend",
    "HttpEmbeddingBackend",
    "HttpGroundingBackend",
    "HttpTrackerBackend",
    "MeanColorEmbedder",
    "ProtocolViolation",
    "Rejected",
    "ScriptExhausted",
    "ScriptedChat",
    "ScriptedEmbedder",
    "ScriptedGrounder",
    "ScriptedTracker",
    "SessionLost",
    "Timeout",
    "TrackerBackend",
    "Transport",
    "drifting_boxes",
    "l2_normalize",
    "record_backends",
    "replay_backends",
]
