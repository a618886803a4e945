"""Semantic proposal tracking.

On the first frame: ask the chat model whether the boxed target is suitable
for text-based tracking, and if so ground the combined foreground/background
caption once to split its tokens into foreground and background sets. The
partition is frozen for the sequence. Per frame, grounded proposals are
classified through that partition and merged with the visual tracker's box.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .backends.base import ChatBackend, ChatRequest, GroundingBackend, GroundingResult
from .errors import EngineError
from .geometry import BBox, annotate, default_thickness, iou
from .rpo import DescriptionPair, RpoConfig, segment_words


class CaptionMismatch(EngineError):
    """Frame grounding token count differs from the frozen partition."""


class Source(str, Enum):
    GROUNDED = "grounded"
    VISUAL_TRACKER = "visual_tracker"


@dataclass(frozen=True)
class Proposal:
    box: BBox
    source: Source


@dataclass
class FrameProposals:
    """Per-frame foreground candidates (at most one from the visual tracker)
    and background boxes."""

    fore: list[Proposal]
    back: list[BBox]


@dataclass(frozen=True)
class TokenPartition:
    """Frozen template-time assignment of caption tokens to fore/back sets."""

    caption: str
    tokens: tuple[str, ...]
    fore_token_indices: frozenset[int]
    back_token_indices: frozenset[int]

    def __post_init__(self):
        if self.fore_token_indices & self.back_token_indices:
            raise ValueError("token partition sets must be disjoint")
        for idx in self.fore_token_indices | self.back_token_indices:
            if not 0 <= idx < len(self.tokens):
                raise ValueError(f"token index {idx} out of range")

    @property
    def m(self) -> int:
        return len(self.tokens)

    def to_json(self) -> str:
        return json.dumps({
            "caption": self.caption,
            "tokens": list(self.tokens),
            "fore": sorted(self.fore_token_indices),
            "back": sorted(self.back_token_indices),
        }, sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def concat(fore: str, back: str) -> tuple[str, list[tuple[int, int]]]:
    """Join all foreground then background words with '. ', ending in '.'.

    Returns the caption and each word's character range within it.
    """
    if not fore.strip():
        raise ValueError("foreground description must be non-empty")
    words = segment_words(fore) + segment_words(back)
    spans: list[tuple[int, int]] = []
    pieces: list[str] = []
    pos = 0
    for i, w in enumerate(words):
        spans.append((pos, pos + len(w)))
        pieces.append(w)
        pos += len(w) + 2  # ". " separator
    caption = ". ".join(pieces) + "."
    return caption, spans


SUITABILITY_PROMPT = (
    "You are looking at the first frame of a video. One object is marked with a "
    "green bounding box; it is the object that must be tracked.\n"
    "Judge whether this object can be located from a short text description "
    "alone: it should be clearly visible, reasonably sized, and describable in "
    "words that distinguish it from the rest of the scene.\n"
    "Reply with exactly one line, nothing else:\n"
    "VERDICT: SUITABLE    or    VERDICT: UNSUITABLE"
)

_VERDICT_RE = re.compile(r"verdict\s*[:\-]?\s*(\w+)", re.IGNORECASE)


def suitability_gate(annotated_first_frame: np.ndarray, mllm: ChatBackend) -> bool:
    """Ask whether semantic tracking should run at all; fails open (True)."""
    reply = mllm.complete(ChatRequest(prompt=SUITABILITY_PROMPT,
                                      image=annotated_first_frame))
    verdicts = _VERDICT_RE.findall(reply)
    word = verdicts[-1].upper() if verdicts else ""
    if not word:
        upper = reply.upper()
        if re.search(r"\bUNSUITABLE\b", upper):
            return False
        if re.search(r"\bSUITABLE\b", upper):
            return True
        return True
    if word == "UNSUITABLE":
        return False
    if word == "SUITABLE":
        return True
    return True


def partition_tokens(template_grounding: GroundingResult, gt: BBox,
                     cfg: RpoConfig, caption: str = "") -> TokenPartition:
    """Split caption tokens into fore/back sets from the template grounding.

    A token is foreground when some proposal matches it above theta2 and
    overlaps the groundtruth above theta1; otherwise it is background when
    some matching proposal falls below theta3. Computed once per sequence.
    """
    g = template_grounding
    ious = np.array([iou(p, gt) for p in g.proposals], dtype=float)
    fore: set[int] = set()
    back: set[int] = set()
    if g.n:
        matches = g.alignment > cfg.theta2  # (N, M)
        fore_rows = ious > cfg.theta1
        back_rows = ious < cfg.theta3
        for m in range(g.m):
            col = matches[:, m]
            if bool(np.any(col & fore_rows)):
                fore.add(m)
            elif bool(np.any(col & back_rows)):
                back.add(m)
    return TokenPartition(
        caption=caption,
        tokens=tuple(g.tokens),
        fore_token_indices=frozenset(fore),
        back_token_indices=frozenset(back),
    )


def classify_frame(frame_grounding: GroundingResult, partition: TokenPartition,
                   vt_box: Optional[BBox], cfg: RpoConfig) -> FrameProposals:
    """Assign grounded proposals to fore/back through the frozen partition.

    A proposal matching both sides goes to fore; one matching neither side is
    dropped. The visual tracker's box, when present, is appended to fore.
    """
    g = frame_grounding
    if g.m != partition.m:
        raise CaptionMismatch(
            f"frame grounding has {g.m} tokens, partition has {partition.m}")
    fore: list[Proposal] = []
    back: list[BBox] = []
    if g.n:
        matches = g.alignment > cfg.theta2
        fore_cols = sorted(partition.fore_token_indices)
        back_cols = sorted(partition.back_token_indices)
        is_fore = matches[:, fore_cols].any(axis=1) if fore_cols else np.zeros(g.n, bool)
        is_back = matches[:, back_cols].any(axis=1) if back_cols else np.zeros(g.n, bool)
        for n, box in enumerate(g.proposals):
            if is_fore[n]:
                fore.append(Proposal(box, Source.GROUNDED))
            elif is_back[n]:
                back.append(box)
    if vt_box is not None:
        fore.append(Proposal(vt_box, Source.VISUAL_TRACKER))
    return FrameProposals(fore=fore, back=back)


def track_descriptions(first_frame: np.ndarray, template_img: np.ndarray,
                       gt: BBox, descriptions: DescriptionPair,
                       mllm: ChatBackend, gvlm: GroundingBackend,
                       cfg: RpoConfig) -> Optional[TokenPartition]:
    """Gate + one-shot template partition.

    Returns None (bypass) when the gate judges the target unsuitable; the
    pipeline then uses the visual tracker's prediction directly and the
    grounder is never called again for this sequence.
    """
    marked = annotate(first_frame, gt, thickness=default_thickness(first_frame))
    if not suitability_gate(marked, mllm):
        return None
    caption, _spans = concat(descriptions.fore, descriptions.back)
    g = gvlm.ground(template_img, caption)
    return partition_tokens(g, gt, cfg, caption=caption)
