"""Iterative target-description refinement driven by grounding feedback.

Generates a foreground/background description of the boxed target with the
chat model, grounds the foreground text, classifies its words as helpful or
misleading against the groundtruth box, and feeds both lists back in an
update prompt until the grounder localizes the target well enough or
iterations run out. The background description is frozen after the first
extraction.
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .backends.base import ChatBackend, ChatRequest, GroundingBackend, GroundingResult
from .errors import EngineError
from .geometry import BBox, annotate, default_thickness, iou


class ExtractionFailed(EngineError):
    """The chat reply did not contain a parseable FOREGROUND description."""


class TokenMapFailure(EngineError):
    """Grounder tokens could not be aligned with the caption words."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RpoConfig:
    """Thresholds driving word classification and the stopping rule.

    theta1: min IoU with groundtruth for a proposal to support a positive word
    theta2: min token-alignment score for a proposal to match a word at all
    theta3: max IoU below which a matching proposal marks its word negative
    epsilon: grounding quality above which the loop stops
    """

    theta1: float = 0.3
    theta2: float = 0.2
    theta3: float = 0.1
    epsilon: float = 0.4
    max_iters: int = 5

    def __post_init__(self):
        if not (0.0 <= self.theta3 < self.theta1 <= 1.0):
            raise ValueError(
                f"need 0 <= theta3 < theta1 <= 1, got theta3={self.theta3}, theta1={self.theta1}")
        if not (0.0 < self.theta2 < 1.0):
            raise ValueError(f"need 0 < theta2 < 1, got {self.theta2}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"need 0 < epsilon <= 1, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError(f"need max_iters >= 1, got {self.max_iters}")


# ---------------------------------------------------------------------------
# Descriptions
# ---------------------------------------------------------------------------

_STRIP_CHARS = string.punctuation + string.whitespace


def segment_words(text: str) -> list[str]:
    words = []
    for raw in text.lower().split():
        w = raw.strip(_STRIP_CHARS)
        if w:
            words.append(w)
    return words


def _normalize_inline(text: str) -> str:
    # Keep interior punctuation (it separates phrases) but drop markdown
    # emphasis and trailing clutter.
    text = text.replace("*", "").replace("_", "").replace("`", "")
    text = " ".join(text.split())
    return text.strip(_STRIP_CHARS + "—").lower()


@dataclass(frozen=True)
class DescriptionPair:
    """Foreground/background descriptions plus their word segmentations."""

    fore: str
    back: str
    fore_words: tuple[str, ...] = field(default=())
    back_words: tuple[str, ...] = field(default=())

    @classmethod
    def from_texts(cls, fore: str, back: str) -> "DescriptionPair":
        fore_words = tuple(segment_words(fore))
        back_norm = _normalize_inline(back)
        return cls(
            fore=" ".join(fore_words),
            back=back_norm,
            fore_words=fore_words,
            back_words=tuple(segment_words(back_norm)),
        )


_FORE_MARKER = "foreground"
_BACK_MARKER = "background"


def _extract_marker_line(text: str, marker: str) -> Optional[str]:
    # Last occurrence wins; tolerate bullets, markdown bold, odd separators.
    found = None
    for line in text.splitlines():
        stripped = line.strip().lstrip("-*•> ").strip()
        bare = stripped.replace("*", "").replace("_", "").replace("`", "").strip()
        low = bare.lower()
        if not low.startswith(marker):
            continue
        rest = bare[len(marker):].lstrip()
        if rest[:1] in (":", "-", "–", "—"):
            found = rest[1:].strip()
    return found


def extract_descriptions(mllm_text: str) -> DescriptionPair:
    """Parse FOREGROUND/BACKGROUND lines out of a chat reply.

    Raises ExtractionFailed when no foreground marker is present or its
    text normalizes to nothing.
    """
    fore_raw = _extract_marker_line(mllm_text, _FORE_MARKER)
    if fore_raw is None:
        raise ExtractionFailed("no FOREGROUND marker in reply")
    back_raw = _extract_marker_line(mllm_text, _BACK_MARKER) or ""
    pair = DescriptionPair.from_texts(fore_raw, back_raw)
    if not pair.fore:
        raise ExtractionFailed("FOREGROUND description is empty")
    return pair


# ---------------------------------------------------------------------------
# Prompt templates (shipped defaults; static so replay digests are stable)
# ---------------------------------------------------------------------------

INIT_PROMPT = (
    "You are looking at the first frame of a video. One object is marked with a "
    "green bounding box; it is the object that must be tracked.\n"
    "Describe the marked object and the other things in the scene so that a "
    "text-grounded detector could find the marked object.\n"
    "Reply with exactly two lines, nothing else:\n"
    "FOREGROUND: <a short phrase describing only the object inside the green box>\n"
    "BACKGROUND: <other visible objects, separated by periods>"
)

_FORMAT_REMINDER = (
    "\nYour previous reply did not follow the required format. Reply again with "
    "the exact line format requested above."
)

_AVOID_REPEAT = (
    "\nDo not repeat a description you already gave; propose a different one."
)

SUITABILITY_KEYWORD = "VERDICT"


def render_init_prompt() -> str:
    """The initial description-request template; identical across calls."""
    return INIT_PROMPT


def render_update_prompt(pos, neg) -> str:
    """Reflection prompt listing helpful and misleading words.

    Word lists are sorted so the prompt (and its cassette digest) is a pure
    function of the two sets.
    """
    pos_list = sorted(pos)
    neg_list = sorted(neg)
    lines = [
        "The text-grounded detector could not localize the marked object using "
        "your previous FOREGROUND description.",
    ]
    if pos_list:
        lines.append(
            "Helpful words to keep or extend: " + ", ".join(pos_list) + ".")
    else:
        lines.append(
            "None of your previous words helped the detector; try a completely "
            "different description strategy (different attributes, category, or "
            "spatial context).")
    if neg_list:
        lines.append(
            "Misleading words to avoid: " + ", ".join(neg_list) + ".")
    lines.append(
        "Reply with exactly one line, nothing else:\n"
        "FOREGROUND: <a new short phrase describing only the object inside the "
        "green box>")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Word classification against a grounding result
# ---------------------------------------------------------------------------

def _squash(token: str) -> str:
    tok = token.lower()
    if tok.startswith("##"):
        tok = tok[2:]
    return "".join(ch for ch in tok if ch.isalnum())


def map_tokens_to_words(tokens: list[str], words: list[str]) -> list[Optional[int]]:
    """Greedy left-to-right assignment of each token to a word index.

    Punctuation-only tokens map to None. Raises TokenMapFailure when the
    token stream cannot be consumed as the given word sequence.
    """
    targets = ["".join(ch for ch in w.lower() if ch.isalnum()) for w in words]
    mapping: list[Optional[int]] = []
    wi = 0
    acc = ""
    for tok in tokens:
        sq = _squash(tok)
        if not sq:
            mapping.append(None)
            continue
        if wi >= len(targets):
            raise TokenMapFailure(f"token {tok!r} extends past the last word")
        candidate = acc + sq
        if not targets[wi].startswith(candidate):
            raise TokenMapFailure(
                f"token {tok!r} does not continue word {words[wi]!r} "
                f"(accumulated {acc!r})")
        mapping.append(wi)
        acc = candidate
        if acc == targets[wi]:
            wi += 1
            acc = ""
    if acc:
        raise TokenMapFailure(f"word {words[wi]!r} only partially covered by tokens")
    if wi < len(targets):
        raise TokenMapFailure(f"tokens ended before word {words[wi]!r}")
    return mapping


def word_alignment_scores(g: GroundingResult, words: list[str]) -> np.ndarray:
    """(N, num_words) matrix: per-word score = max over the word's tokens."""
    mapping = map_tokens_to_words(g.tokens, words)
    scores = np.zeros((g.n, len(words)), dtype=float)
    for col, wi in enumerate(mapping):
        if wi is None:
            continue
        scores[:, wi] = np.maximum(scores[:, wi], g.alignment[:, col])
    return scores


def classify_words(g: GroundingResult, words, gt: BBox,
                   cfg: RpoConfig) -> tuple[set[str], set[str]]:
    """Split words into positive and negative sets per the threshold rules.

    A word is positive when some proposal matches it (score > theta2) and
    overlaps the groundtruth (IoU > theta1). A non-positive word is negative
    when every matching proposal stays below theta3 — vacuously so for words
    no proposal matches. The rest stay unclassified.
    """
    words = list(words)
    scores = word_alignment_scores(g, words)
    ious = np.array([iou(p, gt) for p in g.proposals], dtype=float)
    pos: set[str] = set()
    neg: set[str] = set()
    for wi, word in enumerate(words):
        matching = scores[:, wi] > cfg.theta2
        if bool(np.any(matching & (ious > cfg.theta1))):
            pos.add(word)
        elif not bool(np.any(matching & (ious >= cfg.theta3))):
            neg.add(word)
    return pos, neg


def quality(g: GroundingResult, gt: BBox) -> float:
    """Grounding quality: best IoU between any proposal and the groundtruth."""
    if g.n == 0:
        return 0.0
    return max(iou(p, gt) for p in g.proposals)


# ---------------------------------------------------------------------------
# The optimization loop
# ---------------------------------------------------------------------------

OUTCOME_CONVERGED = "converged"
OUTCOME_EXHAUSTED = "exhausted"


@dataclass
class RpoIteration:
    index: int
    fore: str
    back: str
    pos_words: tuple[str, ...]
    neg_words: tuple[str, ...]
    quality: float
    prompt_sent: str
    raw_reply: str


@dataclass
class RpoTrace:
    iterations: list[RpoIteration]
    outcome: str
    chosen_iter: int

    def to_jsonl(self) -> str:
        lines = []
        for it in self.iterations:
            lines.append(json.dumps({
                "iter": it.index,
                "fore": it.fore,
                "back": it.back,
                "pos": sorted(it.pos_words),
                "neg": sorted(it.neg_words),
                "r": it.quality,
                "prompt_digest": hashlib.sha256(
                    it.prompt_sent.encode("utf-8")).hexdigest(),
            }, sort_keys=True))
        lines.append(json.dumps(
            {"outcome": self.outcome, "chosen_iter": self.chosen_iter}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def _ask_extract(mllm: ChatBackend, marked: np.ndarray, prompt: str) -> tuple[DescriptionPair, str, str]:
    """One chat call with a single format re-ask on parse failure."""
    reply = mllm.complete(ChatRequest(prompt=prompt, image=marked))
    try:
        return extract_descriptions(reply), reply, prompt
    except ExtractionFailed:
        retry_prompt = prompt + _FORMAT_REMINDER
        reply = mllm.complete(ChatRequest(prompt=retry_prompt, image=marked))
        return extract_descriptions(reply), reply, retry_prompt


def optimize(first_frame: np.ndarray, template_img: np.ndarray, gt: BBox,
             mllm: ChatBackend, gvlm: GroundingBackend,
             cfg: RpoConfig = RpoConfig()) -> tuple[DescriptionPair, RpoTrace]:
    """Run the full description-refinement loop on the first frame.

    Returns the chosen description pair (background frozen at iteration 0)
    and the complete per-iteration trace. On exhaustion the iteration with
    the highest grounding quality wins.
    """
    if gt.area <= 0:
        raise ValueError("groundtruth box must have positive area")
    marked = annotate(first_frame, gt, thickness=default_thickness(first_frame))

    pair, raw, prompt_used = _ask_extract(mllm, marked, render_init_prompt())
    frozen_back = pair.back
    frozen_back_words = pair.back_words
    seen = {pair.fore}

    iterations: list[RpoIteration] = []
    outcome = OUTCOME_EXHAUSTED
    for i in range(1, cfg.max_iters + 1):
        g = gvlm.ground(template_img, pair.fore)
        r = quality(g, gt)
        pos, neg = classify_words(g, list(pair.fore_words), gt, cfg)
        iterations.append(RpoIteration(
            index=i, fore=pair.fore, back=frozen_back,
            pos_words=tuple(sorted(pos)), neg_words=tuple(sorted(neg)),
            quality=r, prompt_sent=prompt_used, raw_reply=raw,
        ))
        if r > cfg.epsilon:
            outcome = OUTCOME_CONVERGED
            break
        if i == cfg.max_iters:
            break

        update = render_update_prompt(pos, neg)
        new_pair, raw, prompt_used = _ask_extract(mllm, marked, update)
        if new_pair.fore in seen:
            # One re-ask with an explicit no-repeat instruction, then give up
            # rather than oscillate.
            new_pair, raw, prompt_used = _ask_extract(
                mllm, marked, update + _AVOID_REPEAT)
            if new_pair.fore in seen:
                break
        seen.add(new_pair.fore)
        pair = replace(new_pair, back=frozen_back, back_words=frozen_back_words)

    if outcome == OUTCOME_CONVERGED:
        chosen = iterations[-1].index
    else:
        chosen = max(iterations, key=lambda it: (it.quality, -it.index)).index
    best = iterations[chosen - 1]
    final = DescriptionPair.from_texts(best.fore, frozen_back)
    return final, RpoTrace(iterations=iterations, outcome=outcome, chosen_iter=chosen)
