"""Foreground verification: score candidate boxes and pick the output.

Each foreground candidate gets a template-similarity score (cosine in the
embedder's space, clamped at zero) and a background-overlap penalty (max IoU
with the background proposals); the combined score is
``s = s_fore * (1 - s_back)`` and the argmax wins, with ties preferring the
visual tracker's box. Also houses the triplet-margin objective and a
desk-scale linear trainer used to exercise it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence, Union

import numpy as np

from .backends.base import EmbeddingBackend, l2_normalize
from .errors import EngineError
from .geometry import BBox, EmptyCrop, crop, iou
from .semantic import FrameProposals, Source


class NonFiniteLoss(EngineError):
    """Training produced a NaN/inf loss; aborted."""


@dataclass(frozen=True)
class ScoredProposal:
    """A foreground candidate with its component and combined scores."""

    box: BBox
    source: Source
    s_fore: float
    s_back: float
    s: float

    @classmethod
    def make(cls, box: BBox, source: Source, s_fore: float, s_back: float) -> "ScoredProposal":
        return cls(box=box, source=source, s_fore=s_fore, s_back=s_back,
                   s=s_fore * (1.0 - s_back))


class ForegroundScorer:
    """Cosine similarity of candidate crops to the cached template embedding."""

    def __init__(self, embedder: EmbeddingBackend, template_patch: np.ndarray,
                 context_factor: float = 1.0):
        self._embedder = embedder
        self._context = context_factor
        self._template = l2_normalize(embedder.embed_image(template_patch))

    def score_box(self, frame: np.ndarray, box: BBox) -> float:
        if self._template is None:
            return 0.0
        try:
            patch = crop(frame, box, self._context)
        except EmptyCrop:
            return 0.0
        vec = l2_normalize(self._embedder.embed_image(patch))
        if vec is None:
            return 0.0
        cos = float(np.dot(self._template, vec))
        return min(max(cos, 0.0), 1.0)

    def scores(self, frame: np.ndarray, proposals: FrameProposals) -> list[float]:
        return [self.score_box(frame, p.box) for p in proposals.fore]


def background_scores(proposals: FrameProposals) -> list[float]:
    """Per-foreground max IoU with the background boxes; 0 with none."""
    out = []
    for p in proposals.fore:
        if proposals.back:
            out.append(max(iou(p.box, b) for b in proposals.back))
        else:
            out.append(0.0)
    return out


def score_proposals(proposals: FrameProposals, fore_scores: Sequence[float],
                    back_scores: Sequence[float]) -> list[ScoredProposal]:
    if not (len(proposals.fore) == len(fore_scores) == len(back_scores)):
        raise ValueError("score lists must match the foreground proposal count")
    return [ScoredProposal.make(p.box, p.source, sf, sb)
            for p, sf, sb in zip(proposals.fore, fore_scores, back_scores)]


def select(scored: Sequence[ScoredProposal]) -> ScoredProposal:
    """Argmax of the combined score; exact ties prefer the visual tracker,
    then the lowest index."""
    if not scored:
        raise ValueError("select requires at least one scored proposal")
    best = scored[0]
    for cand in scored[1:]:
        if cand.s > best.s:
            best = cand
        elif cand.s == best.s and (cand.source == Source.VISUAL_TRACKER
                                   and best.source != Source.VISUAL_TRACKER):
            best = cand
    return best


def combine_and_select(proposals: FrameProposals, fore_scores: Sequence[float],
                       back_scores: Sequence[float]) -> tuple[ScoredProposal, list[ScoredProposal]]:
    """Combine component scores and pick the winner; returns (chosen, table)."""
    table = score_proposals(proposals, fore_scores, back_scores)
    return select(table), table


# ---------------------------------------------------------------------------
# Triplet-margin objective and the desk-scale linear trainer
# ---------------------------------------------------------------------------

@dataclass
class TripletBatch:
    """K (anchor, positive, negative) feature rows plus the margin."""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    margin: float

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        self.positives = np.asarray(self.positives, dtype=float)
        self.negatives = np.asarray(self.negatives, dtype=float)
        if not (self.anchors.shape == self.positives.shape == self.negatives.shape):
            raise ValueError("anchors/positives/negatives must share one shape")
        if self.anchors.ndim != 2:
            raise ValueError("triplet batch rows must be 2-D (K, D)")
        if not (np.isfinite(self.margin) and self.margin > 0):
            raise ValueError(f"margin must be finite and positive, got {self.margin}")

    @property
    def k(self) -> int:
        return self.anchors.shape[0]


@dataclass
class LinearEmbedder:
    """The toy trainable map f(x) = W x."""

    weights: np.ndarray

    def embed(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights.T

    __call__ = embed


def triplet_loss(batch: TripletBatch, weights: np.ndarray) -> float:
    """Sum over triplets of hinge(d(a,p)^2 - d(a,n)^2 + margin)."""
    with np.errstate(over="ignore", invalid="ignore"):
        fa = batch.anchors @ weights.T
        fp = batch.positives @ weights.T
        fn = batch.negatives @ weights.T
        d_ap = ((fa - fp) ** 2).sum(axis=1)
        d_an = ((fa - fn) ** 2).sum(axis=1)
        terms = d_ap - d_an + batch.margin
        return float(np.clip(terms, 0.0, None).sum())


def triplet_loss_grad(batch: TripletBatch, weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss plus its analytic gradient with respect to the weight matrix.

    Non-finite hinge terms surface as a NaN loss instead of being silently
    dropped by the activity mask.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        u = batch.anchors - batch.positives  # (K, D)
        v = batch.anchors - batch.negatives
        wu = u @ weights.T
        wv = v @ weights.T
        terms = (wu ** 2).sum(axis=1) - (wv ** 2).sum(axis=1) + batch.margin
        if not np.isfinite(terms).all():
            return float("nan"), np.full_like(weights, np.nan)
        active = terms > 0
        loss = float(terms[active].sum())
        ua, va = u[active], v[active]
        grad = 2.0 * weights @ (ua.T @ ua - va.T @ va)
    return loss, grad


def initial_weights(in_dim: int, out_dim: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim))


def train_toy_embedder(batches: Union[Iterable[TripletBatch],
                                      Callable[[int], TripletBatch]],
                       dims: tuple[int, int], lr: float = 0.01, steps: int = 100,
                       seed: int = 0) -> LinearEmbedder:
    """Plain gradient descent on the triplet loss over a single linear map.

    ``batches`` is a per-step batch source: a callable of the step index, an
    iterator consumed step by step, or a sequence cycled as needed. Zero
    steps returns the seeded initialization untouched.
    """
    in_dim, out_dim = dims
    if in_dim < 1 or out_dim < 1:
        raise ValueError("dims must be positive")
    weights = initial_weights(in_dim, out_dim, seed)

    if callable(batches):
        batch_at = batches
    else:
        if isinstance(batches, Sequence):
            it: Iterator[TripletBatch] = itertools.cycle(batches) if batches else iter(())
        else:
            it = iter(batches)
        batch_at = lambda _step: next(it)  # noqa: E731

    for step in range(steps):
        batch = batch_at(step)
        loss, grad = triplet_loss_grad(batch, weights)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became non-finite at step {step}")
        weights = weights - lr * grad
    return LinearEmbedder(weights=weights)
