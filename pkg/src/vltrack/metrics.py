"""Tracking benchmark metrics: success AUC, precision, normalized precision.

Conventions follow the de-facto single-object-tracking toolkit behavior:
success uses strict IoU > threshold over a 21-point grid, precision counts
center distances <= 20 px, normalized precision scales the center offset by
the groundtruth box size and counts <= 0.2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backends.base import EmbeddingBackend, l2_normalize
from .errors import EngineError
from .geometry import BBox, iou

IOU_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PIXEL_THRESHOLDS = np.arange(0, 51, dtype=float)


class LengthMismatch(EngineError):
    """Prediction and groundtruth traces have different lengths."""


@dataclass
class MetricReport:
    auc: float
    precision: float
    norm_precision: float
    success_curve: list[float] = field(repr=False)
    precision_curve: list[float] = field(repr=False)
    norm_precision_skipped: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "auc": self.auc,
            "p": self.precision,
            "p_norm": self.norm_precision,
            "success_curve": self.success_curve,
            "precision_curve": self.precision_curve,
        }, sort_keys=True, indent=1)

    def to_text(self) -> str:
        lines = [
            f"{'AUC':<22}{self.auc:7.2f}",
            f"{'Precision (20 px)':<22}{self.precision:7.2f}",
            f"{'Norm. precision (0.2)':<22}{self.norm_precision:7.2f}",
        ]
        if self.norm_precision_skipped:
            lines.append(f"{'(degenerate gt frames)':<22}{self.norm_precision_skipped:7d}")
        return "\n".join(lines)


def _check_lengths(pred: Sequence[BBox], gt: Sequence[BBox]) -> None:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} groundtruth boxes")
    if not pred:
        raise LengthMismatch("empty traces")


def success_auc(pred: Sequence[BBox], gt: Sequence[BBox]) -> tuple[float, list[float]]:
    """Mean of the success curve over the 21-threshold IoU grid, in percent.

    success(t) is the fraction of frames whose IoU strictly exceeds t.
    """
    _check_lengths(pred, gt)
    ious = np.array([iou(p, g) for p, g in zip(pred, gt)])
    curve = [float(np.mean(ious > t) * 100.0) for t in IOU_THRESHOLDS]
    return float(np.mean(curve)), curve


def _center_distances(pred: Sequence[BBox], gt: Sequence[BBox]) -> np.ndarray:
    return np.array([math.dist(p.center, g.center) for p, g in zip(pred, gt)])


def precision(pred: Sequence[BBox], gt: Sequence[BBox],
              pixel_threshold: float = 20.0) -> tuple[float, list[float]]:
    """Fraction of frames with center distance <= the pixel threshold."""
    _check_lengths(pred, gt)
    dists = _center_distances(pred, gt)
    curve = [float(np.mean(dists <= t) * 100.0) for t in PIXEL_THRESHOLDS]
    return float(np.mean(dists <= pixel_threshold) * 100.0), curve


def norm_precision(pred: Sequence[BBox], gt: Sequence[BBox],
                   threshold: float = 0.2) -> tuple[float, int]:
    """Center distance scaled per-frame by the groundtruth (w, h).

    Zero-area groundtruth frames are skipped; the skip tally is returned.
    """
    _check_lengths(pred, gt)
    hits = 0
    total = 0
    skipped = 0
    for p, g in zip(pred, gt):
        if g.w <= 0 or g.h <= 0:
            skipped += 1
            continue
        pc, gc = p.center, g.center
        d = math.hypot((pc[0] - gc[0]) / g.w, (pc[1] - gc[1]) / g.h)
        total += 1
        if d <= threshold:
            hits += 1
    pct = (hits / total * 100.0) if total else 0.0
    return pct, skipped


def report(pred: Sequence[BBox], gt: Sequence[BBox]) -> MetricReport:
    auc, success_curve = success_auc(pred, gt)
    p, p_curve = precision(pred, gt)
    p_norm, skipped = norm_precision(pred, gt)
    return MetricReport(auc=auc, precision=p, norm_precision=p_norm,
                        success_curve=success_curve, precision_curve=p_curve,
                        norm_precision_skipped=skipped)


def text_image_alignment(text: str, patch: np.ndarray,
                         embedder: EmbeddingBackend) -> float:
    """100 x cosine between the text and image embeddings (CLIP-score scale)."""
    tv = l2_normalize(embedder.embed_text(text))
    iv = l2_normalize(embedder.embed_image(patch))
    if tv is None or iv is None:
        return 0.0
    return float(np.dot(tv, iv) * 100.0)
