"""Pixel-space primitives: boxes, IoU, crops, and annotation rendering.

Coordinate convention: 0-based, top-left origin, boxes stored as
(x, y, w, h) floats. Corner-format boxes (x0, y0, x1, y1) are converted
at backend boundaries only.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import EngineError

# Annotation outline: pure green, 3 px minimum, scaled for large frames.
GREEN = (0, 255, 0)
MIN_THICKNESS = 3


class EmptyCrop(EngineError):
    """Requested crop region has zero area after clamping to the image."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, (left, top, width, height)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be finite, got {v!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"BBox width/height must be >= 0, got ({self.w}, {self.h})")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def to_xyxy(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.right, self.bottom)

    @classmethod
    def from_xyxy(cls, x0: float, y0: float, x1: float, y1: float) -> "BBox":
        return cls(x0, y0, x1 - x0, y1 - y0)

    def shifted(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when the union is degenerate."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        inter = 0.0
    else:
        inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# Images: plain (H, W, 3) uint8 RGB arrays.
# ---------------------------------------------------------------------------

def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) uint8 RGB contract; returns the array unchanged."""
    if not isinstance(img, np.ndarray):
        raise ValueError(f"image must be a numpy array, got {type(img).__name__}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"image dtype must be uint8, got {img.dtype}")
    return img


def _round_px(v: float) -> int:
    # Round half away from zero; avoids banker's-rounding surprises on .5 grids.
    return int(math.floor(v + 0.5))


def crop(img: np.ndarray, box: BBox, context_factor: float = 1.0) -> np.ndarray:
    """Crop ``box`` scaled about its center by ``context_factor``, clamped to bounds.

    Raises EmptyCrop when the clamped, pixel-rounded region has zero area.
    """
    validate_image(img)
    if context_factor < 1.0:
        raise ValueError(f"context_factor must be >= 1, got {context_factor}")
    h, w = img.shape[:2]
    cx, cy = box.center
    half_w = box.w * context_factor / 2.0
    half_h = box.h * context_factor / 2.0
    x0 = max(cx - half_w, 0.0)
    y0 = max(cy - half_h, 0.0)
    x1 = min(cx + half_w, float(w))
    y1 = min(cy + half_h, float(h))
    xi0, yi0, xi1, yi1 = _round_px(x0), _round_px(y0), _round_px(x1), _round_px(y1)
    if xi1 <= xi0 or yi1 <= yi0:
        raise EmptyCrop(f"crop of {box.as_tuple()} (factor {context_factor}) is empty")
    return img[yi0:yi1, xi0:xi1].copy()


def default_thickness(img: np.ndarray) -> int:
    """Outline thickness that stays visible when large frames are downscaled."""
    h, w = img.shape[:2]
    return max(MIN_THICKNESS, _round_px(0.004 * min(w, h)))


def annotate(img: np.ndarray, box: BBox, color: tuple[int, int, int] = GREEN,
             thickness: int = MIN_THICKNESS) -> np.ndarray:
    """Return a copy of ``img`` with a rectangle outline drawn along ``box``.

    The band is centered on the rectangle path and clipped to image bounds;
    a zero-area box degenerates to a thickness-sized dot cluster at (x, y).
    """
    validate_image(img)
    if thickness < 1:
        raise ValueError("thickness must be >= 1")
    out = img.copy()
    h, w = out.shape[:2]
    x0, y0 = _round_px(box.x), _round_px(box.y)
    x1, y1 = _round_px(box.right), _round_px(box.bottom)
    lo = (thickness - 1) // 2
    hi = thickness // 2
    col = np.array(color, dtype=np.uint8)

    def paint(r0, r1, c0, c1):
        r0, r1 = max(r0, 0), min(r1, h)
        c0, c1 = max(c0, 0), min(c1, w)
        if r0 < r1 and c0 < c1:
            out[r0:r1, c0:c1] = col

    # Horizontal bands (top, bottom) span the full outline width.
    paint(y0 - lo, y0 + hi + 1, x0 - lo, x1 + hi + 1)
    paint(y1 - lo, y1 + hi + 1, x0 - lo, x1 + hi + 1)
    # Vertical bands (left, right).
    paint(y0 - lo, y1 + hi + 1, x0 - lo, x0 + hi + 1)
    paint(y0 - lo, y1 + hi + 1, x1 - lo, x1 + hi + 1)
    return out


# ---------------------------------------------------------------------------
# File and wire encodings (PNG/JPEG files, base64 PNG on the wire).
# ---------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(img: np.ndarray, path) -> None:
    validate_image(img)
    PILImage.fromarray(img).save(path)


def encode_png(img: np.ndarray) -> bytes:
    validate_image(img)
    buf = io.BytesIO()
    PILImage.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def encode_png_base64(img: np.ndarray) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")


def decode_png_base64(data: str) -> np.ndarray:
    raw = base64.b64decode(data)
    with PILImage.open(io.BytesIO(raw)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def resize_to_fit(img: np.ndarray, max_edge: int) -> np.ndarray:
    """Downscale so the longer edge is at most ``max_edge``; never upscales."""
    validate_image(img)
    h, w = img.shape[:2]
    longest = max(h, w)
    if longest <= max_edge:
        return img
    scale = max_edge / longest
    new_w = max(1, int(round(w * scale)))
    new_h = max(1, int(round(h * scale)))
    im = PILImage.fromarray(img).resize((new_w, new_h), PILImage.BILINEAR)
    return np.asarray(im, dtype=np.uint8)
