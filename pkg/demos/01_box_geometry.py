"""Boxes, IoU, crops, and annotation — the pixel-space vocabulary.

Run:  python3 demos/01_box_geometry.py
"""

import numpy as np

from vltrack.geometry import BBox, annotate, crop, iou, save_image

# Two overlapping boxes: the classic half-shift gives IoU = 1/3.
a = BBox(0, 0, 10, 10)
b = BBox(5, 0, 10, 10)
print(f"iou(a, b)          = {iou(a, b):.6f}   (50 shared cells of 150)")
print(f"iou(a, a)          = {iou(a, a):.6f}")
print(f"iou disjoint       = {iou(a, BBox(100, 100, 5, 5)):.6f}")
print(f"iou degenerate     = {iou(BBox(0, 0, 0, 0), BBox(0, 0, 0, 0)):.6f}")

# A toy frame: gray background, orange target square.
frame = np.full((120, 160, 3), 70, dtype=np.uint8)
target = BBox(60, 40, 40, 30)
frame[40:70, 60:100] = (235, 140, 30)

# Tight crop vs context crop (doubled extent about the same center).
tight = crop(frame, target, context_factor=1.0)
wide = crop(frame, target, context_factor=2.0)
print(f"\ntight crop shape   = {tight.shape}")
print(f"context-2x crop    = {wide.shape}  (clamped to frame bounds)")

# The green outline the chat model sees on the first frame.
marked = annotate(frame, target)
save_image(marked, "/tmp/vltrack_demo_annotated.png")
print("\nwrote /tmp/vltrack_demo_annotated.png (green 3 px outline)")
print(f"outline pixel      = {tuple(int(v) for v in marked[40, 60])}")
print(f"interior untouched = {tuple(int(v) for v in marked[55, 80])}")
