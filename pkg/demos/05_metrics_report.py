"""Benchmark metrics on controlled traces, plus text-to-image alignment.

Run:  python3 demos/05_metrics_report.py
"""

import numpy as np

from vltrack.backends import MeanColorEmbedder
from vltrack.geometry import BBox
from vltrack.metrics import report, text_image_alignment

rng = np.random.default_rng(0)

# A groundtruth walk and three predictors of decreasing quality.
gt = [BBox(50.0 + 2 * t, 40.0 + 1.5 * t, 30.0, 24.0) for t in range(60)]
perfect = list(gt)
jittery = [b.shifted(float(rng.uniform(-4, 4)), float(rng.uniform(-4, 4))) for b in gt]
drifting = [b.shifted(1.5 * t, 1.5 * t) for t, b in enumerate(gt)]

print(f"{'':14}{'AUC':>8}{'P@20px':>9}{'P_norm':>9}")
for name, pred in [("perfect", perfect), ("jittery", jittery), ("drifting", drifting)]:
    r = report(pred, gt)
    print(f"{name:14}{r.auc:8.2f}{r.precision:9.2f}{r.norm_precision:9.2f}")

r = report(perfect, gt)
print(f"\nsuccess curve, first five thresholds : {[f'{v:.0f}' for v in r.success_curve[:5]]}")
print(f"success at IoU threshold 1.00 (strict >): {r.success_curve[-1]:.0f}")

# Text-to-image alignment in the CLIP-score convention (100 x cosine).
emb = MeanColorEmbedder()
red_patch = np.full((20, 20, 3), (220, 40, 40), dtype=np.uint8)
score = text_image_alignment("red square", red_patch, emb)
print(f"\ntext-image alignment ('red square' vs red patch): {score:.2f}")
print("(the mock embedder hashes text, so this only demonstrates the scale)")
