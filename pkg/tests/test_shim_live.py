"""Full pipeline against a live shim server (grounder, tracker, embedder over
HTTP; chat scripted, since shims do not proxy chat models).

Skipped unless SHIM_URL is set. Exercises the real wire path: PNG encoding,
corner-format conversion, the /info handshake, and session handling.
"""

import os

import numpy as np
import pytest

from vltrack.backends import (
    BackendSet,
    ChatRequest,
    HttpEmbeddingBackend,
    HttpGroundingBackend,
    HttpTrackerBackend,
)
from vltrack.geometry import iou
from vltrack.pipeline import load_config, load_sequence, run_sequence
from vltrack.synth import generate_scene, write_sequence

SHIM_URL = os.environ.get("SHIM_URL")

pytestmark = pytest.mark.skipif(
    not SHIM_URL, reason="SHIM_URL not set; live shim integration needs a server")


class DescribeChat:
    def complete(self, req: ChatRequest) -> str:
        if "VERDICT" in req.prompt.upper():
            return "VERDICT: SUITABLE"
        return "FOREGROUND: red square\nBACKGROUND: blue box. yellow box"


def test_pipeline_tracks_via_shim_models(tmp_path):
    scene = generate_scene(frames=10, size=128, seed=2)
    seq_dir = write_sequence(scene, tmp_path / "synthetic")
    spec = load_sequence(seq_dir)
    config = load_config(seq_dir / "config.toml", mode="live")

    backends = BackendSet(
        mllm=DescribeChat(),
        gvlm=HttpGroundingBackend(SHIM_URL),
        tracker=HttpTrackerBackend(SHIM_URL),
        embedder=HttpEmbeddingBackend(SHIM_URL),
    )
    result = run_sequence(spec, config, backends)

    assert result.completed and not result.bypass
    assert result.rpo_trace.outcome == "converged"
    gt = scene.groundtruth()
    ious = [iou(p, g) for p, g in zip(result.predictions, gt)]
    assert float(np.mean(ious)) >= 0.8, f"mean IoU {np.mean(ious):.3f}"
