"""Synthetic moving-square sequences with matching scripted backends.

A scene is a target square plus distractor squares following linear paths
over a noisy background. The generator writes frames, groundtruth, and a
scene description from which fully offline backends can be built: a chat
mock that describes the scene, a grounder that returns the true boxes with
word-consistent alignment scores, a drifting tracker, and a mean-color
embedder. The whole pipeline is then runnable (and recordable) with no
network at all.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .backends.base import BackendSet, ChatRequest, GroundingResult, Rejected
from .backends.mock import DriftingTracker, MeanColorEmbedder
from .geometry import BBox, save_image
from .rpo import RpoConfig


@dataclass(frozen=True)
class SceneObject:
    """A colored square moving linearly; ``words`` is its grounding vocabulary."""

    color: tuple[int, int, int]
    words: tuple[str, ...]
    start: tuple[float, float]
    velocity: tuple[float, float]
    size: tuple[int, int]

    def box_at(self, t: int) -> BBox:
        # Integer-aligned so rendered extents match the groundtruth exactly.
        x = round(self.start[0] + self.velocity[0] * t)
        y = round(self.start[1] + self.velocity[1] * t)
        return BBox(float(x), float(y), float(self.size[0]), float(self.size[1]))


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    frames: int
    seed: int
    target: SceneObject
    distractors: tuple[SceneObject, ...]
    background: tuple[int, int, int] = (45, 45, 48)
    noise: int = 10
    tracker_drift: tuple[float, float] = (2.0, 2.0)
    align_score: float = 0.9

    @property
    def objects(self) -> tuple[SceneObject, ...]:
        return (self.target,) + self.distractors

    def groundtruth(self) -> list[BBox]:
        return [self.target.box_at(t) for t in range(self.frames)]

    def fore_text(self) -> str:
        return " ".join(self.target.words)

    def back_text(self) -> str:
        return ". ".join(" ".join(d.words) for d in self.distractors)


def generate_scene(frames: int = 30, size: int = 256, seed: int = 0) -> SceneSpec:
    """Default scene: a red target square and two color-distinct distractors.

    Trajectories scale with the canvas and are chosen to stay in bounds and
    mutually disjoint for the whole sequence.
    """
    if frames < 2 or size < 64:
        raise ValueError("need frames >= 2 and size >= 64")
    s = size / 256.0
    steps = frames - 1

    def obj(color, words, start_frac, end_frac, size_frac):
        x0, y0 = start_frac[0] * size, start_frac[1] * size
        x1, y1 = end_frac[0] * size, end_frac[1] * size
        side = max(8, round(size_frac * size))
        return SceneObject(
            color=color, words=tuple(words),
            start=(x0, y0),
            velocity=((x1 - x0) / steps, (y1 - y0) / steps),
            size=(side, side),
        )

    target = obj((220, 40, 40), ("red", "square"), (0.09, 0.09), (0.55, 0.43), 0.156)
    d1 = obj((40, 60, 220), ("blue", "box"), (0.78, 0.08), (0.78, 0.19), 0.14)
    d2 = obj((230, 200, 40), ("yellow", "box"), (0.08, 0.78), (0.19, 0.78), 0.117)
    return SceneSpec(
        width=size, height=size, frames=frames, seed=seed,
        target=target, distractors=(d1, d2),
        tracker_drift=(max(1.0, round(2 * s)), max(1.0, round(2 * s))),
    )


def render_frame(scene: SceneSpec, t: int) -> np.ndarray:
    """Background speckle plus flat-filled squares; target drawn last (on top)."""
    rng = np.random.default_rng(scene.seed * 1_000_003 + t)
    canvas = np.empty((scene.height, scene.width, 3), dtype=np.int16)
    canvas[:] = np.array(scene.background, dtype=np.int16)
    if scene.noise:
        canvas += rng.integers(-scene.noise, scene.noise + 1,
                               size=(scene.height, scene.width, 1), dtype=np.int16)
    img = np.clip(canvas, 0, 255).astype(np.uint8)
    for o in scene.distractors + (scene.target,):
        b = o.box_at(t)
        x, y, w, h = int(b.x), int(b.y), int(b.w), int(b.h)
        img[max(y, 0):y + h, max(x, 0):x + w] = np.array(o.color, dtype=np.uint8)
    return img


# ---------------------------------------------------------------------------
# Persistence: sequence directory + scene description
# ---------------------------------------------------------------------------

def scene_to_dict(scene: SceneSpec) -> dict:
    def obj_d(o: SceneObject) -> dict:
        return {"color": list(o.color), "words": list(o.words),
                "start": list(o.start), "velocity": list(o.velocity),
                "size": list(o.size)}

    return {
        "width": scene.width, "height": scene.height, "frames": scene.frames,
        "seed": scene.seed, "background": list(scene.background),
        "noise": scene.noise, "tracker_drift": list(scene.tracker_drift),
        "align_score": scene.align_score,
        "target": obj_d(scene.target),
        "distractors": [obj_d(d) for d in scene.distractors],
    }


def scene_from_dict(data: dict) -> SceneSpec:
    def obj(d: dict) -> SceneObject:
        return SceneObject(color=tuple(d["color"]), words=tuple(d["words"]),
                           start=tuple(d["start"]), velocity=tuple(d["velocity"]),
                           size=tuple(d["size"]))

    return SceneSpec(
        width=data["width"], height=data["height"], frames=data["frames"],
        seed=data["seed"], background=tuple(data["background"]),
        noise=data["noise"], tracker_drift=tuple(data["tracker_drift"]),
        align_score=data["align_score"],
        target=obj(data["target"]),
        distractors=tuple(obj(d) for d in data["distractors"]),
    )


def load_scene(path) -> SceneSpec:
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_sequence(scene: SceneSpec, out_dir, rpo: Optional[RpoConfig] = None) -> Path:
    """Write frames, groundtruth, scene.json, and a ready-to-run config.toml."""
    out = Path(out_dir)
    img_dir = out / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for t in range(scene.frames):
        save_image(render_frame(scene, t), img_dir / f"{t + 1:06d}.png")
    gt_lines = [",".join(f"{v:.4f}" for v in b.as_tuple())
                for b in scene.groundtruth()]
    (out / "groundtruth.txt").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
    (out / "scene.json").write_text(
        json.dumps(scene_to_dict(scene), indent=1, sort_keys=True), encoding="utf-8")
    cfg = rpo or RpoConfig()
    (out / "config.toml").write_text(
        "[rpo]\n"
        f"theta1 = {cfg.theta1}\n"
        f"theta2 = {cfg.theta2}\n"
        f"theta3 = {cfg.theta3}\n"
        f"epsilon = {cfg.epsilon}\n"
        f"max_iters = {cfg.max_iters}\n"
        "\n[backends]\n"
        'scripted_scene = "scene.json"\n'
        "\n[pipeline]\n"
        "context_factor = 1.0\n"
        "emit_scores = true\n",
        encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# Scripted backends bound to a scene
# ---------------------------------------------------------------------------

def _frame_hash(img: np.ndarray) -> str:
    arr = np.ascontiguousarray(img)
    h = hashlib.sha256()
    h.update(f"{arr.shape[1]}x{arr.shape[0]}:".encode("ascii"))
    h.update(arr.tobytes())
    return h.hexdigest()


class SceneChat:
    """Chat mock answering the description and suitability prompts."""

    def __init__(self, scene: SceneSpec):
        self._scene = scene
        self.calls = 0

    def complete(self, req: ChatRequest) -> str:
        self.calls += 1
        upper = req.prompt.upper()
        if "VERDICT" in upper:
            return "VERDICT: SUITABLE"
        return (f"FOREGROUND: {self._scene.fore_text()}\n"
                f"BACKGROUND: {self._scene.back_text()}")


class SceneGrounder:
    """Grounder that recognizes rendered frames and scores tokens by vocabulary.

    Tokens are the caption's period-stripped words; a proposal row scores
    ``align_score`` on every token in its object's vocabulary and 0 elsewhere.
    """

    def __init__(self, scene: SceneSpec):
        self._scene = scene
        self._frame_index = {
            _frame_hash(render_frame(scene, t)): t for t in range(scene.frames)}
        self.calls = 0

    def ground(self, img: np.ndarray, caption: str) -> GroundingResult:
        self.calls += 1
        t = self._frame_index.get(_frame_hash(img))
        if t is None:
            raise Rejected("image is not a frame of the configured scene")
        tokens = [w.strip(".").lower() for w in caption.split()]
        tokens = [w for w in tokens if w]
        objects = self._scene.objects
        proposals = [o.box_at(t) for o in objects]
        alignment = np.zeros((len(objects), len(tokens)), dtype=float)
        for n, o in enumerate(objects):
            for m, tok in enumerate(tokens):
                if tok in o.words:
                    alignment[n, m] = self._scene.align_score
        return GroundingResult(tokens, proposals, alignment).validate()


def scene_backends(scene: SceneSpec) -> BackendSet:
    """Fully offline backend set for a synthetic scene."""
    return BackendSet(
        mllm=SceneChat(scene),
        gvlm=SceneGrounder(scene),
        tracker=DriftingTracker(scene.groundtruth(), *scene.tracker_drift),
        embedder=MeanColorEmbedder(),
    )
