"""Per-sequence orchestration: ingest, run, persist.

Flow per sequence: the first frame seeds the visual tracker and the
description-refinement loop; the suitability gate and token partition run
once; every later frame is grounded, classified, verified, and the winning
box becomes the prediction. Backend errors abort the sequence with partial
outputs flushed and an error record written.
"""

from __future__ import annotations

import json
import logging
import re
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import rpo as rpo_mod
from . import semantic, synth
from .backends.base import BackendSet
from .backends.cassette import Cassette, record_backends, replay_backends
from .backends.http import (
    HttpChatBackend,
    HttpEmbeddingBackend,
    HttpGroundingBackend,
    HttpTrackerBackend,
)
from .errors import ConfigError, EngineError
from .geometry import BBox, crop, load_image
from .rpo import RpoConfig, RpoTrace
from .semantic import TokenPartition, classify_frame
from .verify import ForegroundScorer, ScoredProposal, background_scores, combine_and_select

logger = logging.getLogger("vltrack")

MODES = ("live", "record", "replay")


class MissingGroundtruth(EngineError):
    """Sequence directory has no groundtruth.txt."""


class EmptySequence(EngineError):
    """Sequence directory has no frames under img/."""


class GroundtruthFormatError(EngineError):
    """A groundtruth line could not be parsed as four numbers."""


# ---------------------------------------------------------------------------
# Sequence ingest
# ---------------------------------------------------------------------------

@dataclass
class SequenceSpec:
    name: str
    frame_paths: list[Path]
    groundtruth: list[BBox]
    language: Optional[str] = None


_FRAME_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


def parse_box_line(line: str, lineno: int = 0) -> BBox:
    parts = [p for p in re.split(r"[,\t ]+", line.strip()) if p]
    if len(parts) != 4:
        raise GroundtruthFormatError(
            f"line {lineno}: expected 4 values, got {len(parts)}: {line!r}")
    try:
        x, y, w, h = (float(p) for p in parts)
        return BBox(x, y, w, h)
    except ValueError as exc:
        raise GroundtruthFormatError(f"line {lineno}: {exc}")


def parse_box_file(path) -> list[BBox]:
    boxes = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if line.strip():
            boxes.append(parse_box_line(line, i))
    return boxes


def load_sequence(seq_dir) -> SequenceSpec:
    """Read the <seq>/img + groundtruth.txt (+ optional nlp.txt) layout."""
    d = Path(seq_dir)
    gt_path = d / "groundtruth.txt"
    if not gt_path.is_file():
        raise MissingGroundtruth(f"{d}: no groundtruth.txt")
    groundtruth = parse_box_file(gt_path)
    if not groundtruth:
        raise MissingGroundtruth(f"{gt_path}: empty groundtruth file")

    img_dir = d / "img"
    frames = sorted(p for p in img_dir.iterdir()
                    if p.suffix.lower() in _FRAME_SUFFIXES) if img_dir.is_dir() else []
    if not frames:
        raise EmptySequence(f"{d}: no frames under img/")

    if len(groundtruth) > len(frames):
        logger.warning("%s: %d groundtruth lines for %d frames; truncating",
                       d.name, len(groundtruth), len(frames))
        groundtruth = groundtruth[: len(frames)]
    if groundtruth[0].area <= 0:
        raise GroundtruthFormatError(f"{gt_path}: first box must have positive area")

    nlp_path = d / "nlp.txt"
    language = nlp_path.read_text(encoding="utf-8").strip() if nlp_path.is_file() else None
    return SequenceSpec(name=d.name, frame_paths=frames,
                        groundtruth=groundtruth, language=language)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackendConfig:
    mllm_url: Optional[str] = None
    mllm_model: str = "default"
    gvlm_url: Optional[str] = None
    tracker_url: Optional[str] = None
    embed_url: Optional[str] = None
    scripted_scene: Optional[Path] = None

    def has_live_source(self) -> bool:
        if self.scripted_scene is not None:
            return True
        return all((self.mllm_url, self.gvlm_url, self.tracker_url, self.embed_url))


@dataclass(frozen=True)
class EngineConfig:
    rpo: RpoConfig = RpoConfig()
    backends: BackendConfig = BackendConfig()
    mode: str = "live"
    context_factor: float = 1.0
    emit_scores: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.context_factor < 1.0:
            raise ConfigError(f"context_factor must be >= 1, got {self.context_factor}")
        if self.mode in ("live", "record") and not self.backends.has_live_source():
            raise ConfigError(
                f"mode {self.mode!r} needs either scripted_scene or all four "
                "backend endpoints configured")


def _pick(table: dict, allowed: set[str], where: str) -> dict:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return dict(table)


def load_config(path, mode: str = "live") -> EngineConfig:
    """Parse the TOML config ([rpo], [backends], [pipeline] tables)."""
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{p}: {exc}")

    rpo_tbl = _pick(data.get("rpo", {}),
                    {"theta1", "theta2", "theta3", "epsilon", "max_iters"}, "rpo")
    try:
        rpo_cfg = RpoConfig(**rpo_tbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[rpo]: {exc}")

    b_tbl = _pick(data.get("backends", {}),
                  {"mllm_url", "mllm_model", "gvlm_url", "tracker_url",
                   "embed_url", "scripted_scene"}, "backends")
    if "scripted_scene" in b_tbl:
        scene = Path(b_tbl["scripted_scene"])
        if not scene.is_absolute():
            scene = p.parent / scene
        b_tbl["scripted_scene"] = scene
    backend_cfg = BackendConfig(**b_tbl)

    p_tbl = _pick(data.get("pipeline", {}), {"context_factor", "emit_scores"}, "pipeline")
    try:
        return EngineConfig(rpo=rpo_cfg, backends=backend_cfg, mode=mode, **p_tbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[pipeline]: {exc}")


def apply_overrides(config: EngineConfig, overrides: list[str]) -> EngineConfig:
    """Apply dotted-key overrides like 'rpo.epsilon=0.5'; CLI beats file."""
    rpo_updates: dict = {}
    pipeline_updates: dict = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form table.key=value")
        key, _, raw = item.partition("=")
        table, _, name = key.strip().partition(".")
        raw = raw.strip()
        if table == "rpo":
            if name not in {f.name for f in fields(RpoConfig)}:
                raise ConfigError(f"unknown rpo key {name!r}")
            rpo_updates[name] = int(raw) if name == "max_iters" else float(raw)
        elif table == "pipeline":
            if name == "context_factor":
                pipeline_updates[name] = float(raw)
            elif name == "emit_scores":
                pipeline_updates[name] = raw.lower() in ("1", "true", "yes")
            else:
                raise ConfigError(f"unknown pipeline key {name!r}")
        else:
            raise ConfigError(f"unknown override table {table!r}")
    try:
        new_rpo = replace(config.rpo, **rpo_updates) if rpo_updates else config.rpo
    except ValueError as exc:
        raise ConfigError(str(exc))
    return replace(config, rpo=new_rpo, **pipeline_updates)


def prepare_backends(config: EngineConfig,
                     cassette_path: Optional[Path]) -> tuple[BackendSet, Optional[Cassette]]:
    """Build the backend set for the configured mode.

    Replay constructs backends purely from the cassette and never touches a
    live endpoint; record returns the cassette being written so the caller
    can persist it.
    """
    if config.mode == "replay":
        if cassette_path is None or not Path(cassette_path).is_file():
            raise ConfigError(f"replay mode requires a cassette at {cassette_path}")
        return replay_backends(Cassette.load(cassette_path)), None

    bc = config.backends
    if bc.scripted_scene is not None:
        if not Path(bc.scripted_scene).is_file():
            raise ConfigError(f"scripted scene not found: {bc.scripted_scene}")
        live = synth.scene_backends(synth.load_scene(bc.scripted_scene))
    else:
        live = BackendSet(
            mllm=HttpChatBackend(bc.mllm_url, model=bc.mllm_model),
            gvlm=HttpGroundingBackend(bc.gvlm_url),
            tracker=HttpTrackerBackend(bc.tracker_url),
            embedder=HttpEmbeddingBackend(bc.embed_url),
        )
    if config.mode == "record":
        if cassette_path is None:
            raise ConfigError("record mode requires a cassette path")
        cassette = Cassette()
        return record_backends(live, cassette), cassette
    return live, None


# ---------------------------------------------------------------------------
# The run itself
# ---------------------------------------------------------------------------

@dataclass
class FrameScores:
    frame: int
    table: list[ScoredProposal]
    chosen: ScoredProposal


@dataclass
class SequenceResult:
    name: str
    predictions: list[BBox] = field(default_factory=list)
    rpo_trace: Optional[RpoTrace] = None
    partition: Optional[TokenPartition] = None
    bypass: bool = False
    frame_scores: list[FrameScores] = field(default_factory=list)
    error: Optional[dict] = None

    @property
    def completed(self) -> bool:
        return self.error is None


class SequenceAborted(EngineError):
    """Carries the partial result of a sequence that hit a backend error."""

    def __init__(self, result: SequenceResult, cause: Exception):
        super().__init__(f"{result.name}: {type(cause).__name__}: {cause}")
        self.result = result
        self.cause = cause


def run_sequence(spec: SequenceSpec, config: EngineConfig,
                 backends: BackendSet) -> SequenceResult:
    """Track one sequence; exactly one prediction per frame on success.

    The chat model is consulted only while processing the first frame; from
    frame 2 on the grounder is called at most once per frame (never in
    bypass mode).
    """
    result = SequenceResult(name=spec.name)
    try:
        _run_sequence_inner(spec, config, backends, result)
    except EngineError as exc:
        result.error = {
            "error": type(exc).__name__,
            "message": str(exc),
            "frames_completed": len(result.predictions),
        }
        raise SequenceAborted(result, exc)
    return result


def _run_sequence_inner(spec: SequenceSpec, config: EngineConfig,
                        backends: BackendSet, result: SequenceResult) -> None:
    gt0 = spec.groundtruth[0]
    frame1 = load_image(spec.frame_paths[0])
    backends.tracker.init(frame1, gt0)
    result.predictions.append(gt0)

    # Template image for grounding and verification is the full first frame.
    descriptions, trace = rpo_mod.optimize(
        frame1, frame1, gt0, backends.mllm, backends.gvlm, config.rpo)
    result.rpo_trace = trace

    partition = semantic.track_descriptions(
        frame1, frame1, gt0, descriptions, backends.mllm, backends.gvlm, config.rpo)
    result.partition = partition
    result.bypass = partition is None

    scorer = None
    if partition is not None:
        template_patch = crop(frame1, gt0, config.context_factor)
        scorer = ForegroundScorer(backends.embedder, template_patch,
                                  config.context_factor)

    for t, path in enumerate(spec.frame_paths[1:], start=2):
        frame = load_image(path)
        vt_box, _vt_conf = backends.tracker.predict(frame)
        if partition is None:
            result.predictions.append(vt_box)
            continue
        grounding = backends.gvlm.ground(frame, partition.caption)
        proposals = classify_frame(grounding, partition, vt_box, config.rpo)
        fore_scores = scorer.scores(frame, proposals)
        back_scores = background_scores(proposals)
        chosen, table = combine_and_select(proposals, fore_scores, back_scores)
        result.predictions.append(chosen.box)
        if config.emit_scores:
            result.frame_scores.append(FrameScores(frame=t, table=table, chosen=chosen))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_predictions(predictions: list[BBox], path) -> None:
    """One 'x,y,w,h' line per frame, 4 decimal places; empty list -> empty file."""
    lines = [",".join(f"{v:.4f}" for v in b.as_tuple()) for b in predictions]
    text = "\n".join(lines) + ("\n" if lines else "")
    Path(path).write_text(text, encoding="utf-8")


def load_predictions(path) -> list[BBox]:
    return parse_box_file(path)


def _scores_jsonl(frame_scores: list[FrameScores]) -> str:
    lines = []
    for fs in frame_scores:
        lines.append(json.dumps({
            "frame": fs.frame,
            "candidates": [{
                "box": list(sp.box.as_tuple()),
                "source": sp.source.value,
                "s_fore": sp.s_fore,
                "s_back": sp.s_back,
                "s": sp.s,
            } for sp in fs.table],
            "chosen": list(fs.chosen.box.as_tuple()),
        }, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def save_artifacts(result: SequenceResult, out_dir, emit_scores: bool = False) -> None:
    """Write predictions plus trace/partition/scores/error files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_predictions(result.predictions, out / "predictions.txt")
    if result.rpo_trace is not None:
        result.rpo_trace.save(out / "rpo_trace.jsonl")
    if result.partition is not None:
        result.partition.save(out / "partition.json")
    elif result.bypass:
        (out / "partition.json").write_text(json.dumps({"bypass": True}),
                                            encoding="utf-8")
    if emit_scores:
        (out / "scores.jsonl").write_text(_scores_jsonl(result.frame_scores),
                                          encoding="utf-8")
    if result.error is not None:
        (out / "error.json").write_text(
            json.dumps(result.error, sort_keys=True, indent=1), encoding="utf-8")


def run_and_save(spec: SequenceSpec, config: EngineConfig, out_dir,
                 backends: Optional[BackendSet] = None) -> SequenceResult:
    """Run one sequence end to end, persisting outputs (and cassette) always."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cassette_path = out / "cassette.json"
    cassette = None
    if backends is None:
        backends, cassette = prepare_backends(config, cassette_path)
    try:
        result = run_sequence(spec, config, backends)
    except SequenceAborted as exc:
        result = exc.result
    finally:
        if cassette is not None:
            cassette.save(cassette_path)
    save_artifacts(result, out, emit_scores=config.emit_scores)
    return result
