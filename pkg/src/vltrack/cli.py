"""Command-line entry point.

Subcommands: track (run sequences), rpo (first-frame description loop only),
eval (metrics from prediction/groundtruth files), synth (offline fixture
generator), replay-verify (re-run a cassette and diff outputs).

Exit codes: 0 success, 1 usage/config error before any run, 2 partial run
failure. Every subcommand honors --mode; replay never falls back to live.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import metrics, pipeline, synth
from .backends.cassette import CassetteExhausted, DigestMismatch
from .errors import ConfigError, EngineError
from .pipeline import EngineConfig, apply_overrides, load_config, load_sequence
from .rpo import optimize


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1, not argparse's default 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vltrack",
                     description="Vision-language tracking engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="TOML config file")
        p.add_argument("--mode", choices=pipeline.MODES, default="live")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="output directory")
        p.add_argument("-O", "--override", action="append", default=[],
                       metavar="TABLE.KEY=VALUE",
                       help="config override, e.g. rpo.epsilon=0.5")

    p_track = sub.add_parser("track", help="run the tracking pipeline")
    add_common(p_track)
    p_track.add_argument("sequences", nargs="+", type=Path,
                         help="sequence directories")
    p_track.add_argument("--jobs", type=int, default=1,
                         help="sequences processed concurrently")

    p_rpo = sub.add_parser("rpo", help="run only the description loop on frame 1")
    add_common(p_rpo)
    p_rpo.add_argument("sequence", type=Path)

    p_eval = sub.add_parser("eval", help="compute metrics for a prediction file")
    p_eval.add_argument("pred", type=Path,
                        help="predictions.txt or a directory containing it")
    p_eval.add_argument("gt", type=Path,
                        help="groundtruth.txt or a sequence directory")
    p_eval.add_argument("--json", type=Path, help="also write the report as JSON")

    p_synth = sub.add_parser("synth", help="generate a synthetic offline sequence")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--frames", type=int, default=30)
    p_synth.add_argument("--size", type=int, default=256)
    p_synth.add_argument("--seed", type=int, default=0)

    p_rv = sub.add_parser("replay-verify",
                          help="re-run a recorded cassette and diff the outputs")
    p_rv.add_argument("sequence", type=Path)
    p_rv.add_argument("--config", type=Path)
    p_rv.add_argument("--golden", type=Path, required=True,
                      help="directory with cassette.json and predictions.txt")
    p_rv.add_argument("-O", "--override", action="append", default=[],
                      metavar="TABLE.KEY=VALUE")
    return parser


def _load_engine_config(args) -> EngineConfig:
    if args.config is not None:
        cfg = load_config(args.config, mode=args.mode)
    else:
        cfg = EngineConfig(mode=args.mode)
    return apply_overrides(cfg, args.override)


def cmd_track(args) -> int:
    # Validation phase: any failure here means nothing has run yet.
    specs = [load_sequence(d) for d in args.sequences]
    config = _load_engine_config(args)
    if config.mode == "replay":
        for spec in specs:
            cassette = args.out / spec.name / "cassette.json"
            if not cassette.is_file():
                raise ConfigError(f"replay mode: no cassette for {spec.name} "
                                  f"at {cassette}")

    def run_one(spec) -> bool:
        out_dir = args.out / spec.name
        try:
            result = pipeline.run_and_save(spec, config, out_dir)
        except EngineError as exc:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(json.dumps({
                "error": type(exc).__name__, "message": str(exc),
                "frames_completed": 0}, indent=1), encoding="utf-8")
            print(f"{spec.name}: FAILED ({exc})", file=sys.stderr)
            return False
        if not result.completed:
            print(f"{spec.name}: ABORTED after {len(result.predictions)} frames "
                  f"({result.error['error']})", file=sys.stderr)
            return False
        print(f"{spec.name}: {len(result.predictions)} frames"
              + (" [bypass]" if result.bypass else ""))
        return True

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run_one, specs))
    else:
        outcomes = [run_one(s) for s in specs]
    return 0 if all(outcomes) else 2


def cmd_rpo(args) -> int:
    config = _load_engine_config(args)
    spec = load_sequence(args.sequence)
    out_dir = args.out / spec.name
    out_dir.mkdir(parents=True, exist_ok=True)
    cassette_path = out_dir / "cassette.json"
    if config.mode == "replay" and not cassette_path.is_file():
        raise ConfigError(f"replay mode: no cassette at {cassette_path}")
    backends, cassette = pipeline.prepare_backends(config, cassette_path)
    frame1 = pipeline.load_image(spec.frame_paths[0])
    try:
        descriptions, trace = optimize(frame1, frame1, spec.groundtruth[0],
                                       backends.mllm, backends.gvlm, config.rpo)
    finally:
        if cassette is not None:
            cassette.save(cassette_path)
    trace.save(out_dir / "rpo_trace.jsonl")
    for it in trace.iterations:
        print(f"iter {it.index}: r={it.quality:.4f} fore={it.fore!r} "
              f"pos={sorted(it.pos_words)} neg={sorted(it.neg_words)}")
    print(f"{trace.outcome} (chosen iteration {trace.chosen_iter}); "
          f"fore={descriptions.fore!r}")
    return 0


def _resolve_boxes(path: Path, filename: str):
    if path.is_dir():
        path = path / filename
    if not path.is_file():
        raise ConfigError(f"no such file: {path}")
    return pipeline.parse_box_file(path)


def cmd_eval(args) -> int:
    pred = _resolve_boxes(args.pred, "predictions.txt")
    gt = _resolve_boxes(args.gt, "groundtruth.txt")
    report = metrics.report(pred, gt)
    print(report.to_text())
    if args.json:
        args.json.write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    scene = synth.generate_scene(frames=args.frames, size=args.size, seed=args.seed)
    out = synth.write_sequence(scene, args.out)
    print(f"wrote {scene.frames} frames to {out}")
    return 0


def cmd_replay_verify(args) -> int:
    golden_cassette = args.golden / "cassette.json"
    golden_preds = args.golden / "predictions.txt"
    for p in (golden_cassette, golden_preds):
        if not p.is_file():
            raise ConfigError(f"golden directory is missing {p.name}")
    if args.config is not None:
        config = load_config(args.config, mode="replay")
    else:
        config = EngineConfig(mode="replay")
    config = apply_overrides(config, args.override)
    spec = load_sequence(args.sequence)

    with tempfile.TemporaryDirectory(prefix="vltrack-rv-") as tmp:
        backends, _ = pipeline.prepare_backends(config, golden_cassette)
        try:
            result = pipeline.run_and_save(spec, config, Path(tmp), backends=backends)
        except (DigestMismatch, CassetteExhausted) as exc:
            print(f"cassette verification failed: {type(exc).__name__}: {exc}",
                  file=sys.stderr)
            return 2
        if not result.completed:
            print(f"replay aborted: {result.error}", file=sys.stderr)
            return 2
        replayed = (Path(tmp) / "predictions.txt").read_bytes()
    if replayed != golden_preds.read_bytes():
        print("predictions differ from the golden file", file=sys.stderr)
        return 2
    print(f"{spec.name}: replay matches golden predictions "
          f"({len(result.predictions)} frames)")
    return 0


_COMMANDS = {
    "track": cmd_track,
    "rpo": cmd_rpo,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "replay-verify": cmd_replay_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
