"""Cassette record/replay: run once, replay bit-exactly, catch tampering.

Run:  python3 demos/04_record_replay.py
"""

import json
import tempfile
from pathlib import Path

from vltrack.backends import Cassette, DigestMismatch, record_backends, replay_backends
from vltrack.pipeline import load_config, load_sequence, run_and_save
from vltrack.synth import generate_scene, scene_backends, write_sequence

workdir = Path(tempfile.mkdtemp(prefix="vltrack-demo-"))
scene = generate_scene(frames=12, size=128, seed=3)
seq_dir = write_sequence(scene, workdir / "synthetic")
spec = load_sequence(seq_dir)
config = load_config(seq_dir / "config.toml", mode="live")

# Record a run.
cassette = Cassette()
run_and_save(spec, config, workdir / "recorded",
             backends=record_backends(scene_backends(scene), cassette))
cassette_path = workdir / "cassette.json"
cassette.save(cassette_path)
print(f"recorded {len(cassette.entries)} backend calls")
kinds = sorted({e['kind'] for e in cassette.entries})
print(f"call kinds: {kinds}")

# Replay it twice; outputs must be byte-identical.
for name in ("replay1", "replay2"):
    run_and_save(spec, config, workdir / name,
                 backends=replay_backends(Cassette.load(cassette_path)))
blobs = [(workdir / d / "predictions.txt").read_bytes()
         for d in ("recorded", "replay1", "replay2")]
print(f"three prediction files identical: {blobs[0] == blobs[1] == blobs[2]}")

# Tamper with one digest and watch replay refuse.
entries = json.loads(cassette_path.read_text())
entries[5]["digest"] = "0" * 64
cassette_path.write_text(json.dumps(entries))
try:
    run_and_save(spec, config, workdir / "tampered",
                 backends=replay_backends(Cassette.load(cassette_path)))
except Exception as exc:
    root = exc.__cause__ or exc
    print(f"tampered cassette rejected: the run aborted "
          f"({type(root).__name__} recorded in error.json)")
else:
    aborted = json.loads((workdir / "tampered" / "error.json").read_text())
    print(f"tampered cassette rejected: {aborted['error']}: aborted after "
          f"{aborted['frames_completed']} frames")
