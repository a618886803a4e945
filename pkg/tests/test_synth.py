import numpy as np
import pytest

from vltrack.backends import ChatRequest, Rejected
from vltrack.geometry import BBox, iou, load_image
from vltrack.synth import (
    SceneSpec,
    generate_scene,
    load_scene,
    render_frame,
    scene_backends,
    scene_from_dict,
    scene_to_dict,
    write_sequence,
)


def test_generate_scene_contract():
    scene = generate_scene(frames=30, size=256, seed=0)
    assert scene.frames == 30
    assert len(scene.groundtruth()) == 30
    assert len(scene.distractors) == 2


def test_objects_stay_in_bounds_and_disjoint():
    scene = generate_scene(frames=30, size=256, seed=0)
    for t in range(scene.frames):
        target = scene.target.box_at(t)
        for o in scene.objects:
            b = o.box_at(t)
            assert b.x >= 0 and b.y >= 0
            assert b.right <= scene.width and b.bottom <= scene.height
        for d in scene.distractors:
            assert iou(target, d.box_at(t)) == 0.0


def test_render_then_detect_oracle():
    # The groundtruth must be recoverable by reading target-colored pixels back.
    scene = generate_scene(frames=8, size=128, seed=4)
    color = np.array(scene.target.color, dtype=np.uint8)
    for t in range(scene.frames):
        img = render_frame(scene, t)
        mask = (img == color).all(axis=2)
        ys, xs = np.nonzero(mask)
        box = scene.target.box_at(t)
        assert xs.min() == box.x and ys.min() == box.y
        assert xs.max() == box.right - 1 and ys.max() == box.bottom - 1


def test_write_sequence_layout(tmp_path):
    scene = generate_scene(frames=5, size=128, seed=1)
    out = write_sequence(scene, tmp_path / "seq")
    frames = sorted((out / "img").glob("*.png"))
    assert len(frames) == 5
    gt_lines = (out / "groundtruth.txt").read_text().strip().splitlines()
    assert len(gt_lines) == 5
    assert (out / "scene.json").is_file()
    assert (out / "config.toml").is_file()


def test_written_frames_match_rendering(tmp_path):
    scene = generate_scene(frames=3, size=96, seed=2)
    out = write_sequence(scene, tmp_path / "seq")
    for t in range(3):
        on_disk = load_image(out / "img" / f"{t + 1:06d}.png")
        assert (on_disk == render_frame(scene, t)).all()


def test_deterministic_bytes_across_runs(tmp_path):
    a = write_sequence(generate_scene(frames=4, size=96, seed=7), tmp_path / "a")
    b = write_sequence(generate_scene(frames=4, size=96, seed=7), tmp_path / "b")
    for rel in ["groundtruth.txt", "scene.json", "img/000001.png", "img/000004.png"]:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_different_seed_changes_pixels(tmp_path):
    s1 = render_frame(generate_scene(frames=2, size=96, seed=1), 0)
    s2 = render_frame(generate_scene(frames=2, size=96, seed=2), 0)
    assert not (s1 == s2).all()


def test_scene_json_round_trip(tmp_path):
    scene = generate_scene(frames=6, size=128, seed=3)
    path = tmp_path / "scene.json"
    import json
    path.write_text(json.dumps(scene_to_dict(scene)))
    back = load_scene(path)
    assert back == scene


# -- scene-bound backends -------------------------------------------------------------

def test_scene_chat_dispatch():
    scene = generate_scene(frames=3, size=96, seed=0)
    chat = scene_backends(scene).mllm
    desc = chat.complete(ChatRequest(prompt="Describe... FOREGROUND: ... BACKGROUND: ..."))
    assert "FOREGROUND: red square" in desc
    assert "BACKGROUND: blue box. yellow box" in desc
    verdict = chat.complete(ChatRequest(prompt="Reply with VERDICT: ..."))
    assert verdict == "VERDICT: SUITABLE"


def test_scene_grounder_recognizes_frames_and_vocab():
    scene = generate_scene(frames=3, size=96, seed=0)
    grounder = scene_backends(scene).gvlm
    img = render_frame(scene, 1)
    g = grounder.ground(img, "red. square. blue. box. yellow. box.")
    assert g.tokens == ["red", "square", "blue", "box", "yellow", "box"]
    assert g.n == 3
    assert g.proposals[0] == scene.target.box_at(1)
    # Target row aligns with its own words only.
    assert g.alignment[0].tolist() == [0.9, 0.9, 0.0, 0.0, 0.0, 0.0]
    assert g.alignment[1].tolist() == [0.0, 0.0, 0.9, 0.9, 0.0, 0.9]


def test_scene_grounder_rejects_foreign_image():
    scene = generate_scene(frames=3, size=96, seed=0)
    grounder = scene_backends(scene).gvlm
    with pytest.raises(Rejected):
        grounder.ground(np.zeros((96, 96, 3), dtype=np.uint8), "red")
