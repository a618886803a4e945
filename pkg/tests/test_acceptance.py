"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to get one PASS line per
criterion; any assertion failure marks that criterion red.
"""

import time

import numpy as np
import pytest

from vltrack.backends import (
    Cassette,
    DriftingTracker,
    GroundingResult,
    ScriptedChat,
    ScriptedGrounder,
    record_backends,
    replay_backends,
)
from vltrack.geometry import BBox, iou
from vltrack.metrics import norm_precision, precision, success_auc
from vltrack.pipeline import load_config, load_sequence, run_and_save, run_sequence
from vltrack.rpo import RpoConfig, classify_words, optimize
from vltrack.semantic import FrameProposals, Proposal, Source, partition_tokens
from vltrack.verify import (
    ScoredProposal,
    TripletBatch,
    combine_and_select,
    initial_weights,
    train_toy_embedder,
    triplet_loss,
    triplet_loss_grad,
    select,
)
from vltrack.synth import generate_scene, scene_backends, write_sequence

from oracles import (
    brute_classify_words,
    brute_partition,
    finite_diff_grad,
    rasterized_iou,
)
from test_rpo import loop_backends
from conftest import make_image

CFG = RpoConfig(theta1=0.3, theta2=0.2, theta3=0.1, epsilon=0.4)


def done(name):
    print(f"PASS: {name}")


def test_iou_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        # Integer boxes on a grid no larger than 256 x 256.
        x = rng.integers(0, 220, size=2)
        y = rng.integers(0, 220, size=2)
        small = rng.random() < 0.8
        hi = 36 if small else 256
        w = np.minimum(rng.integers(0, hi, size=2), 256 - x)
        h = np.minimum(rng.integers(0, hi, size=2), 256 - y)
        a = BBox(float(x[0]), float(y[0]), float(w[0]), float(h[0]))
        b = BBox(float(x[1]), float(y[1]), float(w[1]), float(h[1]))
        assert abs(iou(a, b) - rasterized_iou(a, b)) <= 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    done(f"IoU oracle equivalence, 10000 pairs in {elapsed:.2f}s")


def _random_word_instance(rng):
    letters = list("abcdefghijklmnopqrstuvwxyz")
    num_words = int(rng.integers(1, 7))
    words, tokens, token_word = [], [], []
    for w in range(num_words):
        pieces = int(rng.integers(1, 4))  # up to 3 tokens per word
        chunks = ["".join(rng.choice(letters, size=3)) for _ in range(pieces)]
        words.append("".join(chunks))
        tokens.extend(chunks)
        token_word.extend([w] * pieces)
    n = int(rng.integers(0, 9))  # up to 8 proposals
    boxes = [BBox(float(rng.integers(0, 40)), float(rng.integers(0, 40)),
                  float(rng.integers(0, 30)), float(rng.integers(0, 30)))
             for _ in range(n)]
    alignment = rng.random((n, len(tokens)))
    return words, tokens, token_word, boxes, alignment


def test_word_classification_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    gt = BBox(10.0, 10.0, 20.0, 20.0)
    for _ in range(1000):
        words, tokens, token_word, boxes, alignment = _random_word_instance(rng)
        g = GroundingResult(tokens, boxes, alignment)
        pos, neg = classify_words(g, words, gt, CFG)
        ious = [iou(b, gt) for b in boxes]
        opos, oneg = brute_classify_words(alignment, token_word, len(words), ious,
                                          CFG.theta1, CFG.theta2, CFG.theta3)
        assert pos == {words[i] for i in opos}
        assert neg == {words[i] for i in oneg}
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.1f}s"
    done(f"word-classification oracle, 1000 instances in {elapsed:.2f}s")


def test_token_partition_oracle():
    rng = np.random.default_rng(11)
    gt = BBox(10.0, 10.0, 20.0, 20.0)
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(0, 9))
        boxes = [BBox(float(rng.integers(0, 40)), float(rng.integers(0, 40)),
                      float(rng.integers(0, 30)), float(rng.integers(0, 30)))
                 for _ in range(n)]
        alignment = rng.random((n, m))
        g = GroundingResult([f"t{j}" for j in range(m)], boxes, alignment)
        part = partition_tokens(g, gt, CFG)
        ious = [iou(b, gt) for b in boxes]
        fore, back = brute_partition(alignment, ious, CFG.theta1, CFG.theta2, CFG.theta3)
        assert part.fore_token_indices == fore
        assert part.back_token_indices == back
        assert not (part.fore_token_indices & part.back_token_indices)
    done("token-partition oracle, 1000 instances, disjoint every case")


def test_rpo_loop_control():
    img = make_image(64, 64)
    gt = BBox(0.0, 0.0, 100.0, 100.0)

    chat, grounder = loop_backends(
        ["alpha one", "beta two", "gamma three"], [0.2, 0.3, 0.45])
    pair, trace = optimize(img, img, gt, chat, grounder, CFG)
    assert trace.outcome == "converged"
    assert trace.chosen_iter == 3 and len(trace.iterations) == 3
    assert chat.calls == 1 + 2  # init + one update per reflection

    chat, grounder = loop_backends(["alpha one", "beta two"], [0.2, 0.35])
    pair, trace = optimize(img, img, gt, chat, grounder, RpoConfig(max_iters=2))
    assert trace.outcome == "exhausted"
    assert trace.chosen_iter == 2
    assert pair.fore == "beta two"
    assert chat.calls == 1 + 1
    done("reflection loop control: converged-at-3 and exhausted-with-best")


def test_combined_score_grid_and_scaling():
    grid = [round(k * 0.1, 10) for k in range(11)]
    for sf in grid:
        for sb in grid:
            sp = ScoredProposal.make(BBox(0, 0, 1, 1), Source.GROUNDED, sf, sb)
            assert abs(sp.s - sf * (1.0 - sb)) <= 1e-12

    rng = np.random.default_rng(3)
    for _ in range(200):
        k = int(rng.integers(2, 9))
        s_fore = rng.random(k)
        s_back = rng.random(k)
        boxes = [BBox(float(i), 0.0, 1.0, 1.0) for i in range(k)]
        base = select([ScoredProposal.make(b, Source.GROUNDED, f, s)
                       for b, f, s in zip(boxes, s_fore, s_back)])
        c = float(rng.uniform(0.05, 1.0)) / float(s_fore.max())
        c = min(c, 1.0 / float(s_fore.max()))  # keep every scaled value <= 1
        scaled = select([ScoredProposal.make(b, Source.GROUNDED, f * c, s)
                         for b, f, s in zip(boxes, s_fore, s_back)])
        assert scaled.box == base.box
    done("combined score identity on the 11x11 grid + argmax scaling invariance")


def test_triplet_loss_gradient_and_identity():
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 100:
        k, d, out = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(1, 4))
        batch = TripletBatch(rng.normal(size=(k, d)), rng.normal(size=(k, d)),
                             rng.normal(size=(k, d)), margin=float(rng.uniform(0.1, 1.0)))
        w = rng.normal(size=(out, d)) * 0.5
        u = (batch.anchors - batch.positives) @ w.T
        v = (batch.anchors - batch.negatives) @ w.T
        terms = (u ** 2).sum(1) - (v ** 2).sum(1) + batch.margin
        if np.abs(terms).min() <= 1e-3:
            continue  # keep finite differences away from the hinge kink
        _, grad = triplet_loss_grad(batch, w)
        fd = finite_diff_grad(lambda m: triplet_loss(batch, m), w, h=1e-5)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)
        assert rel.max() < 1e-4
        checked += 1

    x = rng.normal(size=(6, 4))
    batch = TripletBatch(x, x, x, margin=0.25)
    assert triplet_loss(batch, initial_weights(4, 3, seed=1)) == pytest.approx(
        6 * 0.25, abs=1e-12)
    done("triplet gradient vs finite differences (100 configs) + K*alpha identity")


def test_toy_embedder_separates_clusters():
    start = time.perf_counter()
    dim, sep = 8, 5.0
    center_a = np.zeros(dim)
    center_b = np.full(dim, sep / np.sqrt(dim))  # |center_b - center_a| = 5 sigma
    rng = np.random.default_rng(23)

    def batch_at(_):
        return TripletBatch(rng.normal(center_a, 1.0, (32, dim)),
                            rng.normal(center_a, 1.0, (32, dim)),
                            rng.normal(center_b, 1.0, (32, dim)), margin=0.2)

    emb = train_toy_embedder(batch_at, dims=(dim, 4), lr=0.002, steps=500, seed=5)
    held = np.random.default_rng(999)
    fa = emb(held.normal(center_a, 1.0, (400, dim)))
    fp = emb(held.normal(center_a, 1.0, (400, dim)))
    fn = emb(held.normal(center_b, 1.0, (400, dim)))
    frac = float(np.mean(((fa - fp) ** 2).sum(1) < ((fa - fn) ** 2).sum(1)))
    elapsed = time.perf_counter() - start
    assert frac >= 0.95, f"only {frac:.3f} of held-out triplets ordered correctly"
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    done(f"toy embedder: {frac * 100:.1f}% held-out triplets ordered in {elapsed:.2f}s")


def test_end_to_end_synthetic(tmp_path):
    start = time.perf_counter()
    scene = generate_scene(frames=30, size=256, seed=0)
    seq_dir = write_sequence(scene, tmp_path / "synthetic")
    spec = load_sequence(seq_dir)
    config = load_config(seq_dir / "config.toml", mode="live")
    gt = scene.groundtruth()

    result = run_sequence(spec, config, scene_backends(scene))
    pipeline_ious = [rasterized_iou(p, g) for p, g in zip(result.predictions, gt)]
    mean_pipeline = float(np.mean(pipeline_ious))

    tracker = DriftingTracker(gt, *scene.tracker_drift)
    tracker.init(None, gt[0])
    tracker_preds = [gt[0]] + [tracker.predict(None)[0] for _ in range(29)]
    mean_tracker = float(np.mean([rasterized_iou(p, g)
                                  for p, g in zip(tracker_preds, gt)]))

    elapsed = time.perf_counter() - start
    assert mean_pipeline >= 0.9, f"pipeline mean IoU {mean_pipeline:.3f}"
    assert mean_tracker < 0.5, f"drifting tracker mean IoU {mean_tracker:.3f}"
    assert elapsed < 30.0, f"took {elapsed:.1f}s"
    done(f"end-to-end synthetic: pipeline {mean_pipeline:.3f} vs tracker "
         f"{mean_tracker:.3f} in {elapsed:.2f}s")


def test_replay_determinism(tmp_path):
    scene = generate_scene(frames=12, size=128, seed=9)
    seq_dir = write_sequence(scene, tmp_path / "synthetic")
    spec = load_sequence(seq_dir)
    config = load_config(seq_dir / "config.toml", mode="live")

    cassette = Cassette()
    run_and_save(spec, config, tmp_path / "rec",
                 backends=record_backends(scene_backends(scene), cassette))
    cassette_path = tmp_path / "cassette.json"
    cassette.save(cassette_path)

    for name in ("rep1", "rep2"):
        run_and_save(spec, config, tmp_path / name,
                     backends=replay_backends(Cassette.load(cassette_path)))

    blobs = [(tmp_path / d / "predictions.txt").read_bytes()
             for d in ("rec", "rep1", "rep2")]
    assert blobs[0] == blobs[1] == blobs[2]
    assert len(blobs[0]) > 0
    done("replay determinism: three byte-identical prediction files")


def test_metric_sanity():
    gt = [BBox(float(10 * i), float(5 * i), 20.0, 30.0) for i in range(10)]
    auc, _ = success_auc(gt, gt)
    assert abs(auc - 95.24) <= 0.01
    p, _ = precision(gt, gt)
    assert p == 100.0
    pn, skipped = norm_precision(gt, gt)
    assert pn == 100.0 and skipped == 0

    base = [BBox(0.0, 0.0, 50.0, 20.0)]
    at20 = [BBox(20.0, 0.0, 50.0, 20.0)]
    at21 = [BBox(21.0, 0.0, 50.0, 20.0)]
    assert precision(at20, base)[0] == 100.0
    assert precision(at21, base)[0] == 0.0
    at_norm = [BBox(0.2 * 50.0, 0.0, 50.0, 20.0)]
    beyond_norm = [BBox(0.25 * 50.0, 0.0, 50.0, 20.0)]
    assert norm_precision(at_norm, base)[0] == 100.0
    assert norm_precision(beyond_norm, base)[0] == 0.0
    done("metric sanity: AUC 95.24 +/- 0.01, P=100, P_norm=100, boundaries exact")
