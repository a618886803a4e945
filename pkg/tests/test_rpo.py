import json

import numpy as np
import pytest

from vltrack.backends import GroundingResult, ScriptedChat, ScriptedGrounder
from vltrack.geometry import BBox, iou
from vltrack.rpo import (
    DescriptionPair,
    ExtractionFailed,
    RpoConfig,
    TokenMapFailure,
    classify_words,
    extract_descriptions,
    map_tokens_to_words,
    optimize,
    quality,
    render_init_prompt,
    render_update_prompt,
)

from conftest import make_image
from oracles import brute_classify_words, rasterized_iou

CFG = RpoConfig()  # theta1=0.3, theta2=0.2, theta3=0.1, epsilon=0.4


# -- config invariants --------------------------------------------------------

def test_config_defaults():
    assert (CFG.theta1, CFG.theta2, CFG.theta3, CFG.epsilon) == (0.3, 0.2, 0.1, 0.4)
    assert CFG.max_iters == 5


@pytest.mark.parametrize("kwargs", [
    {"theta1": 0.05, "theta3": 0.1},   # theta3 >= theta1
    {"theta2": 0.0},
    {"theta2": 1.0},
    {"epsilon": 0.0},
    {"epsilon": 1.5},
    {"max_iters": 0},
])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        RpoConfig(**kwargs)


# -- description extraction -----------------------------------------------------

def test_extract_exact_format():
    pair = extract_descriptions("FOREGROUND: a red car\nBACKGROUND: road. trees")
    assert pair.fore == "a red car"
    assert pair.back == "road. trees"
    assert pair.fore_words == ("a", "red", "car")
    assert pair.back_words == ("road", "trees")


@pytest.mark.parametrize("reply,fore,back", [
    ("**Foreground:** Red Car.\n**Background:** road", "red car", "road"),
    ("- FOREGROUND: dog\n- BACKGROUND: grass. sky", "dog", "grass. sky"),
    ("Sure!\nFOREGROUND - blue kite\nBACKGROUND - beach", "blue kite", "beach"),
    ("foreground: Tall MAN\nbackground: Crowd.", "tall man", "crowd"),
    ("FOREGROUND: cat", "cat", ""),
])
def test_extract_tolerance_table(reply, fore, back):
    pair = extract_descriptions(reply)
    assert pair.fore == fore
    assert pair.back == back


def test_extract_last_occurrence_wins():
    reply = ("FOREGROUND: first guess\nBACKGROUND: stuff\n"
             "Wait, let me correct that.\n"
             "FOREGROUND: second guess\nBACKGROUND: other stuff")
    pair = extract_descriptions(reply)
    assert pair.fore == "second guess"
    assert pair.back == "other stuff"


def test_extract_failure_cases():
    with pytest.raises(ExtractionFailed):
        extract_descriptions("I cannot identify the object.")
    with pytest.raises(ExtractionFailed):
        extract_descriptions("FOREGROUND: ...\nBACKGROUND: road")


def test_description_pair_word_invariant():
    pair = DescriptionPair.from_texts("  A   red, car!  ", "road.")
    assert " ".join(pair.fore_words) == pair.fore


# -- prompt templates -------------------------------------------------------------

def test_init_prompt_contract():
    p1, p2 = render_init_prompt(), render_init_prompt()
    assert p1 == p2
    assert "FOREGROUND:" in p1 and "BACKGROUND:" in p1
    assert "green" in p1.lower()


def test_update_prompt_lists_words():
    p = render_update_prompt({"hanging"}, {"person"})
    assert "hanging" in p and "person" in p
    assert "FOREGROUND:" in p


def test_update_prompt_empty_sets_fresh_strategy():
    p = render_update_prompt(set(), set())
    assert "different description strategy" in p


def test_update_prompt_deterministic_and_sorted():
    a = render_update_prompt({"b", "a"}, {"z", "y"})
    b = render_update_prompt({"a", "b"}, {"y", "z"})
    assert a == b
    assert a.index("a,") < a.index("b.")


# -- token/word mapping -------------------------------------------------------------

def test_map_identity():
    assert map_tokens_to_words(["red", "car"], ["red", "car"]) == [0, 1]


def test_map_wordpieces():
    assert map_tokens_to_words(["re", "##d", "car"], ["red", "car"]) == [0, 0, 1]


def test_map_punctuation_tokens_unassigned():
    assert map_tokens_to_words(["red", ".", "car", "."], ["red", "car"]) == [0, None, 1, None]


def test_map_failures():
    with pytest.raises(TokenMapFailure):
        map_tokens_to_words(["redcar"], ["red", "car"])
    with pytest.raises(TokenMapFailure):
        map_tokens_to_words(["red"], ["red", "car"])
    with pytest.raises(TokenMapFailure):
        map_tokens_to_words(["red", "car", "extra"], ["red", "car"])


# -- word classification ---------------------------------------------------------------

def grounding_for(words_tokens, boxes, alignment):
    tokens = [t for toks in words_tokens for t in toks]
    return GroundingResult(tokens, boxes, np.asarray(alignment, dtype=float))


def test_classify_both_thresholds_cleared():
    gt = BBox(0, 0, 10, 10)
    g = grounding_for([["red"]], [BBox(0, 0, 10, 9)], [[0.9]])
    assert iou(g.proposals[0], gt) > 0.3
    pos, neg = classify_words(g, ["red"], gt, CFG)
    assert pos == {"red"} and neg == set()


def test_classify_low_iou_is_negative():
    gt = BBox(0, 0, 10, 10)
    box = BBox(0, 0, 10, 0.5263)  # IoU ~ 0.05 < theta3
    g = grounding_for([["red"]], [box], [[0.9]])
    assert iou(box, gt) < 0.1
    pos, neg = classify_words(g, ["red"], gt, CFG)
    assert pos == set() and neg == {"red"}


def test_classify_unmatched_word_is_negative():
    gt = BBox(0, 0, 10, 10)
    g = grounding_for([["red"]], [BBox(0, 0, 10, 10)], [[0.1]])
    pos, neg = classify_words(g, ["red"], gt, CFG)
    assert pos == set() and neg == {"red"}


def test_classify_mid_iou_is_unclassified():
    gt = BBox(0, 0, 10, 10)
    box = BBox(0, 0, 10, 2)  # IoU = 0.2, between theta3 and theta1
    g = grounding_for([["red"]], [box], [[0.9]])
    pos, neg = classify_words(g, ["red"], gt, CFG)
    assert pos == set() and neg == set()


def random_instance(rng):
    num_words = int(rng.integers(1, 7))
    words, tokens, token_word = [], [], []
    letters = "abcdefghijklmnopqrstuvwxyz"
    for w in range(num_words):
        pieces = int(rng.integers(1, 4))
        chunks = ["".join(rng.choice(list(letters), size=3)) for _ in range(pieces)]
        words.append("".join(chunks))
        for c in chunks:
            tokens.append(c)
            token_word.append(w)
    n = int(rng.integers(0, 9))
    boxes = []
    for _ in range(n):
        x, y = rng.integers(0, 40, size=2)
        w_, h_ = rng.integers(0, 30, size=2)
        boxes.append(BBox(float(x), float(y), float(w_), float(h_)))
    alignment = rng.random((n, len(tokens)))
    gt = BBox(10.0, 10.0, 20.0, 20.0)
    return words, tokens, token_word, boxes, alignment, gt


def test_classify_matches_brute_force_oracle(rng):
    for _ in range(1000):
        words, tokens, token_word, boxes, alignment, gt = random_instance(rng)
        g = GroundingResult(tokens, boxes, alignment)
        pos, neg = classify_words(g, words, gt, CFG)
        ious = [iou(b, gt) for b in boxes]
        opos, oneg = brute_classify_words(alignment, token_word, len(words), ious,
                                          CFG.theta1, CFG.theta2, CFG.theta3)
        assert pos == {words[i] for i in opos}
        assert neg == {words[i] for i in oneg}
        assert not (pos & neg)


def test_positive_words_recheckable_post_hoc(rng):
    for _ in range(100):
        words, tokens, token_word, boxes, alignment, gt = random_instance(rng)
        g = GroundingResult(tokens, boxes, alignment)
        pos, _ = classify_words(g, words, gt, CFG)
        for word in pos:
            wi = words.index(word)
            cols = [m for m, w in enumerate(token_word) if w == wi]
            ok = any(
                max(alignment[i, m] for m in cols) > CFG.theta2
                and iou(boxes[i], gt) > CFG.theta1
                for i in range(len(boxes)))
            assert ok


# -- quality -----------------------------------------------------------------------------

def test_quality_max_includes_identity():
    gt = BBox(0, 0, 10, 10)
    g = grounding_for([["a"]], [gt, BBox(50, 50, 5, 5)], [[0.5], [0.5]])
    assert quality(g, gt) == 1.0


def test_quality_empty_is_zero():
    gt = BBox(0, 0, 10, 10)
    g = GroundingResult(["a"], [], np.zeros((0, 1)))
    assert quality(g, gt) == 0.0


def test_quality_oracle_values():
    gt = BBox(0, 0, 10, 10)
    boxes = [BBox(5, 0, 10, 10), BBox(100, 100, 5, 5)]
    assert rasterized_iou(boxes[0], gt) == pytest.approx(1 / 3)
    g = grounding_for([["a"]], boxes, [[0.5], [0.5]])
    assert quality(g, gt) == pytest.approx(1 / 3, abs=1e-12)


# -- the optimization loop ------------------------------------------------------------------

GT = BBox(0.0, 0.0, 100.0, 100.0)


def result_with_quality(caption_words, r):
    """One proposal whose IoU with GT is exactly r (nested boxes)."""
    box = BBox(0.0, 0.0, 100.0, 100.0 * r)
    tokens = list(caption_words)
    alignment = np.full((1, len(tokens)), 0.9)
    return GroundingResult(tokens, [box], alignment)


def loop_backends(descriptions, qualities):
    replies = [f"FOREGROUND: {d}\nBACKGROUND: static scenery" if i == 0
               else f"FOREGROUND: {d}" for i, d in enumerate(descriptions)]
    grounder = ScriptedGrounder({
        d: result_with_quality(d.split(), r) for d, r in zip(descriptions, qualities)})
    return ScriptedChat(replies), grounder


def test_optimize_converges_first_iteration():
    chat, grounder = loop_backends(["alpha one"], [0.9])
    img = make_image(64, 64)
    pair, trace = optimize(img, img, BBox(0, 0, 100, 100), chat, grounder, CFG)
    assert trace.outcome == "converged"
    assert len(trace.iterations) == 1
    assert chat.calls == 1
    assert pair.fore == "alpha one"
    assert pair.back == "static scenery"


def test_optimize_converges_at_three():
    chat, grounder = loop_backends(
        ["alpha one", "beta two", "gamma three"], [0.2, 0.3, 0.45])
    img = make_image(64, 64)
    pair, trace = optimize(img, img, GT, chat, grounder, CFG)
    assert trace.outcome == "converged"
    assert [round(it.quality, 6) for it in trace.iterations] == [0.2, 0.3, 0.45]
    assert trace.chosen_iter == 3
    assert chat.calls == 3  # init + one update per non-final iteration
    assert pair.fore == "gamma three"


def test_optimize_exhausted_returns_best_iteration():
    cfg = RpoConfig(max_iters=2)
    chat, grounder = loop_backends(["alpha one", "beta two"], [0.2, 0.35])
    img = make_image(64, 64)
    pair, trace = optimize(img, img, GT, chat, grounder, cfg)
    assert trace.outcome == "exhausted"
    assert len(trace.iterations) == 2
    assert trace.chosen_iter == 2
    assert chat.calls == 2
    assert pair.fore == "beta two"


def test_optimize_background_frozen():
    chat = ScriptedChat([
        "FOREGROUND: alpha one\nBACKGROUND: original backdrop",
        "FOREGROUND: beta two\nBACKGROUND: hijacked backdrop",
        "FOREGROUND: gamma three",
    ])
    grounder = ScriptedGrounder({
        "alpha one": result_with_quality(["alpha", "one"], 0.1),
        "beta two": result_with_quality(["beta", "two"], 0.2),
        "gamma three": result_with_quality(["gamma", "three"], 0.9),
    })
    img = make_image(64, 64)
    pair, trace = optimize(img, img, GT, chat, grounder, CFG)
    assert pair.back == "original backdrop"
    assert all(it.back == "original backdrop" for it in trace.iterations)


def test_optimize_duplicate_guard_terminates():
    # The model keeps repeating itself; one re-ask, then exhaustion.
    chat = ScriptedChat(["FOREGROUND: same thing\nBACKGROUND: b",
                         "FOREGROUND: same thing",
                         "FOREGROUND: same thing"])
    grounder = ScriptedGrounder({"same thing": result_with_quality(["same", "thing"], 0.1)})
    img = make_image(64, 64)
    pair, trace = optimize(img, img, GT, chat, grounder, CFG)
    assert trace.outcome == "exhausted"
    assert len(trace.iterations) == 1
    assert chat.calls == 3
    assert pair.fore == "same thing"


def test_optimize_one_reask_on_parse_failure():
    chat = ScriptedChat(["no markers here at all",
                         "FOREGROUND: alpha one\nBACKGROUND: b"])
    grounder = ScriptedGrounder({"alpha one": result_with_quality(["alpha", "one"], 0.9)})
    img = make_image(64, 64)
    pair, trace = optimize(img, img, GT, chat, grounder, CFG)
    assert pair.fore == "alpha one"
    assert chat.calls == 2


def test_optimize_two_parse_failures_raise():
    chat = ScriptedChat(["junk", "more junk"])
    grounder = ScriptedGrounder({})
    img = make_image(64, 64)
    with pytest.raises(ExtractionFailed):
        optimize(img, img, GT, chat, grounder, CFG)


def test_optimize_requires_positive_area_gt():
    chat = ScriptedChat(["FOREGROUND: x\nBACKGROUND: y"])
    with pytest.raises(ValueError):
        optimize(make_image(), make_image(), BBox(0, 0, 0, 0), chat,
                 ScriptedGrounder({}), CFG)


def test_trace_jsonl_round_trip(tmp_path):
    chat, grounder = loop_backends(["alpha one", "beta two"], [0.2, 0.9])
    img = make_image(64, 64)
    _, trace = optimize(img, img, GT, chat, grounder, CFG)
    path = tmp_path / "trace.jsonl"
    trace.save(path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert len(lines) == 3
    assert lines[0]["iter"] == 1 and lines[0]["r"] == pytest.approx(0.2)
    assert set(lines[0]) == {"iter", "fore", "back", "pos", "neg", "r", "prompt_digest"}
    assert lines[-1] == {"outcome": "converged", "chosen_iter": 2}
