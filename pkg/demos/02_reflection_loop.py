"""The description-refinement loop, step by step, on scripted backends.

A scripted chat model produces three candidate target descriptions; a
scripted grounder localizes each one progressively better. The loop stops
as soon as the grounding quality beats epsilon and reports what it kept.

Run:  python3 demos/02_reflection_loop.py
"""

import numpy as np

from vltrack.backends import GroundingResult, ScriptedChat, ScriptedGrounder
from vltrack.geometry import BBox
from vltrack.rpo import RpoConfig, optimize, render_init_prompt, render_update_prompt

GT = BBox(0, 0, 100, 100)


def grounding(words, quality):
    """One proposal whose IoU with GT is exactly `quality` (nested boxes)."""
    box = BBox(0, 0, 100, 100 * quality)
    return GroundingResult(list(words), [box], np.full((1, len(words)), 0.9))


chat = ScriptedChat([
    "FOREGROUND: shiny thing\nBACKGROUND: pavement. buildings",
    "FOREGROUND: small vehicle",
    "FOREGROUND: red hatchback car",
])
grounder = ScriptedGrounder({
    "shiny thing": grounding(["shiny", "thing"], 0.15),
    "small vehicle": grounding(["small", "vehicle"], 0.30),
    "red hatchback car": grounding(["red", "hatchback", "car"], 0.85),
})

print("--- the initial prompt sent with the green-boxed frame ---")
print(render_init_prompt())
print("\n--- a reflection prompt built from classified words ---")
print(render_update_prompt({"hanging"}, {"person"}))

frame = np.full((128, 128, 3), 90, dtype=np.uint8)
pair, trace = optimize(frame, frame, GT, chat, grounder, RpoConfig())

print("\n--- iteration history ---")
for it in trace.iterations:
    print(f"iter {it.index}: r={it.quality:.2f}  fore={it.fore!r}  "
          f"pos={sorted(it.pos_words)} neg={sorted(it.neg_words)}")
print(f"\noutcome: {trace.outcome} at iteration {trace.chosen_iter}")
print(f"final foreground : {pair.fore!r}")
print(f"frozen background: {pair.back!r}")
