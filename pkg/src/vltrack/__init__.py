"""vltrack: model-agnostic vision-language tracking engine.

Refines a target description against grounding feedback, tracks by
classifying grounded proposals through a frozen token partition, verifies
candidates against the template embedding, and replays any recorded run
bit-exactly. All learned models sit behind pluggable wire-protocol backends.
"""

from .geometry import BBox, EmptyCrop, annotate, crop, iou
from .rpo import DescriptionPair, RpoConfig, RpoTrace, optimize
from .semantic import FrameProposals, Source, TokenPartition
from .verify import ScoredProposal, TripletBatch, combine_and_select, triplet_loss
from .pipeline import EngineConfig, SequenceSpec, load_sequence, run_sequence

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "DescriptionPair",
    "EmptyCrop",
    "EngineConfig",
    "FrameProposals",
    "RpoConfig",
    "RpoTrace",
    "ScoredProposal",
    "SequenceSpec",
    "Source",
    "TokenPartition",
    "TripletBatch",
    "annotate",
    "combine_and_select",
    "crop",
    "iou",
    "load_sequence",
    "optimize",
    "run_sequence",
    "triplet_loss",
]
