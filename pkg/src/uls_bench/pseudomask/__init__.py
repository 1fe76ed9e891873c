"""GrabCut pseudo-masks from RECIST measurements."""

from .generate import (
    Candidate,
    PseudoMaskParams,
    PseudoMaskResult,
    SeedParams,
    build_seeds,
    filter_pseudomasks,
    generate_pseudomask,
    passes_filter,
)
from .gmm import Gmm, fit_gmm
from .grabcut import BG, FG, PBG, PFG, GrabCutParams, GrabCutResult, SeedMap, grabcut
from .maxflow import CutGraph, hard_link_capacity, maxflow

__all__ = [
    "BG", "FG", "PBG", "PFG",
    "Candidate", "CutGraph", "Gmm", "GrabCutParams", "GrabCutResult", "PseudoMaskParams",
    "PseudoMaskResult", "SeedMap", "SeedParams",
    "build_seeds", "filter_pseudomasks", "fit_gmm", "generate_pseudomask", "grabcut",
    "hard_link_capacity", "maxflow", "passes_filter",
]
