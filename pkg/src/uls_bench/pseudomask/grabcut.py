"""Grayscale GrabCut: alternating GMM refits and graph min-cuts.

Seeds use OpenCV's codes: 0 = BG, 1 = FG, 2 = probable BG, 3 = probable FG.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .gmm import VARIANCE_FLOOR, Gmm, fit_gmm
from .maxflow import CutGraph, hard_link_capacity, maxflow

log = logging.getLogger(__name__)

BG, FG, PBG, PFG = 0, 1, 2, 3

# (dx, dy) offsets covering each unordered 8-neighbour pair once
_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass(frozen=True)
class SeedMap:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        if labels.ndim != 2:
            raise ValueError("seed map must be 2D")
        if not np.isin(labels, (BG, FG, PBG, PFG)).all():
            raise ValueError("seed labels must be in {BG, FG, PBG, PFG}")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def region(self, code: int) -> np.ndarray:
        return self.labels == code

    @property
    def shape(self):
        return self.labels.shape


@dataclass(frozen=True)
class GrabCutParams:
    n_components: int = 5
    gamma: float = 50.0
    iterations: int = 5
    var_floor: float = VARIANCE_FLOOR
    seed: int = 0


@dataclass
class GrabCutResult:
    mask: np.ndarray
    energy_trace: list[float] = field(default_factory=list)
    degenerate: bool = False


def _pairs(shape):
    """Index arrays ``(p, q, dist)`` over 8-neighbour pairs of a 2D grid (flattened C order)."""
    nx, ny = shape
    idx = np.arange(nx * ny).reshape(nx, ny)
    ps, qs, ds = [], [], []
    for dx, dy in _OFFSETS:
        a = idx[max(0, -dx):nx - max(0, dx), max(0, -dy):ny - max(0, dy)]
        b = idx[max(0, dx):nx - max(0, -dx) or None, max(0, dy):ny - max(0, -dy) or None]
        ps.append(a.ravel())
        qs.append(b.ravel())
        ds.append(np.full(a.size, math.hypot(dx, dy)))
    return np.concatenate(ps), np.concatenate(qs), np.concatenate(ds)


def smoothness_weights(image: np.ndarray, gamma: float):
    """Contrast-sensitive pair weights ``gamma * exp(-beta * dI^2) / dist`` over all 8-neighbour pairs."""
    flat = np.asarray(image, dtype=np.float64).ravel()
    p, q, dist = _pairs(image.shape)
    d2 = (flat[p] - flat[q]) ** 2
    mean_d2 = d2.mean() if len(d2) else 0.0
    beta = 1.0 / (2.0 * mean_d2) if mean_d2 > 0 else 0.0
    return p, q, gamma * np.exp(-beta * d2) / dist


def _energy(alpha, data_fg, data_bg, p, q, w) -> float:
    data = np.where(alpha, data_fg, data_bg).sum()
    return float(data + w[alpha[p] != alpha[q]].sum())


def grabcut(image2d, seeds: SeedMap, params: GrabCutParams = GrabCutParams()) -> GrabCutResult:
    """Segment a [0, 255] slice. FG/BG seeds are hard; PFG/PBG may flip.

    ``energy_trace`` holds the energy after every GMM refit and after every cut,
    in order.
    """
    image = np.asarray(image2d, dtype=np.float64)
    if image.shape != seeds.shape:
        raise ValueError(f"image {image.shape} and seeds {seeds.shape} differ")
    hard_fg = seeds.region(FG).ravel()
    hard_bg = seeds.region(BG).ravel()
    alpha = (seeds.region(FG) | seeds.region(PFG)).ravel()
    unknown = ~(hard_fg | hard_bg)
    if not unknown.any() or alpha.all() or not alpha.any():
        log.warning("grabcut: degenerate seed map, returning FG seeds")
        return GrabCutResult(seeds.region(FG).copy(), degenerate=True)

    x = image.ravel()
    p, q, w = smoothness_weights(image, params.gamma)

    # Only pixels that can flip, plus their hard-BG neighbours, enter the graph.
    work = ndimage.binary_dilation(~seeds.region(BG), structure=np.ones((3, 3), bool)).ravel()
    node = np.full(x.size, -1, dtype=np.int64)
    node[work] = np.arange(int(work.sum()))
    in_graph = work[p] & work[q]
    gp, gq, gw = node[p[in_graph]], node[q[in_graph]], w[in_graph]
    fg_nodes, bg_nodes = hard_fg[work], hard_bg[work]

    fg_gmm = fit_gmm(x[alpha], params.n_components, params.seed, params.var_floor)
    bg_gmm = fit_gmm(x[~alpha], params.n_components, params.seed + 1, params.var_floor)
    trace = []
    for _ in range(params.iterations):
        fg_gmm = fg_gmm.refit_hard(x[alpha], fg_gmm.assign(x[alpha]))
        bg_gmm = bg_gmm.refit_hard(x[~alpha], bg_gmm.assign(x[~alpha]))
        data_fg = fg_gmm.best_component_cost(x)
        data_bg = bg_gmm.best_component_cost(x)
        trace.append(_energy(alpha, data_fg, data_bg, p, q, w))

        # terminal links, shifted per pixel so both are non-negative
        d_fg, d_bg = data_fg[work], data_bg[work]
        low = np.minimum(d_fg, d_bg)
        src, snk = d_bg - low, d_fg - low
        big = hard_link_capacity(src, snk, gw)
        src = np.where(fg_nodes, big, np.where(bg_nodes, 0.0, src))
        snk = np.where(bg_nodes, big, np.where(fg_nodes, 0.0, snk))
        _, side = maxflow(CutGraph(src, snk, np.stack([gp, gq], axis=1), gw, gw))

        new_alpha = np.zeros_like(alpha)
        new_alpha[work] = side
        alpha = new_alpha
        trace.append(_energy(alpha, data_fg, data_bg, p, q, w))
        if not alpha.any() or alpha.all():
            break
    return GrabCutResult(alpha.reshape(image.shape), trace)
