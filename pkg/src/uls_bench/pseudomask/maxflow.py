"""s-t max-flow / min-cut on pixel graphs (Dinic's algorithm, numba-compiled)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class CutGraph:
    """Pixel nodes plus implicit source (foreground) and sink (background) terminals.

    ``source_cap[p]`` is paid when ``p`` ends on the sink side, ``sink_cap[p]`` when
    it ends on the source side. ``edges`` rows are ``(p, q)`` with capacities
    ``cap_pq`` (p->q) and ``cap_qp``. Hard seeds use :func:`hard_link_capacity`.
    """

    source_cap: np.ndarray
    sink_cap: np.ndarray
    edges: np.ndarray
    cap_pq: np.ndarray
    cap_qp: np.ndarray

    def __post_init__(self):
        self.source_cap = np.asarray(self.source_cap, dtype=np.float64)
        self.sink_cap = np.asarray(self.sink_cap, dtype=np.float64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.cap_pq = np.asarray(self.cap_pq, dtype=np.float64)
        self.cap_qp = np.asarray(self.cap_qp, dtype=np.float64)
        n = len(self.source_cap)
        if len(self.sink_cap) != n:
            raise ValueError("source and sink capacity arrays differ in length")
        if not (len(self.edges) == len(self.cap_pq) == len(self.cap_qp)):
            raise ValueError("edge list and capacities differ in length")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        for arr in (self.source_cap, self.sink_cap, self.cap_pq, self.cap_qp):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("capacities must be finite and non-negative")

    @property
    def n_nodes(self) -> int:
        return len(self.source_cap)

    def cut_value(self, source_side: np.ndarray) -> float:
        """Cost of the cut that puts ``source_side`` pixels with the source."""
        s = np.asarray(source_side, dtype=bool)
        total = self.sink_cap[s].sum() + self.source_cap[~s].sum()
        if len(self.edges):
            p, q = self.edges[:, 0], self.edges[:, 1]
            total += self.cap_pq[s[p] & ~s[q]].sum() + self.cap_qp[s[q] & ~s[p]].sum()
        return float(total)


def hard_link_capacity(*finite_caps) -> float:
    """Sentinel terminal capacity for hard seeds: exceeds the sum of every finite capacity."""
    return 1.0 + float(sum(np.sum(c) for c in finite_caps))


@njit(cache=True)
def _dinic(n_nodes, s, t, to, cap, order, start):
    level = np.empty(n_nodes, np.int64)
    it = np.empty(n_nodes, np.int64)
    queue = np.empty(n_nodes, np.int64)
    path = np.empty(n_nodes, np.int64)
    flow = 0.0
    while True:
        level[:] = -1
        level[s] = 0
        qh, qt = 0, 1
        queue[0] = s
        while qh < qt:
            u = queue[qh]
            qh += 1
            for k in range(start[u], start[u + 1]):
                e = order[k]
                v = to[e]
                if cap[e] > 0.0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[t] < 0:
            break
        for u in range(n_nodes):
            it[u] = start[u]
        depth = 0
        u = s
        while True:
            if u == t:
                f = np.inf
                for i in range(depth):
                    if cap[path[i]] < f:
                        f = cap[path[i]]
                first = 0
                for i in range(depth):
                    e = path[i]
                    cap[e] -= f
                    cap[e ^ 1] += f
                for i in range(depth):
                    if cap[path[i]] <= 0.0:
                        first = i
                        break
                flow += f
                depth = first
                u = to[path[first] ^ 1]
                continue
            advanced = False
            while it[u] < start[u + 1]:
                e = order[it[u]]
                v = to[e]
                if cap[e] > 0.0 and level[v] == level[u] + 1:
                    path[depth] = e
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if u == s:
                    break
                level[u] = -1
                depth -= 1
                u = to[path[depth] ^ 1]
                it[u] += 1
    return flow


@njit(cache=True)
def _reachable(n_nodes, s, to, cap, order, start):
    seen = np.zeros(n_nodes, np.bool_)
    stack = np.empty(n_nodes, np.int64)
    seen[s] = True
    stack[0] = s
    top = 1
    while top > 0:
        top -= 1
        u = stack[top]
        for k in range(start[u], start[u + 1]):
            e = order[k]
            v = to[e]
            if cap[e] > 0.0 and not seen[v]:
                seen[v] = True
                stack[top] = v
                top += 1
    return seen


def maxflow(g: CutGraph) -> tuple[float, np.ndarray]:
    """Exact max-flow value and the minimal source-side set of pixels.

    Pixels reachable from the source in the final residual graph are returned
    as ``True`` (foreground).
    """
    n = g.n_nodes
    src = g.source_cap.copy()
    snk = g.sink_cap.copy()
    # saturate direct s->p->t paths up front
    direct = np.minimum(src, snk)
    src -= direct
    snk -= direct
    base_flow = float(direct.sum())

    s, t = n, n + 1
    pix = np.arange(n, dtype=np.int64)
    p, q = g.edges[:, 0], g.edges[:, 1]
    m = n + n + len(p)
    # paired storage: edge 2k and 2k+1 are reverses of each other
    tail = np.empty(2 * m, np.int64)
    to = np.empty(2 * m, np.int64)
    cap = np.empty(2 * m, np.float64)
    tail[0:2 * n:2], to[0:2 * n:2], cap[0:2 * n:2] = s, pix, src
    tail[1:2 * n:2], to[1:2 * n:2], cap[1:2 * n:2] = pix, s, 0.0
    o = 2 * n
    tail[o:o + 2 * n:2], to[o:o + 2 * n:2], cap[o:o + 2 * n:2] = pix, t, snk
    tail[o + 1:o + 2 * n:2], to[o + 1:o + 2 * n:2], cap[o + 1:o + 2 * n:2] = t, pix, 0.0
    o = 4 * n
    tail[o::2], to[o::2], cap[o::2] = p, q, g.cap_pq
    tail[o + 1::2], to[o + 1::2], cap[o + 1::2] = q, p, g.cap_qp

    order = np.argsort(tail, kind="stable").astype(np.int64)
    start = np.searchsorted(tail[order], np.arange(n + 3)).astype(np.int64)
    flow = _dinic(n + 2, s, t, to, cap, order, start)
    side = _reachable(n + 2, s, to, cap, order, start)
    return base_flow + float(flow), side[:n].copy()
