"""Assignment, independent-set and lattice path solvers shared by the compiler."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

FORBIDDEN = math.inf


class InfeasibleAssignment(ValueError):
    pass


class Unreachable(ValueError):
    pass


# --------------------------------------------------------------------------- Hungarian

def hungarian(cost) -> tuple[dict[int, int], float]:
    """Minimum-cost assignment covering ``min(rows, cols)``.

    ``cost`` is any 2-D array-like; entries equal to :data:`FORBIDDEN`
    (``inf``) are never selected.  Returns ``({row: col}, total)``.
    Shortest augmenting path with dual potentials, O(n^2 m).
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if c.size == 0:
        return {}, 0.0
    if np.isnan(c).any() or (c == -np.inf).any():
        raise ValueError("cost entries must be finite or +inf")
    transposed = c.shape[0] > c.shape[1]
    if transposed:
        c = c.T
    n, m = c.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            if not np.isfinite(delta):
                raise InfeasibleAssignment("every completion uses a forbidden entry")
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    match = {}
    for j in range(1, m + 1):
        if p[j]:
            r, col = int(p[j]) - 1, j - 1
            if transposed:
                r, col = col, r
            match[r] = col
    c0 = np.asarray(cost, dtype=float)
    total = float(sum(c0[r, k] for r, k in match.items()))
    return dict(sorted(match.items())), total


# --------------------------------------------------------------------------- greedy MIS

@dataclass
class ConflictGraph:
    vertices: list[int]
    adj: dict[int, set[int]] = field(default_factory=dict)

    def __post_init__(self):
        for v in self.vertices:
            self.adj.setdefault(v, set())

    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            raise ValueError("self-loops are not allowed")
        self.adj[a].add(b)
        self.adj[b].add(a)

    @property
    def edges(self) -> set[tuple[int, int]]:
        return {(a, b) for a in self.adj for b in self.adj[a] if a < b}

    def degree(self, v: int) -> int:
        return len(self.adj[v])


def greedy_mis(g: ConflictGraph, weight: Callable[[int], float] | dict | None = None) -> list[int]:
    """Maximal independent set; picks by weight desc, degree asc, id asc."""
    if weight is None:
        w = lambda v: 1.0
    elif isinstance(weight, dict):
        w = lambda v: weight.get(v, 0.0)
    else:
        w = weight
    order = sorted(g.vertices, key=lambda v: (-w(v), g.degree(v), v))
    chosen: list[int] = []
    blocked: set[int] = set()
    for v in order:
        if v in blocked:
            continue
        chosen.append(v)
        blocked.add(v)
        blocked |= g.adj[v]
    return sorted(chosen)


# --------------------------------------------------------------------------- lattice paths

Cell = tuple[int, int]  # (col, row)


@dataclass
class WeightedGrid:
    """4-connected lattice.  A step costs ``h_cost``/``v_cost`` plus the entered cell's weight."""

    cols: int
    rows: int
    obstacles: set[Cell] = field(default_factory=set)
    h_cost: float = 1.0
    v_cost: float = 1.0
    cell_weight: dict[Cell, float] = field(default_factory=dict)

    def inside(self, c: Cell) -> bool:
        return 0 <= c[0] < self.cols and 0 <= c[1] < self.rows

    def free(self, c: Cell) -> bool:
        return self.inside(c) and c not in self.obstacles

    def cell_id(self, c: Cell) -> int:
        return c[1] * self.cols + c[0]

    def steps(self, c: Cell):
        col, row = c
        # vertical first, then horizontal
        for dc, dr, base in ((0, -1, self.v_cost), (0, 1, self.v_cost), (-1, 0, self.h_cost), (1, 0, self.h_cost)):
            nxt = (col + dc, row + dr)
            if self.free(nxt):
                yield nxt, base + self.cell_weight.get(nxt, 0.0)


def shortest_path_multi(grid: WeightedGrid, sources: Iterable[Cell], targets: Iterable[Cell]) -> tuple[list[Cell], float]:
    """Dijkstra from any source to the cheapest target; deterministic ties."""
    targets = set(targets)
    srcs = sorted(set(sources), key=grid.cell_id)
    if not srcs or not targets:
        raise Unreachable("empty source or target set")
    for s in srcs:
        if not grid.free(s):
            raise Unreachable(f"source {s} is blocked or off-grid")
    dist = {s: 0.0 for s in srcs}
    prev: dict[Cell, Cell | None] = {s: None for s in srcs}
    # ties: cells reached by a vertical step first, then lower cell id
    heap = [(0.0, 0, grid.cell_id(s), s) for s in srcs]
    heapq.heapify(heap)
    done: set[Cell] = set()
    while heap:
        d, _, _, c = heapq.heappop(heap)
        if c in done:
            continue
        done.add(c)
        if c in targets:
            path = [c]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1], d
        for nxt, w in grid.steps(c):
            nd = d + w
            if nxt not in dist or nd < dist[nxt] - 1e-12:
                dist[nxt] = nd
                prev[nxt] = c
                heapq.heappush(heap, (nd, int(nxt[1] == c[1]), grid.cell_id(nxt), nxt))
    raise Unreachable("no obstacle-free path")


def grid_shortest_path(grid: WeightedGrid, src: Cell, dst: Cell) -> tuple[list[Cell], float]:
    if not grid.inside(src) or not grid.inside(dst):
        raise ValueError("endpoints must lie on the grid")
    if not grid.free(dst):
        raise Unreachable(f"destination {dst} is blocked")
    return shortest_path_multi(grid, [src], [dst])
