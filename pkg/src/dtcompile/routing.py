"""AOD move batching: conflict graphs, greedy-MIS parallel batches, staged fallback.

A straight move travels the segment between two trap sites.  When no
straight move can make progress (a stationary atom sits in the way, or
destinations form a cycle) the router switches to a five-phase sequence
that leaves the trap grid onto an auxiliary lane, travels along lanes that
stay at least half a pitch away from every trap, and drops into the target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .hardware import STORAGE, GeometrySpec, HardwareConfig, Site, aod_travel_time
from .layout import MappingState
from .optim import ConflictGraph, greedy_mis

EPS = 1e-9
Point = tuple[float, float]

ACTIVATE = "activate"
MOVE = "move"
PARK = "park"
BIGMOVE = "bigmove"
DEACTIVATE = "deactivate"
MOVE_KINDS = (ACTIVATE, MOVE, PARK, BIGMOVE, DEACTIVATE)


class RoutingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MoveVector:
    atom: str
    src: Site
    dst: Site
    distance: float = 0.0

    @classmethod
    def between(cls, atom: str, src: Site, dst: Site, g: GeometrySpec) -> "MoveVector":
        if src == dst:
            raise ValueError(f"{atom}: source equals destination")
        return cls(atom, src, dst, g.distance(src, dst))


@dataclass(frozen=True)
class MovePrimitive:
    kind: str
    atoms: tuple[str, ...]
    src: tuple[Site, ...]
    dst: tuple[Site, ...]
    paths: tuple[tuple[Point, ...], ...]
    duration: float

    @property
    def displacement(self) -> float:
        return max((polyline_length(p) for p in self.paths), default=0.0)


def polyline_length(path: Sequence[Point]) -> float:
    return sum(math.dist(a, b) for a, b in zip(path, path[1:]))


def polyline_travel_time(path: Sequence[Point], hw: HardwareConfig) -> float:
    # the tweezer stops at every corner
    return sum(aod_travel_time(math.dist(a, b), hw.timing) for a, b in zip(path, path[1:]))


# --------------------------------------------------------------------------- geometry

def segment_point_distance(p0, p1, pts) -> np.ndarray:
    """Distance from each point in ``pts`` (k, 2) to segment p0-p1."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    pts = np.asarray(pts, float).reshape(-1, 2)
    d = p1 - p0
    dd = float(d @ d)
    if dd == 0.0:
        return np.linalg.norm(pts - p0, axis=1)
    t = np.clip((pts - p0) @ d / dd, 0.0, 1.0)
    return np.linalg.norm(pts - (p0 + t[:, None] * d), axis=1)


def polyline_point_distance(path: Sequence[Point], pts) -> np.ndarray:
    pts = np.asarray(pts, float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0)
    if len(path) == 1:
        return np.linalg.norm(pts - np.asarray(path[0]), axis=1)
    return np.min([segment_point_distance(a, b, pts) for a, b in zip(path, path[1:])], axis=0)


def _segments_points_distance(S: np.ndarray, D: np.ndarray, P: np.ndarray) -> np.ndarray:
    """(m, k) distances from segments S[i]-D[i] to points P[j]."""
    d = D - S
    dd = np.einsum("ij,ij->i", d, d)
    rel = P[None, :, :] - S[:, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(dd[:, None] > 0, np.einsum("ikj,ij->ik", rel, d) / dd[:, None], 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = S[:, None, :] + t[..., None] * d[:, None, :]
    return np.linalg.norm(P[None, :, :] - closest, axis=2)


def _lane_exit(g: GeometrySpec, s: Site) -> list[Point]:
    """Points from trap ``s`` out to the horizontal gap lane."""
    x, y = g.xy(s)
    yg = g.gap_lane_y
    if s.zone == STORAGE:
        h = g.storage_pitch / 2
        return [(x, y), (x + h, y + h), (x + h, yg)]
    h = g.ent_col_pitch / 2
    if s.row == 0:
        return [(x, y), (x + h, yg)]
    return [(x, y), (x + h, y - g.row_pitch_above(s.row) / 2), (x + h, yg)]


def lane_route(g: GeometrySpec, src: Site, dst: Site) -> list[Point]:
    pts = _lane_exit(g, src) + _lane_exit(g, dst)[::-1]
    out: list[Point] = []
    for p in pts:
        p = (round(p[0], 9), round(p[1], 9))
        if not out or math.dist(out[-1], p) > EPS:
            out.append(p)
    # drop collinear interior points
    i = 1
    while i < len(out) - 1:
        a, b, c = np.asarray(out[i - 1]), np.asarray(out[i]), np.asarray(out[i + 1])
        cross = (b - a)[0] * (c - b)[1] - (b - a)[1] * (c - b)[0]
        if abs(cross) < EPS and np.dot(b - a, c - b) > 0:
            out.pop(i)
        else:
            i += 1
    return out


# --------------------------------------------------------------------------- conflicts

def _sign(a: np.ndarray) -> np.ndarray:
    return np.where(a > EPS, 1, np.where(a < -EPS, -1, 0))


def build_conflict_graph(
    moves: Sequence[MoveVector],
    m: MappingState,
    g: GeometrySpec,
    clearance: float = 2.0,
) -> ConflictGraph:
    """Edges for shared sites, AOD order violations and clearance violations.

    Vertices are indices into ``moves``.  A move whose path passes within
    ``clearance`` of a stationary occupied site conflicts with every other
    move (it cannot run in any batch until the obstacle clears).
    """
    n = len(moves)
    cg = ConflictGraph(list(range(n)))
    if n == 0:
        return cg
    S = np.array([g.xy(mv.src) for mv in moves])
    D = np.array([g.xy(mv.dst) for mv in moves])

    sites_src = [mv.src for mv in moves]
    sites_dst = [mv.dst for mv in moves]
    adj = np.zeros((n, n), dtype=bool)
    # (a) shared sites
    for i in range(n):
        for j in range(i + 1, n):
            if {sites_src[i], sites_dst[i]} & {sites_src[j], sites_dst[j]}:
                adj[i, j] = True
    # (b) AOD row/column order must be preserved
    for axis in (0, 1):
        so = _sign(S[:, None, axis] - S[None, :, axis])
        do = _sign(D[:, None, axis] - D[None, :, axis])
        adj |= so != do
    # (c) a path grazing another move's endpoints
    near_src = _segments_points_distance(S, D, S) < clearance - EPS
    near_dst = _segments_points_distance(S, D, D) < clearance - EPS
    graze = near_src | near_dst
    adj |= graze | graze.T
    # (c) stationary obstacles
    moving = {mv.atom for mv in moves}
    still = [s for a, s in m.positions.items() if a not in moving]
    if still:
        P = np.array([g.xy(s) for s in still])
        blocked = (_segments_points_distance(S, D, P) < clearance - EPS).any(axis=1)
        adj[blocked, :] = True
        adj[:, blocked] = True
    np.fill_diagonal(adj, False)
    for i, j in zip(*np.nonzero(np.triu(adj))):
        cg.add_edge(int(i), int(j))
    return cg


# --------------------------------------------------------------------------- primitives

def batch_primitives(moves: Sequence[MoveVector], g: GeometrySpec, hw: HardwareConfig) -> list[MovePrimitive]:
    atoms = tuple(mv.atom for mv in moves)
    src = tuple(mv.src for mv in moves)
    dst = tuple(mv.dst for mv in moves)
    starts = tuple((g.xy(s),) for s in src)
    ends = tuple((g.xy(s),) for s in dst)
    paths = tuple((g.xy(a), g.xy(b)) for a, b in zip(src, dst))
    dmax = max(mv.distance for mv in moves)
    t = hw.timing
    return [
        MovePrimitive(ACTIVATE, atoms, src, src, starts, t.t_xfer),
        MovePrimitive(MOVE, atoms, src, dst, paths, aod_travel_time(dmax, t)),
        MovePrimitive(DEACTIVATE, atoms, dst, dst, ends, t.t_xfer),
    ]


def staged_fallback(move: MoveVector, m: MappingState, g: GeometrySpec, hw: HardwareConfig) -> list[MovePrimitive]:
    """Activate -> Park -> BigMove -> Park -> Deactivate along auxiliary lanes.

    The two Park hops move the atom between its trap and the adjacent lane
    crossing; BigMove follows the lanes.  Lanes keep half a pitch from every
    trap site, so the sequence is clear of any stationary occupancy.
    """
    occupant = m.occupant(move.dst)
    if occupant is not None and occupant != move.atom:
        raise RoutingError(f"{move.atom}: destination {move.dst} held by {occupant}")
    route = lane_route(g, move.src, move.dst)
    a = (move.atom,)
    t = hw.timing
    first, middle, last = route[:2], route[1:-1], route[-2:]
    if len(middle) < 2:
        middle = [route[1], route[1]]
    return [
        MovePrimitive(ACTIVATE, a, (move.src,), (move.src,), ((route[0],),), t.t_xfer),
        MovePrimitive(PARK, a, (move.src,), (move.src,), (tuple(first),), t.t_xfer + polyline_travel_time(first, hw)),
        MovePrimitive(BIGMOVE, a, (move.src,), (move.dst,), (tuple(middle),), polyline_travel_time(middle, hw)),
        MovePrimitive(PARK, a, (move.dst,), (move.dst,), (tuple(last),), t.t_xfer + polyline_travel_time(last, hw)),
        MovePrimitive(DEACTIVATE, a, (move.dst,), (move.dst,), ((route[-1],),), t.t_xfer),
    ]


def apply_primitive(p: MovePrimitive, m: MappingState) -> None:
    """Advance a mapping by one primitive (only Move/BigMove relocate atoms)."""
    if p.kind not in (MOVE, BIGMOVE):
        return
    m.relocate(p.atoms, p.dst)


# --------------------------------------------------------------------------- scheduler

@dataclass
class RoutingStats:
    batches: int = 0
    fallbacks: int = 0
    parked: int = 0


def schedule_moves(
    moves: Sequence[MoveVector],
    m: MappingState,
    g: GeometrySpec,
    hw: HardwareConfig,
    weight: Mapping[str, float] | None = None,
    stats: RoutingStats | None = None,
) -> list[list[MovePrimitive]]:
    """Split ``moves`` into parallel batches; ``m`` is advanced in place.

    Each round keeps the moves that are ready (destination free, path clear
    of every occupied trap), builds their conflict graph and emits one batch
    from a greedy MIS.  Moves whose destinations would block another pending
    path wait while anything else can run.  With nothing ready the first
    pending move goes through :func:`staged_fallback`, via a parking slot if
    its destination is still held by an atom that leaves later.
    """
    stats = stats if stats is not None else RoutingStats()
    clearance = hw.knobs.clearance
    pending = [mv for mv in moves if mv.src != mv.dst]
    if len({mv.atom for mv in pending}) != len(pending):
        raise ValueError("an atom appears in two moves")
    final = dict(m.positions)
    for mv in pending:
        final[mv.atom] = mv.dst
    if len(set(final.values())) != len(final):
        raise RoutingError("requested destinations collide")
    w = weight or {}
    batches: list[list[MovePrimitive]] = []
    guard = 4 * len(pending) + 10

    while pending:
        guard -= 1
        if guard < 0:
            raise RoutingError("router failed to converge")
        S = np.array([g.xy(mv.src) for mv in pending])
        D = np.array([g.xy(mv.dst) for mv in pending])
        occ_sites = list(m.occupancy)
        P = np.array([g.xy(s) for s in occ_sites])
        src_idx = {s: k for k, s in enumerate(occ_sites)}
        dist = _segments_points_distance(S, D, P)
        for i, mv in enumerate(pending):
            dist[i, src_idx[mv.src]] = np.inf
        path_clear = (dist >= clearance - EPS).all(axis=1)
        dst_free = np.array([m.occupant(mv.dst) is None for mv in pending])
        ready = path_clear & dst_free
        # deferring moves that would land on another pending path
        lands_on = _segments_points_distance(S, D, D) < clearance - EPS
        np.fill_diagonal(lands_on, False)
        polite = ready & ~lands_on.any(axis=0)
        pick = polite if polite.any() else ready

        if pick.any():
            idx = [i for i in range(len(pending)) if pick[i]]
            sub = [pending[i] for i in idx]
            cg = build_conflict_graph(sub, m, g, clearance)
            chosen = greedy_mis(cg, {k: w.get(mv.atom, 0.0) for k, mv in enumerate(sub)})
            batch = [sub[k] for k in chosen]
            prims = batch_primitives(batch, g, hw)
            m.relocate([mv.atom for mv in batch], [mv.dst for mv in batch])
            batches.append(prims)
            stats.batches += 1
            done = {mv.atom for mv in batch}
            pending = [mv for mv in pending if mv.atom not in done]
            continue

        clear = [i for i, mv in enumerate(pending) if m.occupant(mv.dst) is None]
        if clear:
            mv = pending.pop(clear[0])
            batches.append(staged_fallback(mv, m, g, hw))
            m.move(mv.atom, mv.dst)
        else:
            parking = set(g.parking_sites())
            movable = [i for i, mv in enumerate(pending) if mv.src not in parking]
            if not movable:
                raise RoutingError(f"{pending[0].atom}: destination {pending[0].dst} never frees up")
            i = movable[0]
            mv = pending[i]
            slots = [s for s in g.parking_sites() if m.occupant(s) is None]
            if not slots:
                raise RoutingError(f"no free parking slot for move of {mv.atom}")
            slot = min(slots, key=lambda s: (g.distance(mv.src, s), s.col))
            batches.append(staged_fallback(MoveVector.between(mv.atom, mv.src, slot, g), m, g, hw))
            m.move(mv.atom, slot)
            pending[i] = MoveVector.between(mv.atom, slot, mv.dst, g)
            stats.parked += 1
        stats.fallbacks += 1
        stats.batches += 1
    return batches
