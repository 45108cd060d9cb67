"""DT-channel construction: static topologies and per-stage dynamic planning.

Channels live on the entanglement-zone lattice.  A relay chain is a run of
lattice-adjacent occupied sites whose head touches the control qubit and
whose tail touches the target.  The static flow lays one channel per pair
of occupied qubit columns and links them along the top row; the dynamic
flow rebuilds a vertical backbone each stage around the active endpoints
and reuses whatever it can from the previous stage.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuit import Stage
from .hardware import ENT, STORAGE, GeometrySpec, HardwareConfig, Site, aod_move_duration, remote_cz_duration
from .layout import MappingState, qubit_atom
from .optim import InfeasibleAssignment, Unreachable, WeightedGrid, hungarian, shortest_path_multi
from .routing import MoveVector

NEAR_CHAIN = "near-chain"
CHEAP_ALIGN = "cheap-align"
TOO_EXPENSIVE = "too-expensive"
INFEASIBLE = "infeasible"
TWO_LEG = "two-leg"

Pair = tuple[int, int]


class ChannelError(RuntimeError):
    pass


# --------------------------------------------------------------------------- pairing

def pair_columns(cols: Sequence[int]) -> dict[int, int]:
    """Pair neighbouring columns; an odd leftover chains onto the nearest paired column."""
    cols = sorted(cols)
    if len(cols) < 2:
        raise ChannelError("pairing needs at least two usable columns")
    out: dict[int, int] = {}
    for a, b in zip(cols[0::2], cols[1::2]):
        out[a] = b
        out[b] = a
    if len(cols) % 2:
        last = cols[-1]
        out[last] = min(cols[:-1], key=lambda c: (abs(c - last), -c))
    return out


def pairing_map(g: GeometrySpec) -> dict[int, int]:
    return pair_columns(g.usable_columns())


# --------------------------------------------------------------------------- lattice helpers

def ent_grid(g: GeometrySpec, obstacles: Iterable[Site] = (), h_cost: float = 1.0, v_cost: float = 2.0,
             prefer: Iterable[Site] = (), detour: float = 0.0) -> WeightedGrid:
    """Entanglement-zone lattice; cells outside ``prefer`` cost ``detour`` extra."""
    grid = WeightedGrid(g.ent_cols, g.ent_rows, {(s.col, s.row) for s in obstacles if s.zone == ENT}, h_cost, v_cost)
    prefer = {(s.col, s.row) for s in prefer}
    if prefer and detour:
        grid.cell_weight = {(c, r): detour for c in range(g.ent_cols) for r in range(g.ent_rows) if (c, r) not in prefer}
    return grid


def _cell(s: Site) -> tuple[int, int]:
    return (s.col, s.row)


def _site(c: tuple[int, int]) -> Site:
    return Site(ENT, c[0], c[1])


def lattice_distance(a: Site, b: Site) -> int:
    return abs(a.col - b.col) + abs(a.row - b.row)


def relay_path(channel: Iterable[Site], u: Site, v: Site) -> list[Site] | None:
    """Shortest chain through ``channel`` sites from a neighbour of ``u`` to a neighbour of ``v``."""
    chan = set(channel) - {u, v}
    heads = sorted(s for s in chan if lattice_distance(s, u) == 1)
    tails = {s for s in chan if lattice_distance(s, v) == 1}
    if not heads or not tails:
        return None
    prev: dict[Site, Site | None] = {h: None for h in heads}
    q = deque(heads)
    while q:
        s = q.popleft()
        if s in tails:
            path = [s]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for dc, dr in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            t = Site(ENT, s.col + dc, s.row + dr)
            if t in chan and t not in prev:
                prev[t] = s
                q.append(t)
    return None


def connected(sites: Iterable[Site]) -> bool:
    sites = set(sites)
    if not sites:
        return True
    start = min(sites)
    seen = {start}
    q = deque([start])
    while q:
        s = q.popleft()
        for dc, dr in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            t = Site(ENT, s.col + dc, s.row + dr)
            if t in sites and t not in seen:
                seen.add(t)
                q.append(t)
    return seen == sites


def _stitch(grid: WeightedGrid, waypoints: Sequence[Site]) -> list[Site]:
    out: list[Site] = []
    for a, b in zip(waypoints, waypoints[1:]):
        path, _ = shortest_path_multi(grid, [_cell(a)], [_cell(b)])
        for c in path:
            s = _site(c)
            if not out or out[-1] != s:
                out.append(s)
    if len(waypoints) == 1:
        out = [waypoints[0]]
    return out


# --------------------------------------------------------------------------- channel types

@dataclass
class DTChannel:
    backbone: tuple[Site, ...]
    branches: dict[int, tuple[Site, ...]] = field(default_factory=dict)
    anchor: int | None = None
    ch_ancilla: frozenset[str] = frozenset()
    rs_ancilla: frozenset[str] = frozenset()
    extra: tuple[Site, ...] = ()

    @property
    def sites(self) -> list[Site]:
        seen: dict[Site, None] = dict.fromkeys(self.backbone)
        for q in sorted(self.branches):
            seen.update(dict.fromkeys(self.branches[q]))
        seen.update(dict.fromkeys(self.extra))
        return list(seen)


@dataclass
class StaticTopology:
    channels: list[DTChannel]
    links: list[tuple[Site, ...]]
    sites: list[Site]

    @property
    def ancilla_needed(self) -> int:
        return len(self.sites)


def configure_static_channels(targets: Mapping[int, Site], g: GeometrySpec) -> StaticTopology:
    """One channel per occupied column pair plus top-row links between them.

    Each channel runs down the relay column right of each of its qubit
    columns and along row 0 between them.  Qubit sites are obstacles, so a
    channel bends around any qubit sitting where a relay would go.
    """
    occupied = set(targets.values())
    grid = ent_grid(g, occupied, v_cost=1.0)
    by_col: dict[int, list[int]] = {}
    for s in occupied:
        by_col.setdefault(s.col, []).append(s.row)
    cols = sorted(by_col)
    if not cols:
        return StaticTopology([], [], [])
    groups: list[list[int]] = []
    if len(cols) == 1:
        groups = [cols]
    else:
        pm = pair_columns(cols)
        for c in cols:
            p = pm[c]
            if pm.get(p) == c and c < p:
                groups.append([c, p])
            elif pm.get(p) != c:
                groups.append([c])

    def spine(c: int) -> list[Site]:
        relay_col = c + 1 if c + 1 < g.ent_cols else c - 1
        return [Site(ENT, relay_col, 0), Site(ENT, relay_col, max(by_col[c]))]

    channels: list[DTChannel] = []
    for grp in groups:
        legs = [spine(c) for c in grp]
        pts = legs[0][::-1] if len(grp) == 1 else legs[0][::-1] + legs[1]
        backbone = _stitch(grid, pts)
        channels.append(DTChannel(tuple(backbone), anchor=grp[0]))
    links = []
    for a, b in zip(channels, channels[1:]):
        left = max((s for s in a.backbone if s.row == 0), key=lambda s: s.col)
        right = min((s for s in b.backbone if s.row == 0), key=lambda s: s.col)
        link = _stitch(grid, [left, right])
        links.append(tuple(link))
    ordered: dict[Site, None] = {}
    for ch in channels:
        ordered.update(dict.fromkeys(ch.backbone))
    for ln in links:
        ordered.update(dict.fromkeys(ln))
    sites = [s for s in ordered if s not in occupied]
    # a detour around an occupied spine site can strand a qubit; branch it back in
    for q, t in sorted(targets.items()):
        if sites and not any(lattice_distance(t, s) == 1 for s in sites):
            try:
                branch = find_branch(grid, t, sites)
            except Unreachable:
                continue
            owner = min(channels, key=lambda ch: min(lattice_distance(t, s) for s in ch.backbone))
            owner.extra = owner.extra + tuple(branch)
            sites += [s for s in branch if s not in sites]
    if not connected(sites):
        raise ChannelError("static channel topology is disconnected")
    for q, t in targets.items():
        if not any(lattice_distance(t, s) == 1 for s in sites):
            raise ChannelError(f"qubit {q} at {t} has no adjacent relay site")
    return StaticTopology(channels, links, sites)


# --------------------------------------------------------------------------- stage eligibility

def dt_enabled(stage: Stage, prev_stage: Stage | None, column_of: Mapping[int, int] | None = None) -> bool:
    """DT when a qubit persists from the previous two-qubit stage, or pairs crowd one column."""
    pairs = stage.pairs
    if not pairs or prev_stage is None:
        return False
    now = {q for p in pairs for q in p}
    before = {q for p in prev_stage.pairs for q in p}
    if now & before:
        return True
    if column_of is not None and len(pairs) >= 2:
        seen: set[int] = set()
        for u, v in pairs:
            band = {column_of[u], column_of[v]}
            if band & seen:
                return True
            seen |= band
    return False


@dataclass
class PairClassification:
    dt: list[Pair] = field(default_factory=list)
    aod: list[Pair] = field(default_factory=list)
    reason: dict[Pair, str] = field(default_factory=dict)

    def demote(self, p: Pair, why: str) -> None:
        self.dt.remove(p)
        self.aod.append(p)
        self.reason[p] = why

    @property
    def partition_ok(self) -> bool:
        return not set(self.dt) & set(self.aod)


def _distance_to(s: Site, sites: Iterable[Site]) -> int:
    return min((lattice_distance(s, c) for c in sites), default=10**9)


def classify_pairs(pairs: Sequence[Pair], channel: DTChannel, positions: Mapping[int, Site],
                   knobs=None) -> PairClassification:
    """Near-chain within ``r_near`` steps, cheap-align within ``c_max``; the rest go direct-AOD."""
    from .hardware import CompilerParams

    knobs = knobs or CompilerParams()
    chan = channel.sites
    out = PairClassification()
    for p in pairs:
        du, dv = (_distance_to(positions[q], chan) for q in p)
        if max(du, dv) <= knobs.r_near:
            out.dt.append(p)
            out.reason[p] = NEAR_CHAIN
        elif max(du, dv) <= knobs.c_max:
            out.dt.append(p)
            out.reason[p] = CHEAP_ALIGN
        else:
            out.aod.append(p)
            out.reason[p] = TOO_EXPENSIVE
    return out


# --------------------------------------------------------------------------- anchor / branches

def _projection_cost(grid: WeightedGrid, endpoint: Site, col: int) -> float:
    e = _cell(endpoint)
    if e[0] == col:
        return 0.0
    g2 = WeightedGrid(grid.cols, grid.rows, grid.obstacles - {e}, grid.h_cost, grid.v_cost, grid.cell_weight)
    targets = [(col, r) for r in range(grid.rows) if g2.free((col, r))]
    if not targets:
        return float("inf")
    try:
        return shortest_path_multi(g2, [e], targets)[1]
    except Unreachable:
        return float("inf")


def select_anchor_column(pairs: Sequence[Pair], prev_anchor: int | None, grid: WeightedGrid,
                         positions: Mapping[int, Site], hysteresis: float = 0.05, band: int = 3) -> int:
    """Pick the backbone column for a stage.

    Candidates are the previous anchor and its neighbouring band columns
    plus the three columns with the most endpoint weight.  Lowest summed
    projection cost wins; the previous anchor is kept while within
    ``hysteresis`` of the best.
    """
    if not pairs:
        raise ValueError("anchor selection needs at least one pair")
    weight: dict[int, int] = {}
    for p in pairs:
        for q in p:
            weight[q] = weight.get(q, 0) + 1
    density: dict[int, int] = {}
    for q, w in weight.items():
        c = positions[q].col
        density[c] = density.get(c, 0) + w
    top = sorted(density, key=lambda c: (-density[c], c))[:3]
    cands = set(top)
    if prev_anchor is not None:
        cands |= {c for c in (prev_anchor - band, prev_anchor, prev_anchor + band) if 0 <= c < grid.cols}
    cost = {c: sum(_projection_cost(grid, positions[q], c) for q in sorted(weight)) for c in sorted(cands)}
    ref = prev_anchor if prev_anchor is not None else 0
    best = min(cost, key=lambda c: (cost[c], abs(c - ref), c))
    if prev_anchor is not None and prev_anchor in cost and np.isfinite(cost[prev_anchor]):
        if cost[prev_anchor] <= (1 + hysteresis) * cost[best] + 1e-12:
            return prev_anchor
    return best


def find_branch(grid: WeightedGrid, endpoint: Site, backbone: Iterable[Site]) -> list[Site]:
    """Cheapest obstacle-free run from beside ``endpoint`` up to (not including) the backbone."""
    bb = {_cell(s) for s in backbone}
    e = _cell(endpoint)
    nbrs = [(e[0] + dc, e[1] + dr) for dc, dr in ((0, -1), (0, 1), (-1, 0), (1, 0))]
    if any(n in bb for n in nbrs):
        return []
    starts = [n for n in nbrs if grid.free(n)]
    if not starts:
        raise Unreachable(f"{endpoint} is boxed in")
    path, _ = shortest_path_multi(grid, starts, bb)
    return [_site(c) for c in path[:-1]]


def two_leg_fallback(start: Site, end: Site, grid: WeightedGrid) -> list[Site] | None:
    """L-shaped relay path (two orthogonal straight legs) from ``start`` to ``end``.

    Returns ``None`` when the endpoints share a row or column (one leg
    suffices) or when both junctions are blocked.
    """
    if start.row == end.row or start.col == end.col:
        return None

    def leg(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
        dc = (b[0] > a[0]) - (b[0] < a[0])
        dr = (b[1] > a[1]) - (b[1] < a[1])
        n = abs(b[0] - a[0]) + abs(b[1] - a[1])
        return [(a[0] + dc * i, a[1] + dr * i) for i in range(n + 1)]

    s, e = _cell(start), _cell(end)
    # vertical-first junction before horizontal-first
    for j in ((s[0], e[1]), (e[0], s[1])):
        cells = leg(s, j) + leg(j, e)[1:]
        if all(grid.free(c) for c in cells):
            return [_site(c) for c in cells]
    return None


# --------------------------------------------------------------------------- dynamic planning

CHANNEL = "channel"
RESERVE = "reserve"
PRE_USE = "pre-use"
IDLE = "idle"


@dataclass
class AncillaPool:
    """Role bookkeeping for flying ancilla and pre-use qubits."""

    roles: dict[str, str] = field(default_factory=dict)
    release: dict[int, int] = field(default_factory=dict)

    def members(self, role: str) -> list[str]:
        return sorted((a for a, r in self.roles.items() if r == role), key=_atom_key)

    @property
    def channel(self) -> list[str]:
        return self.members(CHANNEL)

    @property
    def reserve(self) -> list[str]:
        return self.members(RESERVE)

    def relays_in_use(self) -> list[str]:
        return sorted((a for a, r in self.roles.items() if r in (CHANNEL, PRE_USE)), key=_atom_key)


def _atom_key(a: str) -> tuple[str, int]:
    return (a[0], int(a[1:]))


@dataclass
class DTStagePlan:
    channel: DTChannel
    classification: PairClassification
    moves: list[MoveVector]
    chains: dict[Pair, list[Site]]
    reuse: float
    evict: list[str]


def direct_aod_estimate(u: Site, v: Site, g: GeometrySpec, hw: HardwareConfig) -> float:
    """Shuttle one endpoint beside the other, local CZ, shuttle back."""
    d = g.distance(u, v)
    return 2 * aod_move_duration(d, hw.timing) + hw.timing.t_2pi


def _assign(cands: list[str], sites: list[Site], m: MappingState, fresh: set[str], g: GeometrySpec,
            lam: float) -> dict[Site, str]:
    if not cands or not sites:
        return {}
    cost = np.empty((len(cands), len(sites)))
    for i, a in enumerate(cands):
        here = m.site(a)
        for j, s in enumerate(sites):
            cost[i, j] = 0.0 if here == s else g.distance(here, s) + (lam if a in fresh else 0.0)
    try:
        match, _ = hungarian(cost)
    except InfeasibleAssignment:
        return {}
    return {sites[j]: cands[i] for i, j in match.items()}


def plan_dt_stage(
    stage: Stage,
    m: MappingState,
    positions: Mapping[int, Site],
    c_prev: DTChannel | None,
    pool: AncillaPool,
    hw: HardwareConfig,
    obstacles: Iterable[Site] = (),
) -> DTStagePlan:
    """Plan one DT-enabled two-qubit stage.

    ``positions`` gives each stage qubit's site once loaded; ``obstacles``
    adds other sites channels must avoid.  Steps: build the weighted grid,
    choose the anchor and update the backbone, classify pairs, grow branches
    for DT pairs, Hungarian-assign ancilla to required sites, emit moves,
    then re-check each DT pair and fall back to a two-leg chain or demote.
    """
    g = hw.geometry
    knobs = hw.knobs
    block = set(positions.values()) | set(obstacles)
    grid = ent_grid(g, block)

    anchor = select_anchor_column(stage.pairs, c_prev.anchor if c_prev else None, grid, positions,
                                  knobs.anchor_hysteresis)
    prev_bb = set(c_prev.backbone) if c_prev else set()
    top, bottom = Site(ENT, anchor, 0), Site(ENT, anchor, g.ent_rows - 1)
    if c_prev and c_prev.anchor == anchor and not prev_bb & block:
        backbone = list(c_prev.backbone)
    else:
        bgrid = ent_grid(g, block, prefer=prev_bb, detour=0.25)
        try:
            backbone = _stitch(bgrid, [top, bottom])
        except Unreachable as exc:
            raise ChannelError(f"no backbone through column {anchor}") from exc
    reuse = len(prev_bb & set(backbone)) / len(backbone) if prev_bb else 0.0

    channel = DTChannel(tuple(backbone), anchor=anchor)
    cls = classify_pairs(stage.pairs, channel, positions, knobs)
    branches: dict[int, tuple[Site, ...]] = {}
    infeasible: set[Pair] = set()
    for p in list(cls.dt):
        for q in p:
            if q in branches:
                continue
            try:
                branches[q] = tuple(find_branch(grid, positions[q], backbone))
            except Unreachable:
                infeasible.add(p)
    channel.branches = branches
    required = [s for s in channel.sites if s not in block]

    # candidates: previous channel/reserve ancilla, then storage ancilla and pre-use qubits
    evict = [a for a in pool.channel + pool.reserve if m.site(a) in block]
    prev_c = [a for a in pool.channel + pool.reserve if a not in evict]
    prev_c += [a for a in pool.members(PRE_USE) if m.site(a).zone == ENT and m.site(a) not in block]
    involved = {qubit_atom(q) for q in stage.qubits}
    fresh_all = [a for a in pool.members(IDLE) if m.site(a).zone == STORAGE]
    fresh_all += [qubit_atom(q) for q, rel in sorted(pool.release.items())
                  if rel > stage.index and qubit_atom(q) not in involved
                  and qubit_atom(q) in m.positions and m.qubit_site(q).zone == STORAGE
                  and pool.roles.get(qubit_atom(q)) != PRE_USE]
    if required:
        cx = np.mean([g.xy(s) for s in required], axis=0)
        fresh_all.sort(key=lambda a: (float(np.hypot(*(np.asarray(g.xy(m.site(a))) - cx))), _atom_key(a)))
    fresh = fresh_all[: len(required) + 4]
    cands = prev_c + fresh
    filled = _assign(cands, required, m, set(fresh), g, knobs.lambda_new)

    moves = [MoveVector.between(a, m.site(a), s, g) for s, a in filled.items() if m.site(a) != s]
    move_time = {mv.dst: aod_move_duration(mv.distance, hw.timing) for mv in moves}
    live = set(filled)
    chains: dict[Pair, list[Site]] = {}
    used = set(filled.values())

    for p in list(cls.dt):
        u, v = (positions[q] for q in p)
        est_aod = direct_aod_estimate(u, v, g, hw)
        chain = None if p in infeasible else relay_path(live, u, v)
        if chain is not None:
            align = max((move_time.get(s, 0.0) for q in p for s in branches.get(q, ())), default=0.0)
            if remote_cz_duration(len(chain) - 1, hw.timing) + align < est_aod:
                chains[p] = chain
                continue
        why = INFEASIBLE if chain is None else TOO_EXPENSIVE
        # two-leg attempt over free lattice sites
        best = None
        for s0 in sorted(grid_neighbors(u, grid)):
            for s1 in sorted(grid_neighbors(v, grid)):
                path = two_leg_fallback(s0, s1, grid)
                if path and not (set(path) & block) and (best is None or len(path) < len(best)):
                    best = path
        if best is not None:
            need = [s for s in best if s not in live]
            spare = [a for a in cands if a not in used]
            extra = _assign(spare, need, m, set(fresh), g, knobs.lambda_new) if need else {}
            if len(extra) == len(need):
                extra_moves = [MoveVector.between(a, m.site(a), s, g) for s, a in extra.items() if m.site(a) != s]
                align = max((aod_move_duration(mv.distance, hw.timing) for mv in extra_moves), default=0.0)
                if remote_cz_duration(len(best) - 1, hw.timing) + align < est_aod:
                    moves += extra_moves
                    filled.update(extra)
                    live |= set(extra)
                    used |= set(extra.values())
                    channel.extra = channel.extra + tuple(need)
                    chains[p] = best
                    cls.reason[p] = TWO_LEG
                    continue
        cls.demote(p, why)

    # only chains that fire this stage justify motion; idle backbone sites keep whoever already sits there
    needed = {s for c in chains.values() for s in c}
    moves = [mv for mv in moves if mv.dst in needed]
    moving = {mv.atom for mv in moves}
    placed = {a for s, a in filled.items() if a in moving or m.site(a) == s}
    channel.ch_ancilla = frozenset(placed)
    channel.rs_ancilla = frozenset(a for a in prev_c if a not in placed and m.site(a).zone == ENT)
    return DTStagePlan(channel, cls, moves, chains, reuse, evict)


def grid_neighbors(s: Site, grid: WeightedGrid) -> list[Site]:
    out = []
    for dc, dr in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        c = (s.col + dc, s.row + dr)
        if grid.free(c):
            out.append(_site(c))
    return out
