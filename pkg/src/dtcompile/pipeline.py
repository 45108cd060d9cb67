"""End-to-end compilation: static DT channels, dynamic DT channels, AOD-only baseline.

All three flows share the same front end (ASAP stages, priority scores,
grid crop, entanglement targets, storage homes) and emit a
:class:`~dtcompile.schedule.Schedule` whose instructions are laid out on a
single time cursor with a barrier between stages.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import (CHANNEL, IDLE, PRE_USE, RESERVE, AncillaPool, ChannelError, DTChannel,
                       configure_static_channels, dt_enabled, plan_dt_stage, relay_path)
from .circuit import Circuit, Gate, Stage, asap_schedule, first_use_stage, priority_scores
from .hardware import ENT, STORAGE, HardwareConfig, Site, crop_grid, load_config, remote_cz_duration
from .layout import (MappingState, PlacementError, ancilla_atom, assign_entanglement_targets,
                     assign_storage_sites, atom_qubit, qubit_atom)
from .optim import InfeasibleAssignment, hungarian
from .routing import MoveVector, RoutingError, RoutingStats, schedule_moves
from .schedule import CONFIG_STAGE, LOCAL_CZ, ONE_Q, REMOTE_CZ, Instruction, Schedule, Timeline, circuit_hash
from .validate import FidelityReport, fidelity_report

STATIC = "static"
DYNAMIC = "dynamic"
BASELINE = "aod-baseline"
MODES = (STATIC, DYNAMIC, BASELINE)


class CompileError(RuntimeError):
    """Geometry exhaustion or a routing failure during compilation."""


@dataclass
class CompileReport:
    mode: str
    n_qubits: int
    total_us: float
    entangling_us: float
    move_us: float
    total_hops: int
    n_1q: int
    n_remote_cz: int
    n_local_cz: int
    n_stages: int
    fidelity: FidelityReport
    reuse: list[float] = field(default_factory=list)
    routing_batches: int = 0
    routing_fallbacks: int = 0
    n_ancilla: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["fidelity"] = self.fidelity.to_json()
        return d


# --------------------------------------------------------------------------- shared helpers

@dataclass
class _Front:
    circuit: Circuit
    stages: list[Stage]
    hw: HardwareConfig
    targets: dict[int, Site]
    homes: dict[int, Site]
    gate_index: dict[int, int]


def _front(c: Circuit, hw: HardwareConfig, n_ancilla: int = 0) -> _Front:
    stages = asap_schedule(c)
    pri = priority_scores(stages, c.n_qubits)
    g = crop_grid(c.n_qubits, hw.geometry, n_ancilla)
    hw = hw.with_geometry(g)
    try:
        targets = assign_entanglement_targets(pri, g)
        homes = assign_storage_sites(targets, g, hw.knobs)
    except PlacementError as exc:
        raise CompileError(str(exc)) from exc
    return _Front(c, stages, hw, targets, homes, {id(gt): i for i, gt in enumerate(c.gates)})


def _hw(hw: HardwareConfig | None) -> HardwareConfig:
    return hw if hw is not None else load_config()


def _route(tl: Timeline, moves: list[MoveVector], m: MappingState, hw: HardwareConfig, stage: int,
           stats: RoutingStats, weight: dict[str, float] | None = None) -> None:
    if not moves:
        return
    try:
        batches = schedule_moves(moves, m, hw.geometry, hw, weight, stats)
    except (RoutingError, PlacementError) as exc:
        raise CompileError(f"stage {stage}: {exc}") from exc
    tl.add_batches(batches, stage)


def _one_qubit_pulses(tl: Timeline, f: _Front, stage: Stage, m: MappingState) -> None:
    items = []
    for gt in stage.gates:
        if gt.is_two_qubit:
            continue
        a = qubit_atom(gt.qubits[0])
        items.append(Instruction(ONE_Q, (a,), 0.0, f.hw.timing.t_1q, stage.index, (m.site(a),),
                                 gate=f.gate_index[id(gt)], label=str(gt)))
    tl.add_parallel(items)


def _paired(stage: Stage) -> set[int]:
    return {q for p in stage.pairs for q in p}


def _two_qubit_gates(stage: Stage) -> list[Gate]:
    return [gt for gt in stage.gates if gt.is_two_qubit]


def _remote_cz(f: _Front, gt: Gate, stage: int, m: MappingState, chain: list[Site]) -> Instruction:
    u, v = (qubit_atom(q) for q in gt.qubits)
    hops = len(chain) - 1
    return Instruction(REMOTE_CZ, (u, v), 0.0, remote_cz_duration(hops, f.hw.timing), stage,
                       (m.site(u), m.site(v)), hops=hops, relay=tuple(chain),
                       gate=f.gate_index[id(gt)], label=str(gt))


def _local_cz(f: _Front, gt: Gate, stage: int, m: MappingState) -> Instruction:
    u, v = (qubit_atom(q) for q in gt.qubits)
    return Instruction(LOCAL_CZ, (u, v), 0.0, f.hw.timing.t_2pi, stage, (m.site(u), m.site(v)),
                       gate=f.gate_index[id(gt)], label=str(gt))


def entangling_duration(s: Schedule, stages: list[Stage]) -> float:
    """Time spent inside two-qubit stages (their moves and pulses); configuration excluded."""
    win = s.stage_windows()
    return sum(hi - lo for k, (lo, hi) in win.items() if k != CONFIG_STAGE and stages[k].is_two_qubit)


def _report(mode: str, s: Schedule, f: _Front, stats: RoutingStats, reuse: list[float], n_anc: int) -> CompileReport:
    moves = [i for i in s.instructions if i.is_move]
    return CompileReport(
        mode=mode,
        n_qubits=s.n_qubits,
        total_us=s.total_duration,
        entangling_us=entangling_duration(s, f.stages),
        move_us=sum(i.duration for i in moves),
        total_hops=sum(i.hops or 0 for i in s.of_kind(REMOTE_CZ)),
        n_1q=len(s.of_kind(ONE_Q)),
        n_remote_cz=len(s.of_kind(REMOTE_CZ)),
        n_local_cz=len(s.of_kind(LOCAL_CZ)),
        n_stages=len(f.stages),
        fidelity=fidelity_report(s),
        reuse=reuse,
        routing_batches=stats.batches,
        routing_fallbacks=stats.fallbacks,
        n_ancilla=n_anc,
    )


def _schedule(mode: str, f: _Front, initial: MappingState, tl: Timeline) -> Schedule:
    return Schedule(mode, f.circuit.n_qubits, f.hw, initial, tl.instructions, circuit_hash(f.circuit.to_text()))


def _adjacent_slots(hw: HardwareConfig) -> list[tuple[Site, Site]]:
    g = hw.geometry
    return [(Site(ENT, k, r), Site(ENT, k + 1, r)) for k in g.usable_columns() for r in g.qubit_rows]


def _slot_assignment(pairs, where, slots, hw: HardwareConfig) -> dict[tuple[int, int], tuple[Site, Site]]:
    """Hungarian match of pairs onto adjacent site pairs; each pair may be flipped."""
    g = hw.geometry
    cost = np.empty((len(pairs), len(slots)))
    flip = np.zeros_like(cost, dtype=bool)
    for i, (u, v) in enumerate(pairs):
        for j, (a, b) in enumerate(slots):
            straight = g.distance(where[u], a) + g.distance(where[v], b)
            crossed = g.distance(where[u], b) + g.distance(where[v], a)
            cost[i, j] = min(straight, crossed)
            flip[i, j] = crossed < straight
    try:
        match, _ = hungarian(cost)
    except InfeasibleAssignment as exc:
        raise CompileError("not enough adjacent entangling slots") from exc
    out = {}
    for i, j in match.items():
        a, b = slots[j]
        out[pairs[i]] = (b, a) if flip[i, j] else (a, b)
    return out


# --------------------------------------------------------------------------- static

def compile_static(c: Circuit, hw: HardwareConfig | None = None) -> tuple[Schedule, CompileReport]:
    """One configuration step onto fixed DT channels, then every CZ as a remote CZ."""
    hw = _hw(hw)
    f = _front(c, hw)
    has_2q = any(s.is_two_qubit for s in f.stages)
    try:
        topo = configure_static_channels(f.targets, f.hw.geometry) if has_2q else None
    except ChannelError as exc:
        raise CompileError(str(exc)) from exc
    chan = topo.sites if topo else []
    if chan:
        # re-crop with an ancilla reservoir; the entangling lattice is unchanged
        f = _front(c, hw, len(chan))
    g = f.hw.geometry
    qubit_homes = set(f.homes.values())
    try:
        anc_homes = assign_storage_sites(dict(enumerate(chan)), g, f.hw.knobs, exclude=qubit_homes)
    except PlacementError as exc:
        raise CompileError(str(exc)) from exc
    initial = MappingState.from_maps(f.homes, anc_homes)
    m = initial.copy()
    tl = Timeline()
    stats = RoutingStats()

    moves = [MoveVector.between(qubit_atom(q), f.homes[q], f.targets[q], g) for q in sorted(f.targets)]
    moves += [MoveVector.between(ancilla_atom(i), anc_homes[i], s, g) for i, s in enumerate(chan)]
    pri = priority_scores(f.stages, c.n_qubits)
    _route(tl, moves, m, f.hw, CONFIG_STAGE, stats, {qubit_atom(q): w for q, w in pri.items()})

    for stage in f.stages:
        _one_qubit_pulses(tl, f, stage, m)
        for gt in _two_qubit_gates(stage):
            u, v = (m.qubit_site(q) for q in gt.qubits)
            chain = relay_path(chan, u, v)
            if chain is None:
                raise CompileError(f"no relay chain between {u} and {v}")
            tl.add(_remote_cz(f, gt, stage.index, m, chain))
    s = _schedule(STATIC, f, initial, tl)
    return s, _report(STATIC, s, f, stats, [], len(chan))


# --------------------------------------------------------------------------- baseline

def compile_aod_baseline(c: Circuit, hw: HardwareConfig | None = None) -> tuple[Schedule, CompileReport]:
    """Shuttle each CZ pair to an adjacent entangling slot, local CZ, shuttle home."""
    hw = _hw(hw)
    f = _front(c, hw)
    g = f.hw.geometry
    initial = MappingState.from_maps(f.homes)
    m = initial.copy()
    tl = Timeline()
    stats = RoutingStats()
    slots = _adjacent_slots(f.hw)
    for stage in f.stages:
        _one_qubit_pulses(tl, f, stage, m)
        gates = _two_qubit_gates(stage)
        if not gates:
            continue
        pairs = [gt.qubits for gt in gates]
        where = {q: m.qubit_site(q) for p in pairs for q in p}
        placed = _slot_assignment(pairs, where, slots, f.hw)
        out = []
        for (u, v), (a, b) in placed.items():
            out += [MoveVector.between(qubit_atom(u), where[u], a, g), MoveVector.between(qubit_atom(v), where[v], b, g)]
        _route(tl, out, m, f.hw, stage.index, stats)
        tl.add_parallel([_local_cz(f, gt, stage.index, m) for gt in gates])
        back = [MoveVector.between(qubit_atom(q), m.qubit_site(q), where[q], g) for p in pairs for q in p]
        _route(tl, back, m, f.hw, stage.index, stats)
    s = _schedule(BASELINE, f, initial, tl)
    return s, _report(BASELINE, s, f, stats, [], 0)


# --------------------------------------------------------------------------- dynamic

RESERVE_CAP = 4


class _Dynamic:
    """Mutable state of one dynamic compilation."""

    def __init__(self, c: Circuit, hw: HardwareConfig):
        probe = asap_schedule(c)
        max_pairs = max((len(s.pairs) for s in probe), default=0)
        n_anc = 0
        if max_pairs:
            n_anc = hw.geometry.ent_first_row_y + 2 * hw.geometry.ent_qubit_rows + 6 * max_pairs + 4
        self.f = f = _front(c, hw, n_anc)
        self.g = g = f.hw.geometry
        self.hw = f.hw
        qubit_homes = set(f.homes.values())
        spare = [s for s in g.storage_sites() if s not in qubit_homes]
        # ancilla take the free storage sites nearest the entanglement zone
        spare.sort(key=lambda s: (-s.row, abs(g.xy(s)[0] - g.ent_x(g.ent_cols // 2)), s.col))
        self.anc_homes = {i: spare[i] for i in range(n_anc)}
        self.initial = MappingState.from_maps(f.homes, self.anc_homes)
        self.m = self.initial.copy()
        self.tl = Timeline()
        self.stats = RoutingStats()
        self.pool = AncillaPool({ancilla_atom(i): IDLE for i in range(n_anc)},
                                first_use_stage(f.stages, c.n_qubits))
        self.prev_2q: Stage | None = None
        self.channel: DTChannel | None = None
        self.reuse: list[float] = []
        self.n_anc = n_anc

    # ---- bookkeeping
    def _free_storage(self, taken: set[Site]) -> list[Site]:
        homes = set(self.f.homes.values())
        return [s for s in self.g.storage_sites() if s not in homes and s not in taken]

    def _park_home(self, atom: str, taken: set[Site]) -> Site:
        q = atom_qubit(atom)
        if q is not None:
            return self.f.homes[q]
        here = self.m.site(atom)
        free = [s for s in self._free_storage(taken) if self.m.occupant(s) is None]
        if not free:
            raise CompileError("ancilla reservoir exhausted")
        return min(free, key=lambda s: (self.g.distance(here, s), s))

    def _settle(self, wanted: dict[str, Site], stage: int) -> None:
        """Move atoms to ``wanted`` sites, evicting any bystander that sits on a destination."""
        m = self.m
        wanted = {a: s for a, s in wanted.items() if m.site(a) != s}
        while True:
            dsts = {s: a for a, s in wanted.items()}
            taken = set(dsts) | {m.site(a) for a in m.positions if a not in wanted}
            bumped = [m.occupant(s) for s in dsts if m.occupant(s) is not None and m.occupant(s) not in wanted]
            if not bumped:
                break
            for a in sorted(bumped):
                dst = self._park_home(a, taken)
                wanted[a] = dst
                taken.add(dst)
                if atom_qubit(a) is None:
                    self.pool.roles[a] = IDLE
                elif self.pool.roles.get(a) == PRE_USE:
                    del self.pool.roles[a]
        moves = [MoveVector.between(a, m.site(a), s, self.g) for a, s in sorted(wanted.items())]
        _route(self.tl, moves, m, self.hw, stage, self.stats)

    # ---- per stage
    def run_stage(self, stage: Stage) -> None:
        f, m, pool = self.f, self.m, self.pool
        for a in [a for a, r in pool.roles.items() if r == PRE_USE]:
            if pool.release[atom_qubit(a)] <= stage.index:
                del pool.roles[a]
        if not stage.is_two_qubit:
            _one_qubit_pulses(self.tl, f, stage, m)
            return
        positions = self._stage_positions(stage)
        column_of = {q: s.col for q, s in positions.items()}
        gates = _two_qubit_gates(stage)
        plan = None
        if self.n_anc and dt_enabled(stage, self.prev_2q, column_of):
            try:
                plan = plan_dt_stage(stage, m, positions, self.channel, pool, self.hw)
            except ChannelError:
                plan = None  # no usable backbone this stage: every pair goes direct
        self.prev_2q = stage

        # only DT endpoints are loaded; direct-AOD pairs shuttle from wherever they sit
        wanted: dict[str, Site] = {}
        keep: set[str] = set()
        if plan is not None:
            for p in plan.chains:
                wanted.update({qubit_atom(q): positions[q] for q in p})
            wanted.update({mv.atom: mv.dst for mv in plan.moves})
            keep = set(plan.channel.ch_ancilla) | set(plan.channel.rs_ancilla)
            if self.channel is not None:
                self.reuse.append(plan.reuse)
        # data qubits outside every pair go home unless they now serve as relays
        paired = _paired(stage)
        for q, s in m.qubits.items():
            a = qubit_atom(q)
            if s.zone == ENT and q not in paired and a not in keep and a not in wanted:
                wanted[a] = f.homes[q]
                pool.roles.pop(a, None)
        # trim the reserve to the ancilla nearest the new channel
        if plan is not None:
            reserve = sorted(plan.channel.rs_ancilla, key=lambda a: (self._gap(a, plan.channel), a))
            taken = set(wanted.values()) | {m.site(a) for a in m.positions if a not in wanted}
            for a in reserve[RESERVE_CAP:]:
                dst = self._park_home(a, taken)
                wanted[a] = dst
                taken.add(dst)
        self._settle(wanted, stage.index)
        if plan is not None:
            self._adopt(plan, reserve[:RESERVE_CAP])

        _one_qubit_pulses(self.tl, f, stage, m)
        direct = []
        for gt in gates:
            chain = plan.chains.get(gt.qubits) if plan is not None else None
            if chain is not None:
                self.tl.add(_remote_cz(f, gt, stage.index, m, chain))
            else:
                direct.append(gt)
        if direct:
            self._direct_aod(direct, stage.index)

    def _stage_positions(self, stage: Stage) -> dict[int, Site]:
        """Where each stage qubit would sit for a DT gate.

        Qubits already in the entanglement zone stay put; the rest take the
        free qubit sites closest to the working column (the previous anchor,
        else a partner already loaded, else the qubit's own target column).
        """
        g, m = self.g, self.m
        pos: dict[int, Site] = {}
        qubit_sites = g.qubit_sites()
        for q in sorted(_paired(stage)):
            if m.qubit_site(q) in qubit_sites:
                pos[q] = m.qubit_site(q)
        # data qubits outside the stage are about to leave; ancilla and relays stay
        staying = {a for a in m.positions if atom_qubit(a) is None or self.pool.roles.get(a) == PRE_USE}
        taken = set(pos.values()) | {m.site(a) for a in staying if m.site(a).zone == ENT}
        free = [s for s in qubit_sites if s not in taken]
        for u, v in stage.pairs:
            for q, partner in ((u, v), (v, u)):
                if q in pos:
                    continue
                if partner in pos:
                    ref = pos[partner]
                    key = lambda s: (abs(s.col - ref.col) + abs(s.row - ref.row), s)
                else:
                    col = self.channel.anchor if self.channel is not None else self.f.targets[q].col
                    home = self.f.homes[q]
                    key = lambda s: (abs(s.col - col), g.distance(home, s), s)
                if not free:
                    raise CompileError(f"stage {stage.index}: no free qubit site for {q}")
                best = min(free, key=key)
                free.remove(best)
                pos[q] = best
        return pos

    def _gap(self, a: str, ch: DTChannel) -> int:
        s = self.m.site(a)
        return min((abs(s.col - t.col) + abs(s.row - t.row) for t in ch.sites), default=0)

    def _adopt(self, plan, reserve: list[str]) -> None:
        pool = self.pool
        for a, r in list(pool.roles.items()):
            if r in (CHANNEL, RESERVE) and self.m.site(a).zone == STORAGE:
                pool.roles[a] = IDLE
        for a in plan.channel.ch_ancilla:
            pool.roles[a] = CHANNEL if atom_qubit(a) is None else PRE_USE
        for a in reserve:
            if self.m.site(a).zone == ENT:
                pool.roles[a] = RESERVE
        self.channel = plan.channel

    def _direct_aod(self, gates: list[Gate], stage: int) -> None:
        """Shuttle-gate-return for pairs without a relay chain.

        When both endpoints already sit in the entanglement zone one of them
        steps beside the other; otherwise both go to a free adjacent slot
        pair.  Everything returns to where it came from afterwards.
        """
        g, m = self.g, self.m
        occupied = set(m.occupancy)
        claimed: set[Site] = set()
        moves: list[MoveVector] = []
        slotted: list[tuple[int, int]] = []
        for gt in gates:
            u, v = (qubit_atom(q) for q in gt.qubits)
            su, sv = m.site(u), m.site(v)
            if g.lattice_adjacent(su, sv):
                continue
            best = None
            if su.zone == sv.zone == ENT:
                for mover, fixed in ((u, sv), (v, su)):
                    here = m.site(mover)
                    free = [n for n in g.ent_neighbors(fixed) if n not in occupied and n not in claimed]
                    if free:
                        best = (mover, min(free, key=lambda n: (g.distance(here, n), n)))
                        break
            if best is None:
                slotted.append(gt.qubits)
                continue
            moves.append(MoveVector.between(best[0], m.site(best[0]), best[1], g))
            claimed.add(best[1])
        if slotted:
            blocked = occupied | claimed
            slots = [p for p in _adjacent_slots(self.hw) if not set(p) & blocked]
            if len(slots) < len(slotted):
                slots += [p for p in self._all_adjacent() if not set(p) & blocked and p not in slots]
            where = {q: m.qubit_site(q) for p in slotted for q in p}
            for (u, v), (a, b) in sorted(_slot_assignment(slotted, where, slots, self.hw).items()):
                moves += [MoveVector.between(qubit_atom(u), where[u], a, g),
                          MoveVector.between(qubit_atom(v), where[v], b, g)]
        origin = {mv.atom: mv.src for mv in moves}
        _route(self.tl, moves, m, self.hw, stage, self.stats)
        self.tl.add_parallel([_local_cz(self.f, gt, stage, m) for gt in gates])
        back = [MoveVector.between(a, m.site(a), s, g) for a, s in sorted(origin.items())]
        _route(self.tl, back, m, self.hw, stage, self.stats)

    def _all_adjacent(self) -> list[tuple[Site, Site]]:
        g = self.g
        out = []
        for c in range(g.ent_cols):
            for r in range(g.ent_rows):
                if c + 1 < g.ent_cols:
                    out.append((Site(ENT, c, r), Site(ENT, c + 1, r)))
                if r + 1 < g.ent_rows:
                    out.append((Site(ENT, c, r), Site(ENT, c, r + 1)))
        return out


def compile_dynamic(c: Circuit, hw: HardwareConfig | None = None) -> tuple[Schedule, CompileReport]:
    """Per-stage DT channels reshaped and reused across stages, direct AOD for the rest."""
    job = _Dynamic(c, _hw(hw))
    for stage in job.f.stages:
        job.run_stage(stage)
    s = _schedule(DYNAMIC, job.f, job.initial, job.tl)
    return s, _report(DYNAMIC, s, job.f, job.stats, job.reuse, job.n_anc)


COMPILERS = {STATIC: compile_static, DYNAMIC: compile_dynamic, BASELINE: compile_aod_baseline}


def compile_circuit(c: Circuit, mode: str, hw: HardwareConfig | None = None) -> tuple[Schedule, CompileReport]:
    try:
        fn = COMPILERS[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; choose from {', '.join(MODES)}") from None
    return fn(c, hw)
