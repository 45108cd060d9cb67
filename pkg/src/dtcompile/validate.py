"""Schedule replay: physical legality checks and the product-form fidelity model."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from .hardware import ENT, GeometrySpec, HardwareConfig, remote_cz_duration
from .layout import MappingState, PlacementError, atom_qubit
from .routing import ACTIVATE, BIGMOVE, DEACTIVATE, EPS, MOVE, PARK, polyline_point_distance
from .schedule import LOCAL_CZ, ONE_Q, REMOTE_CZ, Instruction, Schedule

TOL = 1e-6


@dataclass(frozen=True)
class Diagnostic:
    index: int
    category: str
    message: str

    def __str__(self) -> str:
        return f"[{self.index}] {self.category}: {self.message}"


def _order(s: Schedule) -> list[int]:
    return sorted(range(len(s.instructions)), key=lambda k: (s.instructions[k].start, k))


def _replay(s: Schedule, initial: MappingState) -> Iterator[tuple[int, Instruction, MappingState, list[Diagnostic]]]:
    """Yield each instruction with the mapping in force when it starts."""
    m = initial.copy()
    for k in _order(s):
        ins = s.instructions[k]
        issues: list[Diagnostic] = []
        yield k, ins, m, issues
        if ins.kind in (MOVE, BIGMOVE):
            try:
                m.relocate(ins.atoms, ins.dst)
            except (PlacementError, KeyError) as exc:
                issues.append(Diagnostic(k, "collision", f"move not applied: {exc}"))


def _joins(a, b) -> bool:
    return math.dist(a, b) < TOL


def _check_move(k: int, ins: Instruction, m: MappingState, g: GeometrySpec, clearance: float,
                aloft: dict[str, tuple[float, float]] | None = None) -> list[Diagnostic]:
    """``aloft`` tracks atoms held off-grid between the legs of a staged move."""
    aloft = {} if aloft is None else aloft
    out = []
    if len(ins.src) != len(ins.atoms) or (ins.dst and len(ins.dst) != len(ins.atoms)):
        return [Diagnostic(k, "malformed", "site lists do not match atom list")]
    for a, src in zip(ins.atoms, ins.src):
        if a not in m.positions:
            out.append(Diagnostic(k, "state", f"unknown atom {a}"))
        elif m.site(a) != src:
            out.append(Diagnostic(k, "state", f"{a} is at {m.site(a)}, instruction says {src}"))
    if out or ins.kind in (ACTIVATE, DEACTIVATE):
        return out
    if len(ins.paths) != len(ins.atoms):
        return [Diagnostic(k, "malformed", "one path per atom required")]
    for a, path, src, dst in zip(ins.atoms, ins.paths, ins.src, ins.dst):
        start = aloft.get(a, g.xy(src))
        if ins.kind == MOVE:
            joined = a not in aloft and _joins(path[0], start) and _joins(path[-1], g.xy(dst))
        elif ins.kind == PARK and a in aloft:
            # second leg: back down into the trap
            joined = _joins(path[0], start) and _joins(path[-1], g.xy(src))
            aloft.pop(a)
        else:
            joined = _joins(path[0], start)
            if ins.kind == BIGMOVE and _joins(path[-1], g.xy(dst)):
                aloft.pop(a, None)
            else:
                aloft[a] = path[-1]
        if not joined:
            out.append(Diagnostic(k, "malformed", f"path of {a} does not join its sites"))
        holder = m.occupant(dst)
        if ins.kind in (MOVE, BIGMOVE) and holder is not None and holder not in ins.atoms:
            out.append(Diagnostic(k, "collision", f"{a} lands on {dst} held by {holder}"))
    # non-crossing within a batch
    if len(ins.atoms) > 1:
        S = np.array([p[0] for p in ins.paths])
        D = np.array([p[-1] for p in ins.paths])
        for axis, name in ((0, "column"), (1, "row")):
            so = np.sign(np.where(np.abs(S[:, None, axis] - S[None, :, axis]) > EPS, S[:, None, axis] - S[None, :, axis], 0))
            do = np.sign(np.where(np.abs(D[:, None, axis] - D[None, :, axis]) > EPS, D[:, None, axis] - D[None, :, axis], 0))
            if (so != do).any():
                i, j = map(int, np.argwhere(so != do)[0])
                out.append(Diagnostic(k, "non-crossing", f"{ins.atoms[i]} and {ins.atoms[j]} swap {name} order"))
    # clearance against stationary atoms and against other movers' endpoints
    moving = set(ins.atoms)
    still = [(a, st) for a, st in m.positions.items() if a not in moving]
    pts = np.array([g.xy(st) for _, st in still]) if still else np.zeros((0, 2))
    for i, (a, path) in enumerate(zip(ins.atoms, ins.paths)):
        if len(pts):
            d = polyline_point_distance(path, pts)
            bad = np.nonzero(d < clearance - EPS)[0]
            if len(bad):
                out.append(Diagnostic(k, "clearance", f"{a} passes {d[bad[0]]:.3f} um from {still[bad[0]][0]}"))
        for j, other in enumerate(ins.paths):
            if i != j:
                ends = np.array([other[0], other[-1]])
                if (polyline_point_distance(path, ends) < clearance - EPS).any():
                    out.append(Diagnostic(k, "clearance", f"{a} passes near the endpoints of {ins.atoms[j]}"))
    return out


def _check_gate(k: int, ins: Instruction, m: MappingState, g: GeometrySpec, hw: HardwareConfig) -> list[Diagnostic]:
    out = []
    for a, site in zip(ins.atoms, ins.src):
        if a not in m.positions:
            return [Diagnostic(k, "state", f"unknown atom {a}")]
        if m.site(a) != site:
            out.append(Diagnostic(k, "state", f"{a} is at {m.site(a)}, instruction says {site}"))
    if out or ins.kind == ONE_Q:
        return out
    c, t = (m.site(a) for a in ins.atoms)
    if c.zone != ENT or t.zone != ENT:
        return [Diagnostic(k, "zone", "two-qubit gate outside the entanglement zone")]
    if ins.kind == LOCAL_CZ:
        if not g.lattice_adjacent(c, t):
            out.append(Diagnostic(k, "cz-adjacency", f"{ins.atoms} not at facilitation pitch"))
        if abs(ins.duration - hw.timing.t_2pi) > TOL:
            out.append(Diagnostic(k, "timing", "local CZ duration differs from the 2pi pulse"))
        return out
    chain = list(ins.relay)
    if not chain:
        return [Diagnostic(k, "chain-gap", "remote CZ without relay chain")]
    if ins.hops != len(chain) - 1:
        out.append(Diagnostic(k, "hop-count", f"L={ins.hops} but chain has {len(chain)} sites"))
    if abs(ins.duration - remote_cz_duration(len(chain) - 1, hw.timing)) > TOL:
        out.append(Diagnostic(k, "timing", "remote CZ duration disagrees with hop count"))
    if not g.lattice_adjacent(c, chain[0]):
        out.append(Diagnostic(k, "chain-gap", f"control {ins.atoms[0]} not adjacent to relay head"))
    if not g.lattice_adjacent(chain[-1], t):
        out.append(Diagnostic(k, "chain-gap", f"target {ins.atoms[1]} has no occupied relay neighbour"))
    for a, b in zip(chain, chain[1:]):
        if not g.lattice_adjacent(a, b):
            out.append(Diagnostic(k, "chain-gap", f"relay {a} -> {b} breaks facilitation pitch"))
    for r in chain:
        holder = m.occupant(r)
        if holder is None or holder in ins.atoms:
            out.append(Diagnostic(k, "chain-gap", f"relay site {r} is empty"))
    return out


def validate_schedule(s: Schedule, initial: MappingState | None = None, hw: HardwareConfig | None = None) -> list[Diagnostic]:
    """Replay ``s``; an empty list means the schedule is physically legal."""
    hw = hw or s.hw
    g = hw.geometry
    initial = initial or s.initial
    diags: list[Diagnostic] = []
    for a, st in initial.positions.items():
        if not g.contains(st):
            diags.append(Diagnostic(-1, "state", f"{a} starts off-grid at {st}"))
    busy: dict[str, tuple[float, int]] = {}
    aloft: dict[str, tuple[float, float]] = {}
    last_start = -math.inf
    for k, ins in enumerate(s.instructions):
        if ins.start + TOL < last_start:
            diags.append(Diagnostic(k, "order", "start times decrease"))
        last_start = max(last_start, ins.start)
        if ins.duration < 0:
            diags.append(Diagnostic(k, "timing", "negative duration"))
    for k, ins, m, issues in _replay(s, initial):
        for a in ins.atoms:
            if a in busy and busy[a][0] > ins.start + TOL:
                diags.append(Diagnostic(k, "atom-overlap", f"{a} still busy with instruction {busy[a][1]}"))
            busy[a] = (ins.end, k)
        if ins.is_move:
            diags += _check_move(k, ins, m, g, hw.knobs.clearance, aloft)
        elif ins.kind in (ONE_Q, LOCAL_CZ, REMOTE_CZ):
            diags += _check_gate(k, ins, m, g, hw)
        else:
            diags.append(Diagnostic(k, "malformed", f"unknown instruction kind {ins.kind!r}"))
        # collisions surface after the generator applies the move
        diags += issues
    for a in sorted(aloft):
        diags.append(Diagnostic(len(s.instructions), "state", f"{a} left hanging off-grid"))
    diags.sort(key=lambda d: d.index)
    return diags


# --------------------------------------------------------------------------- fidelity

@dataclass(frozen=True)
class FidelityReport:
    gate: float
    dt_hop: float
    transfer: float
    idle: float
    crosstalk: float
    n_1q: int = 0
    n_cz: int = 0
    total_hops: int = 0
    transfers: int = 0
    idle_us: float = 0.0
    crosstalk_events: int = 0

    @property
    def total(self) -> float:
        return self.gate * self.dt_hop * self.transfer * self.idle * self.crosstalk

    FACTORS = ("gate", "dt_hop", "transfer", "idle", "crosstalk")

    def to_json(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["factor", "value", "count"])
        counts = {
            "gate": self.n_1q + self.n_cz,
            "dt_hop": 2 * self.total_hops,
            "transfer": self.transfers,
            "idle": self.idle_us,
            "crosstalk": self.crosstalk_events,
        }
        for f in self.FACTORS:
            w.writerow([f, repr(getattr(self, f)), counts[f]])
        w.writerow(["total", repr(self.total), ""])
        return buf.getvalue()


def fidelity_report(s: Schedule, hw: HardwareConfig | None = None) -> FidelityReport:
    """Independent-error product of gate, hop, transfer, idle and crosstalk factors."""
    hw = hw or s.hw
    fp = hw.fidelity
    n1 = ncz = hops = transfers = xtalk = 0
    busy: dict[int, float] = {}
    live: set[int] = set()
    for _, ins, m, _ in _replay(s, s.initial):
        qs = [q for q in map(atom_qubit, ins.atoms) if q is not None]
        if ins.kind in (ONE_Q, LOCAL_CZ, REMOTE_CZ):
            live.update(qs)
        for q in qs:
            busy[q] = busy.get(q, 0.0) + ins.duration
        if ins.kind == ONE_Q:
            n1 += 1
        elif ins.kind in (LOCAL_CZ, REMOTE_CZ):
            ncz += 1
            if ins.kind == REMOTE_CZ:
                hops += ins.hops or 0
            relay = set(ins.relay)
            for a, st in m.positions.items():
                q = atom_qubit(a)
                if q is not None and q in live and st.zone == ENT and a not in ins.atoms and st not in relay:
                    xtalk += 1
        elif ins.kind in (ACTIVATE, DEACTIVATE, PARK):
            transfers += len(ins.atoms)
    total = s.total_duration
    idle_us = sum(max(total - busy.get(q, 0.0), 0.0) for q in range(s.n_qubits))
    return FidelityReport(
        gate=fp.f_1q ** n1 * fp.f_2q ** ncz,
        dt_hop=fp.f_hop ** (2 * hops),
        transfer=fp.f_xfer ** transfers,
        idle=math.exp(-idle_us / fp.t2),
        crosstalk=fp.f_xtalk ** xtalk,
        n_1q=n1,
        n_cz=ncz,
        total_hops=hops,
        transfers=transfers,
        idle_us=idle_us,
        crosstalk_events=xtalk,
    )
