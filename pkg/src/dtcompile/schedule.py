"""Timed instruction list, its JSON form, and a builder that lays out time."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .hardware import HardwareConfig, Site, load_config
from .layout import MappingState
from .routing import MOVE_KINDS, MovePrimitive

FORMAT = "dtcompile.schedule"
VERSION = 1

ONE_Q = "1q"
REMOTE_CZ = "remote_cz"
LOCAL_CZ = "local_cz"
GATE_KINDS = (ONE_Q, REMOTE_CZ, LOCAL_CZ)
CONFIG_STAGE = -1


@dataclass
class Instruction:
    kind: str
    atoms: tuple[str, ...]
    start: float
    duration: float
    stage: int = CONFIG_STAGE
    src: tuple[Site, ...] = ()
    dst: tuple[Site, ...] = ()
    paths: tuple[tuple[tuple[float, float], ...], ...] = ()
    hops: int | None = None
    relay: tuple[Site, ...] = ()
    gate: int | None = None  # index into the source circuit's gate list
    label: str = ""

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def is_move(self) -> bool:
        return self.kind in MOVE_KINDS

    @property
    def sites(self) -> tuple[Site, ...]:
        return self.src if self.kind in GATE_KINDS else self.src + self.dst

    def to_json(self) -> dict:
        d = {
            "kind": self.kind,
            "atoms": list(self.atoms),
            "start_us": self.start,
            "duration_us": self.duration,
            "stage": self.stage,
            "sites": [list(s) for s in self.src],
        }
        if self.is_move:
            d["dst_sites"] = [list(s) for s in self.dst]
            d["paths"] = [[list(p) for p in path] for path in self.paths]
        if self.hops is not None:
            d["L"] = self.hops
        if self.relay:
            d["relay"] = [list(s) for s in self.relay]
        if self.gate is not None:
            d["gate"] = self.gate
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Instruction":
        site = lambda s: Site(str(s[0]), int(s[1]), int(s[2]))
        return cls(
            kind=d["kind"],
            atoms=tuple(d["atoms"]),
            start=float(d["start_us"]),
            duration=float(d["duration_us"]),
            stage=int(d.get("stage", CONFIG_STAGE)),
            src=tuple(site(s) for s in d.get("sites", [])),
            dst=tuple(site(s) for s in d.get("dst_sites", [])),
            paths=tuple(tuple((float(p[0]), float(p[1])) for p in path) for path in d.get("paths", [])),
            hops=d.get("L"),
            relay=tuple(site(s) for s in d.get("relay", [])),
            gate=d.get("gate"),
            label=d.get("label", ""),
        )


@dataclass
class Schedule:
    mode: str
    n_qubits: int
    hw: HardwareConfig
    initial: MappingState
    instructions: list[Instruction] = field(default_factory=list)
    circuit_hash: str = ""

    @property
    def total_duration(self) -> float:
        return max((i.end for i in self.instructions), default=0.0)

    def stage_windows(self) -> dict[int, tuple[float, float]]:
        win: dict[int, tuple[float, float]] = {}
        for ins in self.instructions:
            lo, hi = win.get(ins.stage, (ins.start, ins.end))
            win[ins.stage] = (min(lo, ins.start), max(hi, ins.end))
        return win

    def of_kind(self, *kinds: str) -> list[Instruction]:
        return [i for i in self.instructions if i.kind in kinds]

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.hw.to_text().encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "header": {
                "mode": self.mode,
                "n_qubits": self.n_qubits,
                "config_hash": self.config_hash,
                "circuit_hash": self.circuit_hash,
                "total_us": self.total_duration,
            },
            "config": self.hw.to_text(),
            "initial": {a: list(s) for a, s in sorted(self.initial.positions.items())},
            "instructions": [i.to_json() for i in self.instructions],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "Schedule":
        if d.get("format") != FORMAT:
            raise ValueError("not a dtcompile schedule document")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported schedule version {d.get('version')}")
        hdr = d["header"]
        initial = MappingState({a: Site(str(s[0]), int(s[1]), int(s[2])) for a, s in d["initial"].items()})
        return cls(
            mode=hdr["mode"],
            n_qubits=int(hdr["n_qubits"]),
            hw=load_config(d["config"]),
            initial=initial,
            instructions=[Instruction.from_json(i) for i in d["instructions"]],
            circuit_hash=hdr.get("circuit_hash", ""),
        )

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        return cls.from_json(json.loads(text))


def circuit_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


class Timeline:
    """Appends instructions behind a global time cursor (stages are barriers)."""

    def __init__(self):
        self.cursor = 0.0
        self.instructions: list[Instruction] = []

    def add_primitives(self, prims: Sequence[MovePrimitive], stage: int) -> None:
        for p in prims:
            self.instructions.append(
                Instruction(p.kind, p.atoms, self.cursor, p.duration, stage, p.src, p.dst, p.paths)
            )
            self.cursor += p.duration

    def add_batches(self, batches: Iterable[Sequence[MovePrimitive]], stage: int) -> None:
        for b in batches:
            self.add_primitives(b, stage)

    def add_parallel(self, items: Sequence[Instruction]) -> None:
        """Start every item at the cursor; advance by the longest."""
        if not items:
            return
        for ins in items:
            ins.start = self.cursor
            self.instructions.append(ins)
        self.cursor += max(i.duration for i in items)

    def add(self, ins: Instruction) -> None:
        self.add_parallel([ins])
