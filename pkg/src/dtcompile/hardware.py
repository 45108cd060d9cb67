"""Zoned-array geometry, timing and fidelity parameters, and duration models.

Coordinates are in micrometres and microseconds throughout.  Storage rows are
numbered away from the entanglement zone: row ``storage_rows - 1`` borders
the inter-zone gap and row 0 is the reserved parking row.  Entanglement-zone
rows grow downward from the gap.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

STORAGE = "storage"
ENT = "ent"


class Site(NamedTuple):
    zone: str
    col: int
    row: int

    def __str__(self) -> str:
        return f"{self.zone[0]}{self.col}.{self.row}"


@dataclass(frozen=True)
class GeometrySpec:
    storage_pitch: float = 6.0
    ent_row_pitches: tuple[float, ...] = (4.0, 8.0, 5.0, 7.0)
    ent_col_pitch: float = 4.0
    zone_gap: float = 10.0
    col_modulus: int = 12
    col_residue: int = 4
    ent_first_row_y: int = 1
    ent_qubit_rows: int = 2
    storage_cols: int = 4
    storage_rows: int = 4
    ent_cols: int = 15
    storage_x0: float = 0.0
    parking_rows: int = 1

    def __post_init__(self):
        if self.storage_pitch <= 0 or self.ent_col_pitch <= 0 or self.zone_gap <= 0:
            raise ValueError("pitches and gap must be positive")
        if not self.ent_row_pitches or min(self.ent_row_pitches) <= 0:
            raise ValueError("entanglement row pitches must be positive")
        if not 0 <= self.col_residue < self.col_modulus:
            raise ValueError("column residue must lie in [0, modulus)")
        if self.storage_cols < 1 or self.storage_rows <= self.parking_rows or self.ent_cols < 2:
            raise ValueError("grids must be non-empty")
        if self.ent_first_row_y < 0 or self.ent_qubit_rows < 1:
            raise ValueError("bad entangling row layout")

    # ---- entanglement lattice
    @property
    def ent_rows(self) -> int:
        return self.ent_first_row_y + 2 * self.ent_qubit_rows

    @property
    def qubit_rows(self) -> tuple[int, ...]:
        return tuple(self.ent_first_row_y + 2 * j for j in range(self.ent_qubit_rows))

    def ent_x(self, col: int) -> float:
        return col * self.ent_col_pitch

    def is_usable_column(self, col: int) -> bool:
        x = self.ent_x(col)
        return float(x).is_integer() and int(x) % self.col_modulus == self.col_residue

    def usable_columns(self) -> list[int]:
        # a usable column needs the relay column to its right inside the grid
        return [k for k in range(self.ent_cols - 1) if self.is_usable_column(k)]

    def qubit_sites(self) -> list[Site]:
        """Candidate qubit sites: usable columns, rows at/below the first entangling row."""
        return sorted(Site(ENT, k, r) for k in self.usable_columns() for r in self.qubit_rows)

    @property
    def ent_y0(self) -> float:
        return (self.storage_rows - 1) * self.storage_pitch + self.zone_gap

    def ent_y(self, row: int) -> float:
        p = self.ent_row_pitches
        return self.ent_y0 + sum(p[m % len(p)] for m in range(row))

    def row_pitch_above(self, row: int) -> float:
        return self.ent_row_pitches[(row - 1) % len(self.ent_row_pitches)]

    # ---- storage
    @property
    def parking_row_ids(self) -> tuple[int, ...]:
        return tuple(range(self.parking_rows))

    def storage_sites(self, include_parking: bool = False) -> list[Site]:
        first = 0 if include_parking else self.parking_rows
        return [Site(STORAGE, c, r) for r in range(first, self.storage_rows) for c in range(self.storage_cols)]

    def parking_sites(self) -> list[Site]:
        return [Site(STORAGE, c, r) for r in self.parking_row_ids for c in range(self.storage_cols)]

    @property
    def row_ref(self) -> int:
        return self.storage_rows - 1

    @property
    def gap_lane_y(self) -> float:
        return (self.storage_rows - 1) * self.storage_pitch + self.zone_gap / 2

    # ---- sites
    def contains(self, s: Site) -> bool:
        if s.zone == STORAGE:
            return 0 <= s.col < self.storage_cols and 0 <= s.row < self.storage_rows
        if s.zone == ENT:
            return 0 <= s.col < self.ent_cols and 0 <= s.row < self.ent_rows
        return False

    def xy(self, s: Site) -> tuple[float, float]:
        if not self.contains(s):
            raise ValueError(f"site {s} outside the grid")
        if s.zone == STORAGE:
            return (self.storage_x0 + s.col * self.storage_pitch, s.row * self.storage_pitch)
        return (self.ent_x(s.col), self.ent_y(s.row))

    def site_at(self, x: float, y: float, tol: float = 1e-6) -> Site | None:
        """Inverse of :meth:`xy`; ``None`` when the point is not a trap site."""
        c = round((x - self.storage_x0) / self.storage_pitch)
        r = round(y / self.storage_pitch)
        s = Site(STORAGE, c, r)
        if self.contains(s) and math.dist(self.xy(s), (x, y)) < tol:
            return s
        k = round(x / self.ent_col_pitch)
        for row in range(self.ent_rows):
            s = Site(ENT, k, row)
            if self.contains(s) and math.dist(self.xy(s), (x, y)) < tol:
                return s
        return None

    def distance(self, a: Site, b: Site) -> float:
        return math.dist(self.xy(a), self.xy(b))

    def ent_neighbors(self, s: Site) -> list[Site]:
        out = []
        for dc, dr in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            t = Site(ENT, s.col + dc, s.row + dr)
            if self.contains(t):
                out.append(t)
        return out

    @staticmethod
    def lattice_adjacent(a: Site, b: Site) -> bool:
        return a.zone == b.zone == ENT and abs(a.col - b.col) + abs(a.row - b.row) == 1


@dataclass(frozen=True)
class TimingParams:
    t_pi: float = 0.167
    t_2pi: float = 0.334
    t_hop: float = 0.256
    tau_sw: float = 0.0
    t_1q: float = 0.1
    aod_accel: float = 0.02
    t_xfer: float = 15.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "tau_sw":
                if v < 0:
                    raise ValueError("tau_sw must be >= 0")
            elif v <= 0:
                raise ValueError(f"{f.name} must be > 0, got {v}")


@dataclass(frozen=True)
class FidelityParams:
    f_2q: float = 0.995
    f_1q: float = 0.9999
    f_hop: float = 0.999
    f_xfer: float = 0.999
    t2: float = 1.5e6
    f_xtalk: float = 0.998

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "t2":
                if v <= 0:
                    raise ValueError("t2 must be > 0")
            elif not 0 < v <= 1:
                raise ValueError(f"{f.name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class CompilerParams:
    """Heuristic knobs for placement, routing and channel planning."""

    w_col: float = 1000.0
    w_row: float = 10.0
    w_ent: float = 1.0
    clearance: float = 2.0
    r_near: int = 1
    c_max: int = 3
    lambda_new: float = 10.0
    anchor_hysteresis: float = 0.05

    def __post_init__(self):
        if self.clearance < 0 or self.r_near < 0 or self.c_max < 0 or self.lambda_new < 0:
            raise ValueError("compiler knobs must be non-negative")


class HardwareConfig(NamedTuple):
    geometry: GeometrySpec = GeometrySpec()
    timing: TimingParams = TimingParams()
    fidelity: FidelityParams = FidelityParams()
    knobs: CompilerParams = CompilerParams()

    def with_geometry(self, g: GeometrySpec) -> "HardwareConfig":
        return self._replace(geometry=g)

    def to_text(self) -> str:
        lines = []
        for part in self:
            for f in fields(part):
                v = getattr(part, f.name)
                if isinstance(v, tuple):
                    v = ",".join(repr(x) for x in v)
                lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


class ConfigError(ValueError):
    pass


CONFIG_ENV = "DTCOMPILE_CONFIG"


def load_config(source: str | os.PathLike | None = None) -> HardwareConfig:
    """Read a flat ``key = value`` config (path or literal text).

    Every field of the four parameter groups is a valid key; anything else
    is rejected.  ``None`` or empty text yields the defaults.
    """
    if source is None:
        text = ""
    elif isinstance(source, os.PathLike) or ("=" not in str(source) and Path(str(source)).is_file()):
        text = Path(source).read_text()
    else:
        text = str(source)

    defaults = HardwareConfig()
    owner = {f.name: i for i, part in enumerate(defaults) for f in fields(part)}
    updates: list[dict] = [{} for _ in defaults]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in owner:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        part = defaults[owner[key]]
        current = getattr(part, key)
        try:
            if isinstance(current, tuple):
                parsed = tuple(float(v) for v in value.split(","))
            elif isinstance(current, int):
                parsed = int(value)
            else:
                parsed = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
        updates[owner[key]][key] = parsed
    try:
        return HardwareConfig(*(replace(part, **u) for part, u in zip(defaults, updates)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------- durations

def hop_time(tp: TimingParams) -> float:
    return tp.t_hop + tp.tau_sw


def remote_cz_duration(hops: int, tp: TimingParams = TimingParams()) -> float:
    """Map-in pi, ``hops`` relay hops out and back, conditional 2pi, map-out pi."""
    if hops < 0:
        raise ValueError("hop count must be >= 0")
    return 2 * tp.t_pi + 2 * hops * hop_time(tp) + tp.t_2pi


def aod_travel_time(distance: float, tp: TimingParams = TimingParams()) -> float:
    """Bang-bang transit time: accelerate for half the distance, decelerate for the rest."""
    if distance < 0:
        raise ValueError("distance must be >= 0")
    return 2.0 * math.sqrt(distance / tp.aod_accel)


def aod_move_duration(distance: float, tp: TimingParams = TimingParams()) -> float:
    """Pickup + transit + drop-off."""
    return 2 * tp.t_xfer + aod_travel_time(distance, tp)


# --------------------------------------------------------------------------- cropping

def crop_grid(n_qubits: int, template: GeometrySpec = GeometrySpec(), n_ancilla: int = 0) -> GeometrySpec:
    """Size storage and entanglement grids for ``n_qubits`` plus an ancilla reservoir.

    Storage: ``ceil(sqrt(n))`` columns; rows grow until capacity covers the
    qubits plus a ``ceil(n/2)`` margin, with the parking row(s) on top of the
    qubit rows.  ``n_ancilla`` adds reservoir rows beyond that.
    Entanglement: enough usable columns to seat every qubit.
    """
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    cols = math.ceil(math.sqrt(n_qubits))
    margin = math.ceil(n_qubits / 2)
    rows = max(math.ceil((n_qubits + margin) / cols), math.ceil(n_qubits / cols) + template.parking_rows)
    while cols * (rows - template.parking_rows) < n_qubits + n_ancilla:
        rows += 1

    need_cols = math.ceil(n_qubits / template.ent_qubit_rows)
    probe = replace(template, ent_cols=2)
    width = 2
    while len(probe.usable_columns()) < need_cols:
        width += 1
        probe = replace(template, ent_cols=width)
    ent_width = (width - 1) * template.ent_col_pitch
    st_width = (cols - 1) * template.storage_pitch
    return replace(
        template,
        storage_cols=cols,
        storage_rows=rows,
        ent_cols=width,
        storage_x0=round((ent_width - st_width) / 2, 6),
    )
