"""Priority-first entanglement targets and column-dominant storage placement."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

from .hardware import CompilerParams, GeometrySpec, Site


class PlacementError(ValueError):
    pass


def qubit_atom(q: int) -> str:
    return f"q{q}"


def ancilla_atom(i: int) -> str:
    return f"a{i}"


def atom_qubit(atom: str) -> int | None:
    return int(atom[1:]) if atom.startswith("q") else None


@dataclass
class MappingState:
    """Atom -> site map.  Atom ids are ``q<k>`` for data qubits and ``a<k>`` for ancilla."""

    positions: dict[str, Site] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.positions.values())) != len(self.positions):
            raise PlacementError("two atoms share a site")
        self._occ = {s: a for a, s in self.positions.items()}

    @classmethod
    def from_maps(cls, qubits: Mapping[int, Site], ancillas: Mapping[int, Site] = {}) -> "MappingState":
        pos = {qubit_atom(q): s for q, s in qubits.items()}
        pos.update({ancilla_atom(i): s for i, s in ancillas.items()})
        return cls(pos)

    def copy(self) -> "MappingState":
        return MappingState(dict(self.positions))

    @property
    def occupancy(self) -> set[Site]:
        return set(self._occ)

    def occupant(self, s: Site) -> str | None:
        return self._occ.get(s)

    def site(self, atom: str) -> Site:
        return self.positions[atom]

    def qubit_site(self, q: int) -> Site:
        return self.positions[qubit_atom(q)]

    @property
    def qubits(self) -> dict[int, Site]:
        return {atom_qubit(a): s for a, s in self.positions.items() if a.startswith("q")}

    @property
    def ancillas(self) -> dict[str, Site]:
        return {a: s for a, s in self.positions.items() if a.startswith("a")}

    def move(self, atom: str, dst: Site) -> None:
        src = self.positions[atom]
        if dst != src and dst in self._occ:
            raise PlacementError(f"{atom} -> {dst}: site held by {self._occ[dst]}")
        del self._occ[src]
        self.positions[atom] = dst
        self._occ[dst] = atom

    def relocate(self, atoms, dsts) -> None:
        """Move several atoms at once; all-or-nothing."""
        moving = set(atoms)
        if len(set(dsts)) != len(dsts):
            raise PlacementError("two atoms land on one site")
        for a, d in zip(atoms, dsts):
            holder = self._occ.get(d)
            if holder is not None and holder not in moving:
                raise PlacementError(f"{a} -> {d}: site held by {holder}")
        for a in atoms:
            del self._occ[self.positions[a]]
        for a, d in zip(atoms, dsts):
            self.positions[a] = d
            self._occ[d] = a

    def add(self, atom: str, s: Site) -> None:
        if atom in self.positions or s in self._occ:
            raise PlacementError(f"cannot add {atom} at {s}")
        self.positions[atom] = s
        self._occ[s] = atom

    def validate(self, g: GeometrySpec) -> None:
        for a, s in self.positions.items():
            if not g.contains(s):
                raise PlacementError(f"{a} sits at {s}, outside the grid")


def priority_order(pri: Mapping[int, float]) -> list[int]:
    return sorted(pri, key=lambda q: (-pri[q], q))


def assign_entanglement_targets(pri: Mapping[int, float], g: GeometrySpec) -> dict[int, Site]:
    """Highest-priority qubit takes the first (column, row)-sorted usable site."""
    sites = g.qubit_sites()
    if len(sites) < len(pri):
        raise PlacementError(f"{len(pri)} qubits but only {len(sites)} usable entangling sites")
    return {q: sites[i] for i, q in enumerate(priority_order(pri))}


def storage_column_of(target: Site, g: GeometrySpec) -> int:
    """Nearest storage column by x; the lower index wins a midpoint tie."""
    x, _ = g.xy(target)
    return min(range(g.storage_cols), key=lambda c: (abs(g.storage_x0 + c * g.storage_pitch - x), c))


def placement_cost(s: Site, target: Site, g: GeometrySpec, knobs: CompilerParams = CompilerParams()) -> float:
    col_t = storage_column_of(target, g)
    ent_y = g.ent_y(g.ent_first_row_y)
    return (
        knobs.w_col * abs(s.col - col_t)
        + knobs.w_row * abs(s.row - g.row_ref)
        + knobs.w_ent * abs(ent_y - g.xy(s)[1])
    )


def assign_storage_sites(
    targets: Mapping[Hashable, Site],
    g: GeometrySpec,
    knobs: CompilerParams = CompilerParams(),
    order: Iterable[Hashable] | None = None,
    exclude: Iterable[Site] = (),
) -> dict[Hashable, Site]:
    """Greedy column-dominant storage placement.

    Keys are processed in ``order`` (defaults to the targets' insertion
    order, which :func:`assign_entanglement_targets` emits by priority);
    each takes its cheapest free non-parking storage site.
    """
    keys = list(targets) if order is None else list(order)
    free = [s for s in g.storage_sites() if s not in set(exclude)]
    if len(free) < len(keys):
        raise PlacementError(f"storage holds {len(free)} free sites, need {len(keys)}")
    taken: set[Site] = set()
    out: dict[Hashable, Site] = {}
    for k in keys:
        best = min(
            (s for s in free if s not in taken),
            key=lambda s: (placement_cost(s, targets[k], g, knobs), -s.row, s.col),
        )
        taken.add(best)
        out[k] = best
    return out
