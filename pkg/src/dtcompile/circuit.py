"""Circuit IR, text parser, benchmark generators and ASAP stage layering."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class GateKind(str, Enum):
    H = "h"
    X = "x"
    RZ = "rz"
    CP = "cp"
    CZ = "cz"

    @property
    def n_qubits(self) -> int:
        return 2 if self in (GateKind.CP, GateKind.CZ) else 1

    @property
    def has_angle(self) -> bool:
        return self in (GateKind.RZ, GateKind.CP)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if len(self.qubits) != self.kind.n_qubits:
            raise ValueError(f"{self.kind.value} takes {self.kind.n_qubits} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"two-qubit gate on repeated qubit {self.qubits}")
        if self.kind.has_angle != (self.angle is not None):
            raise ValueError(f"angle must be given iff gate is rz/cp: {self}")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind.n_qubits == 2

    def __str__(self) -> str:
        name = self.kind.value if self.angle is None else f"{self.kind.value}({self.angle!r})"
        return f"{name} {' '.join(map(str, self.qubits))};"


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        if any(q < 0 or q >= self.n_qubits for q in g.qubits):
            raise ValueError(f"gate {g} indexes outside register of size {self.n_qubits}")

    def append(self, kind: GateKind, *qubits: int, angle: float | None = None) -> "Circuit":
        g = Gate(kind, tuple(qubits), angle)
        self._check(g)
        self.gates.append(g)
        return self

    def h(self, q): return self.append(GateKind.H, q)
    def x(self, q): return self.append(GateKind.X, q)
    def rz(self, q, theta): return self.append(GateKind.RZ, q, angle=float(theta))
    def cz(self, a, b): return self.append(GateKind.CZ, a, b)
    def cp(self, a, b, theta): return self.append(GateKind.CP, a, b, angle=float(theta))

    def cnot(self, c: int, t: int) -> "Circuit":
        """CNOT lowered to H.CZ.H on the target."""
        return self.h(t).cz(c, t).h(t)

    def ccz(self, a: int, b: int, t: int) -> "Circuit":
        # exact CCZ from three controlled phases and two CNOTs
        self.cp(b, t, math.pi / 2)
        self.cnot(a, b)
        self.cp(b, t, -math.pi / 2)
        self.cnot(a, b)
        return self.cp(a, t, math.pi / 2)

    def toffoli(self, a: int, b: int, t: int) -> "Circuit":
        return self.h(t).ccz(a, b, t).h(t)

    def to_text(self) -> str:
        lines = [f"qreg {self.n_qubits};"]
        lines += [str(g) for g in self.gates]
        return "\n".join(lines) + "\n"

    @property
    def two_qubit_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates)


# --------------------------------------------------------------------------- parsing

class CircuitSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


_STMT = re.compile(
    r"\s*(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"\s*(?:\(\s*(?P<arg>[^)]*?)\s*\))?"
    r"(?P<rest>[^;]*);"
)
_FLOAT = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _strip_comments(text: str) -> str:
    out = []
    for line in text.splitlines(keepends=True):
        i = line.find("//")
        if i >= 0:
            line = line[:i] + " " * (len(line) - i - 1) + ("\n" if line.endswith("\n") else "")
        out.append(line)
    return "".join(out)


def _pos(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def parse_circuit(text: str) -> Circuit:
    """Parse the ``qreg``/``h``/``x``/``rz``/``cz``/``cp`` line grammar.

    Raises :class:`CircuitSyntaxError` with 1-based line/column on any input
    outside the grammar.
    """
    src = _strip_comments(text)
    pos = 0
    n: int | None = None
    gates: list[Gate] = []
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _STMT.match(src, pos)
        if m is None:
            raise CircuitSyntaxError("expected statement terminated by ';'", *_pos(src, pos))
        name = m.group("name").lower()
        arg = m.group("arg")
        operands = m.group("rest").split()
        where = _pos(src, m.start("name"))
        pos = m.end()

        if name == "qreg":
            if n is not None:
                raise CircuitSyntaxError("duplicate qreg declaration", *where)
            if arg is not None or len(operands) != 1 or not operands[0].isdigit() or int(operands[0]) < 1:
                raise CircuitSyntaxError("qreg expects one positive integer", *where)
            n = int(operands[0])
            continue
        if n is None:
            raise CircuitSyntaxError("gate before qreg declaration", *where)
        try:
            kind = GateKind(name)
        except ValueError:
            raise CircuitSyntaxError(f"unsupported gate '{name}'", *where) from None
        angle = None
        if kind.has_angle:
            if arg is None or not _FLOAT.match(arg):
                raise CircuitSyntaxError(f"{name} needs a numeric angle argument", *where)
            angle = float(arg)
        elif arg is not None:
            raise CircuitSyntaxError(f"{name} takes no argument", *where)
        if len(operands) != kind.n_qubits or not all(o.isdigit() for o in operands):
            raise CircuitSyntaxError(f"{name} expects {kind.n_qubits} qubit index(es)", *where)
        qubits = tuple(int(o) for o in operands)
        for q in qubits:
            if q >= n:
                raise CircuitSyntaxError(f"index {q} out of range for qreg {n}", *where)
        if len(set(qubits)) != len(qubits):
            raise CircuitSyntaxError("two-qubit gate on repeated qubit", *where)
        gates.append(Gate(kind, qubits, angle))
    if n is None:
        raise CircuitSyntaxError("missing qreg declaration", 1, 1)
    return Circuit(n, gates)


# --------------------------------------------------------------------------- benchmarks

FAMILIES = ("qft", "ising", "bv", "cat", "adder")


def gen_benchmark(family: str, n: int, seed: int = 0) -> Circuit:
    if family not in FAMILIES:
        raise ValueError(f"unknown benchmark family {family!r}; choose from {FAMILIES}")
    minimum = 4 if family == "adder" else 2
    if n < minimum:
        raise ValueError(f"{family} needs n >= {minimum}, got {n}")
    rng = np.random.default_rng(seed)
    c = Circuit(n)
    if family == "qft":
        for i in range(n):
            c.h(i)
            for j in range(i + 1, n):
                c.cp(j, i, math.pi / 2 ** (j - i))
    elif family == "ising":
        for q in range(n):
            c.h(q)
        for q in range(n - 1):
            c.cz(q, q + 1)
        for q in range(n):
            c.rz(q, float(rng.uniform(0, 2 * math.pi)))
    elif family == "bv":
        anc = n - 1
        secret = rng.integers(0, 2, size=n - 1)
        if not secret.any():
            secret[rng.integers(0, n - 1)] = 1
        c.x(anc)
        for q in range(n):
            c.h(q)
        for q in range(n - 1):
            if secret[q]:
                c.cnot(q, anc)
        for q in range(n - 1):
            c.h(q)
    elif family == "cat":
        c.h(0)
        for q in range(n - 1):
            c.cnot(q, q + 1)
    else:
        _ripple_carry_adder(c, (n - 2) // 2)
    return c


def _ripple_carry_adder(c: Circuit, m: int) -> None:
    # layout: cin, (b_i, a_i) interleaved, cout; computes b <- a + b
    cin = 0
    b = [1 + 2 * i for i in range(m)]
    a = [2 + 2 * i for i in range(m)]
    cout = 2 * m + 1

    def maj(x, y, z):
        c.cnot(z, y)
        c.cnot(z, x)
        c.toffoli(x, y, z)

    def uma(x, y, z):
        c.toffoli(x, y, z)
        c.cnot(z, x)
        c.cnot(x, y)

    maj(cin, b[0], a[0])
    for i in range(1, m):
        maj(a[i - 1], b[i], a[i])
    c.cnot(a[m - 1], cout)
    for i in reversed(range(1, m)):
        uma(a[i - 1], b[i], a[i])
    uma(cin, b[0], a[0])


ADDER_LAYOUT_DOC = "qubit 0 = carry-in, 1+2i = b_i, 2+2i = a_i, 2m+1 = carry-out"


# --------------------------------------------------------------------------- stages

@dataclass(frozen=True)
class Stage:
    index: int
    gates: tuple[Gate, ...]

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(g.qubits for g in self.gates if g.is_two_qubit)

    @property
    def is_two_qubit(self) -> bool:
        return any(g.is_two_qubit for g in self.gates)

    @property
    def qubits(self) -> set[int]:
        return {q for g in self.gates for q in g.qubits}


def asap_schedule(c: Circuit) -> list[Stage]:
    """Layer gates so each sits one stage after the latest gate on any of its qubits."""
    last = [-1] * c.n_qubits
    layers: list[list[Gate]] = []
    for g in c.gates:
        p = 1 + max(last[q] for q in g.qubits)
        for q in g.qubits:
            last[q] = p
        if p == len(layers):
            layers.append([])
        layers[p].append(g)
    return [Stage(i, tuple(gs)) for i, gs in enumerate(layers)]


def priority_scores(stages: list[Stage], n_qubits: int | None = None) -> dict[int, float]:
    """Accumulate ``1/(p+1)`` for each gate at stage ``p`` onto its qubits."""
    if n_qubits is None:
        n_qubits = 1 + max((q for s in stages for q in s.qubits), default=-1)
    pri = {q: 0.0 for q in range(n_qubits)}
    for s in stages:
        w = 1.0 / (s.index + 1)
        for g in s.gates:
            for q in g.qubits:
                pri[q] += w
    return pri


def first_use_stage(stages: list[Stage], n_qubits: int) -> dict[int, int]:
    """Stage index of each qubit's first gate; unused qubits map past the end."""
    first = {q: len(stages) for q in range(n_qubits)}
    for s in reversed(stages):
        for q in s.qubits:
            first[q] = s.index
    return first
