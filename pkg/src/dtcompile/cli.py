"""Command-line front end: compile, validate, sweep, render.

Exit codes: 0 success, 1 compile or validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .circuit import FAMILIES, CircuitSyntaxError, gen_benchmark, parse_circuit
from .hardware import CONFIG_ENV, ENT, ConfigError, HardwareConfig, Site, load_config
from .pipeline import MODES, CompileError, compile_circuit
from .schedule import REMOTE_CZ, Schedule
from .validate import validate_schedule

SWEEP_COLUMNS = ("family", "n", "mode", "total_us", "entangling_us", "fidelity")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    mode: str
    circuit_file: str | None
    family: str | None
    n: int | None
    seed: int
    config: str | None
    out: Path
    emit: frozenset[str]

    def __post_init__(self):
        if (self.circuit_file is None) == (self.family is None):
            raise UsageError("give exactly one of --circuit or --bench")
        if self.family is not None and self.n is None:
            raise UsageError("--bench needs --n")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")

    @property
    def stem(self) -> str:
        if self.circuit_file:
            return Path(self.circuit_file).stem
        return f"{self.family}{self.n}"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def resolve_config(path: str | None) -> HardwareConfig:
    path = path or os.environ.get(CONFIG_ENV) or None
    if path is None:
        return load_config()
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {path} not found")
    return load_config(p)


# --------------------------------------------------------------------------- svg

PALETTE = {"q": "#1f5fa8", "a": "#d9822b"}


def render_svg(s: Schedule, scale: float = 6.0, margin: float = 20.0) -> str:
    """Static figure: trap grid, initial atoms, move trajectories and relay chains."""
    g = s.hw.geometry
    pts = [g.xy(t) for t in g.storage_sites(include_parking=True)]
    pts += [g.xy(Site(ENT, c, r)) for c in range(g.ent_cols) for r in range(g.ent_rows)]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, y0 = min(xs), min(ys)
    w = (max(xs) - x0) * scale + 2 * margin
    h = (max(ys) - y0) * scale + 2 * margin

    def tx(p):
        return f"{(p[0] - x0) * scale + margin:.2f},{(p[1] - y0) * scale + margin:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" viewBox="0 0 {w:.2f} {h:.2f}">',
        f'<title>{s.mode} schedule, {s.n_qubits} qubits, {s.total_duration:.3f} us</title>',
        '<g fill="none" stroke="#bbbbbb" stroke-width="0.8">',
    ]
    for p in pts:
        x, y = tx(p).split(",")
        out.append(f'<circle cx="{x}" cy="{y}" r="3"/>')
    out.append("</g>")
    out.append('<g fill="none" stroke-width="1.2" stroke-opacity="0.55">')
    for ins in s.instructions:
        if ins.kind not in ("move", "bigmove", "park"):
            continue
        for a, path in zip(ins.atoms, ins.paths):
            if len(path) > 1:
                out.append(f'<polyline stroke="{PALETTE[a[0]]}" points="{" ".join(tx(p) for p in path)}"/>')
    out.append("</g>")
    out.append('<g fill="none" stroke="#2a9d3a" stroke-width="2" stroke-opacity="0.35">')
    for ins in s.of_kind(REMOTE_CZ):
        chain = [ins.src[0], *ins.relay, ins.src[1]]
        out.append(f'<polyline points="{" ".join(tx(g.xy(t)) for t in chain)}"/>')
    out.append("</g>")
    out.append("<g>")
    for a, t in sorted(s.initial.positions.items()):
        x, y = tx(g.xy(t)).split(",")
        out.append(f'<circle cx="{x}" cy="{y}" r="3.5" fill="{PALETTE[a[0]]}"><title>{a}</title></circle>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- commands

def _load_circuit(man: RunManifest):
    if man.circuit_file:
        p = Path(man.circuit_file)
        if not p.is_file():
            raise UsageError(f"circuit file {p} not found")
        return parse_circuit(p.read_text())
    return gen_benchmark(man.family, man.n, man.seed)


def cmd_compile(args) -> int:
    emit = frozenset(e.strip() for e in args.emit.split(",") if e.strip())
    bad = emit - {"schedule", "report", "svg"}
    if bad:
        raise UsageError(f"unknown emit target(s): {', '.join(sorted(bad))}")
    man = RunManifest(args.mode, args.circuit, args.bench, args.n, args.seed, args.config, Path(args.out), emit)
    hw = resolve_config(man.config)
    c = _load_circuit(man)
    s, report = compile_circuit(c, man.mode, hw)
    base = f"{man.stem}.{man.mode}"
    files = {}
    if "schedule" in emit:
        files[f"{base}.schedule.json"] = s.dumps()
    if "report" in emit:
        files[f"{base}.report.json"] = json.dumps(report.to_json(), indent=1, sort_keys=True) + "\n"
        files[f"{base}.fidelity.csv"] = report.fidelity.to_csv()
    if "svg" in emit:
        files[f"{base}.svg"] = render_svg(s)
    written = []
    for name, text in files.items():
        write_atomic(man.out / name, text)
        written.append(man.out / name)
    for p in written:
        print(p)
    print(f"total {report.total_us:.3f} us, entangling {report.entangling_us:.3f} us, "
          f"fidelity {report.fidelity.total:.6g}", file=sys.stderr)
    return 0


def _read_schedule(path: str) -> Schedule:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"schedule file {p} not found")
    return Schedule.loads(p.read_text())


def cmd_validate(args) -> int:
    try:
        s = _read_schedule(args.schedule)
    except (ValueError, KeyError, TypeError, IndexError, ConfigError) as exc:
        print(f"unreadable schedule: {exc}", file=sys.stderr)
        return 1
    diags = validate_schedule(s)
    for d in diags:
        print(d, file=sys.stderr)
    if diags:
        print(f"{len(diags)} violation(s)", file=sys.stderr)
        return 1
    print(f"ok: {len(s.instructions)} instructions, {s.total_duration:.3f} us")
    return 0


def _sweep_row(family: str, n: int, mode: str, seed: int, hw: HardwareConfig) -> dict:
    _, r = compile_circuit(gen_benchmark(family, n, seed), mode, hw)
    return {"family": family, "n": n, "mode": mode, "total_us": repr(r.total_us),
            "entangling_us": repr(r.entangling_us), "fidelity": repr(r.fidelity.total)}


def cmd_sweep(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"unknown family {args.family!r}")
    try:
        sizes = [int(x) for x in args.sizes.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --sizes {args.sizes!r}") from None
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m!r}")
    hw = resolve_config(args.config)
    jobs = [(args.family, n, m) for n in sizes for m in modes]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda j: _sweep_row(*j, args.seed, hw), jobs))
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        write_atomic(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_render(args) -> int:
    s = _read_schedule(args.schedule)
    out = Path(args.out) if args.out else Path(args.schedule).with_suffix(".svg")
    write_atomic(out, render_svg(s))
    print(out)
    return 0


# --------------------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dtcompile", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a circuit and emit schedule + report")
    c.add_argument("--circuit", help="circuit text file")
    c.add_argument("--bench", choices=FAMILIES, help="generated benchmark family")
    c.add_argument("--n", type=int, help="benchmark size")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--mode", default="dynamic", choices=MODES)
    c.add_argument("--config", help=f"hardware config file (default: ${CONFIG_ENV} or built-ins)")
    c.add_argument("--out", default=".", help="output directory")
    c.add_argument("--emit", default="schedule,report", help="comma list of schedule, report, svg")
    c.set_defaults(func=cmd_compile)

    v = sub.add_parser("validate", help="replay a schedule; exit 0 iff it is legal")
    v.add_argument("schedule")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sweep", help="CSV of duration and fidelity per size and mode")
    s.add_argument("--family", required=True)
    s.add_argument("--sizes", required=True, help="comma list, e.g. 10,20,50")
    s.add_argument("--modes", default=",".join(MODES))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker threads")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("render", help="SVG of trajectories and relay chains")
    r.add_argument("--schedule", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_render)
    return ap


def run_cli(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"dtcompile: {exc}", file=sys.stderr)
        return 2
    except (CompileError, CircuitSyntaxError) as exc:
        print(f"dtcompile: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
