"""Compiler for zoned neutral-atom arrays that routes two-qubit gates over directional-transport relay chains."""
from .circuit import Circuit, Gate, GateKind, asap_schedule, gen_benchmark, parse_circuit
from .hardware import HardwareConfig, Site, load_config, remote_cz_duration
from .pipeline import (BASELINE, DYNAMIC, MODES, STATIC, CompileError, CompileReport, compile_aod_baseline,
                       compile_circuit, compile_dynamic, compile_static)
from .schedule import Schedule
from .validate import fidelity_report, validate_schedule

__version__ = "0.1.0"

__all__ = [
    "BASELINE", "DYNAMIC", "MODES", "STATIC",
    "Circuit", "CompileError", "CompileReport", "Gate", "GateKind", "HardwareConfig", "Schedule", "Site",
    "asap_schedule", "compile_aod_baseline", "compile_circuit", "compile_dynamic", "compile_static",
    "fidelity_report", "gen_benchmark", "load_config", "parse_circuit", "remote_cz_duration", "validate_schedule",
]
