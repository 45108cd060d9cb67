"""Remote CZ versus a physical shuttle.

A relay chain of L ancillas turns a distant CZ into a handful of Rydberg
pulses. This script tabulates that cost against the time an AOD needs to
bring the same two atoms together and walks through a tiny compile.
"""
from dtcompile import Circuit, compile_static, remote_cz_duration, validate_schedule
from dtcompile.hardware import HardwareConfig, aod_move_duration

tm = HardwareConfig().timing
print(f"{'L':>3} {'remote CZ (us)':>15}")
for L in (0, 1, 2, 5, 10, 20):
    print(f"{L:>3} {remote_cz_duration(L, tm):>15.3f}")

# the cheapest shuttle already costs two trap transfers
for d in (0.0, 10.0, 50.0):
    print(f"AOD move over {d:>4.0f} um: {aod_move_duration(d, tm):7.2f} us")

# H then CZ on two qubits: all moves happen once, during configuration
s, rep = compile_static(Circuit(2).h(0).cz(0, 1))
for ins in s.instructions:
    if ins.stage >= 0:
        print(ins.kind, ins.atoms, f"{ins.duration:.3f} us", f"hops={ins.hops}" if ins.hops is not None else "")
print("legal:", validate_schedule(s) == [])
