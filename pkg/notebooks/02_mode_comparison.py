"""Static relay chains against the move-only baseline.

Compiles each benchmark family in all three modes and prints the time spent
in two-qubit stages together with the estimated fidelity.
"""
from dtcompile import MODES, compile_circuit, gen_benchmark

n = 20
print(f"{'family':<7} {'mode':<13} {'entangling us':>14} {'total us':>10} {'fidelity':>10}")
for fam in ("ising", "bv", "cat", "adder", "qft"):
    c = gen_benchmark(fam, n)
    for mode in MODES:
        _, r = compile_circuit(c, mode)
        print(f"{fam:<7} {mode:<13} {r.entangling_us:>14.2f} {r.total_us:>10.2f} {r.fidelity.total:>10.4g}")
    print()

# most of the baseline's time is spent picking up and dropping atoms
_, r = compile_circuit(gen_benchmark("ising", n), "aod-baseline")
print(f"baseline ising{n}: {r.move_us:.0f} us of moves in {r.routing_batches} batches")
