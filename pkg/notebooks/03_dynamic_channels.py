"""How the dynamic compiler reuses its relay backbone on QFT.

QFT stages keep one qubit busy across neighbouring layers, so the anchor
column tends to stay put and most backbone sites carry over.
"""
from dtcompile import asap_schedule, compile_dynamic, gen_benchmark
from dtcompile.cli import render_svg

c = gen_benchmark("qft", 10)
stages = asap_schedule(c)
print(f"{len(stages)} ASAP stages, {sum(s.is_two_qubit for s in stages)} with two-qubit gates")

s, r = compile_dynamic(c)
print("backbone reuse per consecutive stage pair:")
print(" ".join(f"{x:.2f}" for x in r.reuse))
print(f"{r.n_remote_cz} remote CZ ({r.total_hops} hops), {r.n_local_cz} local CZ, {r.n_ancilla} flying ancillas")

f = r.fidelity
for k in f.FACTORS:
    print(f"  {k:<10} {getattr(f, k):.6f}")
print(f"  total      {f.total:.6f}")

with open("qft10_dynamic.svg", "w") as fh:
    fh.write(render_svg(s))
print("wrote qft10_dynamic.svg")
