import math

import pytest

from dtcompile.circuit import Circuit, GateKind, asap_schedule, gen_benchmark
from dtcompile.hardware import HardwareConfig, aod_move_duration, remote_cz_duration
from dtcompile.pipeline import BASELINE, DYNAMIC, MODES, STATIC, compile_aod_baseline, compile_circuit, compile_dynamic, compile_static
from dtcompile.schedule import CONFIG_STAGE, GATE_KINDS, LOCAL_CZ, ONE_Q, REMOTE_CZ
from dtcompile.validate import validate_schedule

T = HardwareConfig().timing


def _gates(s):
    return [i for i in s.instructions if i.kind in GATE_KINDS]


# --------------------------------------------------------------------------- static examples

def test_two_qubit_static_example():
    s, rep = compile_static(Circuit(2).h(0).cz(0, 1))
    after = [i for i in s.instructions if i.stage != CONFIG_STAGE]
    assert all(i.is_move for i in s.instructions if i.stage == CONFIG_STAGE)
    assert [i.kind for i in after] == [ONE_Q, REMOTE_CZ]
    cz = after[1]
    assert cz.hops == len(cz.relay) - 1
    assert cz.duration == pytest.approx(remote_cz_duration(cz.hops))
    assert validate_schedule(s) == []


@pytest.mark.parametrize("mode", MODES)
def test_no_two_qubit_gates_no_cz(mode):
    s, rep = compile_circuit(Circuit(3).h(0).x(1).h(2), mode)
    assert rep.n_remote_cz == rep.n_local_cz == 0
    assert rep.n_1q == 3
    assert validate_schedule(s) == []


def test_ising10_static_no_moves_after_config():
    s, rep = compile_static(gen_benchmark("ising", 10))
    assert rep.n_remote_cz == 9 and rep.n_local_cz == 0
    assert not [i for i in s.instructions if i.is_move and i.stage != CONFIG_STAGE]


# --------------------------------------------------------------------------- dynamic examples

def test_qft4_dynamic_reuses_channels():
    s, rep = compile_dynamic(gen_benchmark("qft", 4))
    assert any(r > 0 for r in rep.reuse)
    assert validate_schedule(s) == []


def test_never_persisting_pairs_go_direct():
    s, rep = compile_dynamic(Circuit(4).cz(0, 1).h(0).h(1).cz(2, 3))
    assert rep.n_remote_cz == 0 and rep.n_local_cz == 2
    assert rep.reuse == []
    s, rep = compile_dynamic(Circuit(2).cz(0, 1))
    assert rep.n_remote_cz == 0 and rep.n_local_cz == 1


def test_qft10_dynamic_each_cp_once():
    c = gen_benchmark("qft", 10)
    s, rep = compile_dynamic(c)
    two_q = [k for k, g in enumerate(c.gates) if len(g.qubits) == 2]
    hit = [i.gate for i in s.instructions if i.kind in (REMOTE_CZ, LOCAL_CZ)]
    assert sorted(hit) == two_q
    assert validate_schedule(s) == []


# --------------------------------------------------------------------------- baseline examples

def test_baseline_single_pair_round_trip():
    s, rep = compile_aod_baseline(Circuit(2).cz(0, 1))
    moves = [i for i in s.instructions if i.kind == "move"]
    assert len(moves) == 2
    d = max(math.dist(p[0], p[-1]) for p in moves[0].paths)
    assert rep.entangling_us == pytest.approx(2 * aod_move_duration(d) + T.t_2pi)


def test_baseline_disjoint_pairs_share_batches():
    _, one = compile_aod_baseline(Circuit(4).cz(0, 1))
    s, two = compile_aod_baseline(Circuit(4).cz(0, 1).cz(2, 3))
    assert two.n_local_cz == 2
    # the second pair rides along in the first pair's batches
    assert two.routing_batches == one.routing_batches
    assert all(len(i.atoms) == 2 for i in s.instructions if i.kind == "move")
    cz = s.of_kind(LOCAL_CZ)
    assert cz[0].start == cz[1].start


def test_ising20_baseline_at_least_twice_static():
    c = gen_benchmark("ising", 20)
    _, st = compile_static(c)
    _, bl = compile_aod_baseline(c)
    assert bl.entangling_us >= 2 * st.entangling_us


@pytest.mark.parametrize("n", [10, 20, 50])
def test_ising_static_beats_baseline(n):
    c = gen_benchmark("ising", n)
    assert compile_static(c)[1].entangling_us < compile_aod_baseline(c)[1].entangling_us


# --------------------------------------------------------------------------- whole-pipeline properties

CASES = [(f, n) for f in ("ising", "qft", "bv", "cat", "adder") for n in (4, 6)]


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("family,n", CASES)
def test_gate_coverage_and_order(family, n, mode):
    c = gen_benchmark(family, n)
    s, rep = compile_circuit(c, mode)
    gates = _gates(s)
    assert sorted(i.gate for i in gates) == list(range(len(c.gates)))
    start = {i.gate: i.start for i in gates}
    end = {i.gate: i.end for i in gates}
    last = {}
    for k, g in enumerate(c.gates):
        for q in g.qubits:
            if q in last:
                assert start[k] >= end[last[q]] - 1e-9
            last[q] = k
    for i in s.of_kind(REMOTE_CZ):
        assert i.duration == pytest.approx(remote_cz_duration(i.hops))
    assert validate_schedule(s) == []


@pytest.mark.parametrize("family", ["ising", "qft", "cat"])
def test_static_never_crosses_zones_after_config(family):
    s, _ = compile_static(gen_benchmark(family, 8))
    assert not [i for i in s.instructions if i.is_move and i.stage != CONFIG_STAGE]
    assert not s.of_kind(LOCAL_CZ)


def test_entangling_covers_only_two_qubit_stages():
    c = gen_benchmark("bv", 6)
    s, rep = compile_static(c)
    stages = asap_schedule(c)
    win = s.stage_windows()
    want = sum(hi - lo for k, (lo, hi) in win.items() if k >= 0 and stages[k].is_two_qubit)
    assert rep.entangling_us == pytest.approx(want)
    assert rep.entangling_us <= rep.total_us


@pytest.mark.parametrize("mode", MODES)
def test_compilation_deterministic(mode):
    c = gen_benchmark("qft", 6)
    assert compile_circuit(c, mode)[0].dumps() == compile_circuit(c, mode)[0].dumps()


def test_cp_native_kind_kept():
    c = gen_benchmark("qft", 3)
    assert any(g.kind == GateKind.CP for g in c.gates)
    s, _ = compile_circuit(c, STATIC)
    assert {i.kind for i in _gates(s)} <= {ONE_Q, REMOTE_CZ}
    s, _ = compile_circuit(c, BASELINE)
    assert {i.kind for i in _gates(s)} <= {ONE_Q, LOCAL_CZ}
    assert compile_circuit(c, DYNAMIC)[1].n_qubits == 3
