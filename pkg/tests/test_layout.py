import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtcompile.circuit import asap_schedule, gen_benchmark, priority_scores
from dtcompile.hardware import ENT, STORAGE, CompilerParams, Site, crop_grid
from dtcompile.layout import (
    MappingState,
    PlacementError,
    assign_entanglement_targets,
    assign_storage_sites,
    atom_qubit,
    placement_cost,
)


def test_single_qubit_gets_first_site():
    g = crop_grid(1)
    assert assign_entanglement_targets({0: 0.0}, g) == {0: g.qubit_sites()[0]}


def test_higher_priority_first():
    g = crop_grid(2)
    first, second = g.qubit_sites()[:2]
    assert assign_entanglement_targets({0: 0.5, 1: 1.5}, g) == {1: first, 0: second}


def test_equal_priority_tie_break():
    g = crop_grid(2)
    t = assign_entanglement_targets({1: 1.0, 0: 1.0}, g)
    assert t[0] < t[1]


def test_targets_are_usable_qubit_rows():
    g = crop_grid(12)
    for s in assign_entanglement_targets({q: 1.0 / (q + 1) for q in range(12)}, g).values():
        assert s.zone == ENT and g.is_usable_column(s.col)
        assert s.row >= g.ent_first_row_y


def test_too_many_qubits():
    with pytest.raises(PlacementError):
        assign_entanglement_targets({q: 0.0 for q in range(50)}, crop_grid(4))


@given(st.lists(st.floats(0, 10), min_size=2, max_size=16), st.data())
def test_priority_monotone(scores, data):
    pri = dict(enumerate(scores))
    g = crop_grid(len(pri))
    q = data.draw(st.sampled_from(sorted(pri)))
    bump = data.draw(st.floats(0, 5))
    before = assign_entanglement_targets(pri, g)[q]
    after = assign_entanglement_targets({**pri, q: pri[q] + bump}, g)[q]
    assert after <= before


# --------------------------------------------------------------------------- storage placement

def test_same_column_dominates():
    g = crop_grid(9)
    target = g.qubit_sites()[0]
    out = assign_storage_sites({0: target}, g)
    x_t = g.xy(target)[0]
    cols = [c for c in range(g.storage_cols)]
    nearest = min(cols, key=lambda c: abs(g.storage_x0 + c * g.storage_pitch - x_t))
    assert out[0].col == nearest


def test_nearer_row_wins_within_column():
    g = crop_grid(9)
    target = g.qubit_sites()[0]
    out = assign_storage_sites({0: target, 1: target}, g)
    assert out[0].col == out[1].col
    assert out[0].row == g.storage_rows - 1
    assert out[1].row == g.storage_rows - 2


def _greedy_oracle(targets, g, knobs=CompilerParams()):
    """Replay of the stated cost model using array arithmetic."""
    sites = g.storage_sites()
    ys = np.array([s.row * g.storage_pitch for s in sites])
    cols = np.array([s.col for s in sites])
    rows = np.array([s.row for s in sites])
    col_x = g.storage_x0 + np.arange(g.storage_cols) * g.storage_pitch
    ent_y = g.ent_y(g.ent_first_row_y)
    free = np.ones(len(sites), bool)
    out = {}
    for q, t in targets.items():
        tc = int(np.argmin(np.abs(col_x - g.xy(t)[0])))
        cost = knobs.w_col * np.abs(cols - tc) + knobs.w_row * np.abs(rows - (g.storage_rows - 1)) + knobs.w_ent * np.abs(ent_y - ys)
        cost = np.where(free, cost, np.inf)
        best = np.flatnonzero(cost == cost.min())
        # ties: lower row index is farther from the zone, prefer the nearer one, then lower column
        k = min(best, key=lambda i: (-rows[i], cols[i]))
        free[k] = False
        out[q] = sites[k]
    return out


def test_storage_matches_greedy_oracle_n4():
    c = gen_benchmark("qft", 4)
    pri = priority_scores(asap_schedule(c), 4)
    g = crop_grid(4)
    targets = assign_entanglement_targets(pri, g)
    assert assign_storage_sites(targets, g) == _greedy_oracle(targets, g)


@given(st.integers(1, 40), st.integers(0, 2 ** 16))
def test_storage_injective(n, seed):
    rng = np.random.default_rng(seed)
    g = crop_grid(n)
    pri = {q: float(rng.random()) for q in range(n)}
    targets = assign_entanglement_targets(pri, g)
    out = assign_storage_sites(targets, g)
    assert len(set(out.values())) == n
    assert all(s.zone == STORAGE and s.row >= g.parking_rows for s in out.values())
    assert out == assign_storage_sites(targets, g)
    assert out == _greedy_oracle(targets, g)


def test_storage_exclude_and_exhaustion():
    g = crop_grid(4)
    t = g.qubit_sites()[0]
    blocked = g.storage_sites()[-1]
    assert assign_storage_sites({0: t}, g, exclude=[blocked])[0] != blocked
    with pytest.raises(PlacementError):
        assign_storage_sites({k: t for k in range(100)}, g)


def test_placement_cost_terms():
    g = crop_grid(9)
    t = g.qubit_sites()[0]
    a = Site(STORAGE, 0, g.storage_rows - 1)
    b = Site(STORAGE, 0, g.storage_rows - 2)
    assert placement_cost(b, t, g) - placement_cost(a, t, g) == pytest.approx(10 + g.storage_pitch)


# --------------------------------------------------------------------------- mapping state

def test_mapping_state_moves():
    s0, s1, s2 = (Site(STORAGE, c, 1) for c in range(3))
    m = MappingState.from_maps({0: s0, 1: s1})
    assert m.occupant(s0) == "q0" and atom_qubit("q0") == 0 and atom_qubit("a3") is None
    with pytest.raises(PlacementError):
        m.move("q0", s1)
    m.relocate(["q0", "q1"], [s1, s0])
    assert m.qubit_site(0) == s1 and m.qubit_site(1) == s0
    with pytest.raises(PlacementError):
        m.relocate(["q0"], [s0])
    m.add("a0", s2)
    assert m.ancillas == {"a0": s2}
    with pytest.raises(PlacementError):
        MappingState({"q0": s0, "q1": s0})
