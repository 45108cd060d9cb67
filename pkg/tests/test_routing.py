from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtcompile.hardware import ENT, HardwareConfig, Site, aod_travel_time, crop_grid
from dtcompile.layout import MappingState
from dtcompile.routing import (
    ACTIVATE,
    BIGMOVE,
    DEACTIVATE,
    MOVE,
    PARK,
    MoveVector,
    RoutingError,
    RoutingStats,
    apply_primitive,
    build_conflict_graph,
    schedule_moves,
    staged_fallback,
)
from dtcompile.schedule import Schedule, Timeline
from dtcompile.validate import validate_schedule


def _hw(n=16):
    return HardwareConfig().with_geometry(crop_grid(n))


def _route(moves, m, hw, **kw):
    m0 = m.copy()
    batches = schedule_moves(moves, m, hw.geometry, hw, **kw)
    tl = Timeline()
    tl.add_batches(batches, 0)
    s = Schedule("test", 0, hw, m0, tl.instructions)
    return batches, s


def _point_segment(p, a, b):
    p, a, b = (np.asarray(v, float) for v in (p, a, b))
    t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
    return float(np.linalg.norm(p - (a + t * (b - a))))


def _mv(atom, src, dst, g):
    return MoveVector.between(atom, src, dst, g)


# --------------------------------------------------------------------------- conflict graph

def test_disjoint_order_preserving_moves_do_not_conflict():
    g = _hw().geometry
    m = MappingState({"q0": Site(ENT, 0, 0), "q1": Site(ENT, 8, 0)})
    moves = [_mv("q0", Site(ENT, 0, 0), Site(ENT, 1, 2), g), _mv("q1", Site(ENT, 8, 0), Site(ENT, 9, 2), g)]
    assert build_conflict_graph(moves, m, g).edges == set()


def test_column_swap_conflicts():
    g = _hw().geometry
    a, b = Site(ENT, 0, 0), Site(ENT, 4, 0)
    m = MappingState({"q0": a, "q1": b})
    moves = [_mv("q0", a, Site(ENT, 5, 2), g), _mv("q1", b, Site(ENT, 1, 2), g)]
    assert build_conflict_graph(moves, m, g).edges == {(0, 1)}


def test_grazing_stationary_atom_conflicts():
    g = _hw().geometry
    src, dst, still = Site(ENT, 0, 0), Site(ENT, 1, 2), Site(ENT, 0, 1)
    d = _point_segment(g.xy(still), g.xy(src), g.xy(dst))
    assert 1.0 < d < 2.0
    far = [Site(ENT, 8, 0), Site(ENT, 9, 2)]
    moves = [_mv("q0", src, dst, g), _mv("q1", *far, g)]
    m = MappingState({"q0": src, "q1": far[0]})
    assert build_conflict_graph(moves, m, g).edges == set()
    m.add("q2", still)
    assert build_conflict_graph(moves, m, g).edges == {(0, 1)}


def test_shared_site_conflicts():
    g = _hw().geometry
    a, b, c = Site(ENT, 0, 0), Site(ENT, 0, 2), Site(ENT, 0, 4)
    m = MappingState({"q0": a, "q1": b})
    moves = [_mv("q0", a, b, g), _mv("q1", b, c, g)]
    assert (0, 1) in build_conflict_graph(moves, m, g).edges


# --------------------------------------------------------------------------- scheduling

def test_independent_moves_one_batch():
    hw = _hw()
    g = hw.geometry
    qs = g.qubit_sites()[:4:2]
    m = MappingState.from_maps({i: s for i, s in enumerate(g.storage_sites()[-2:])})
    moves = [_mv(f"q{i}", m.qubit_site(i), qs[i], g) for i in range(2)]
    batches, s = _route(moves, m, hw)
    assert len(batches) == 1
    assert [p.kind for p in batches[0]] == [ACTIVATE, MOVE, DEACTIVATE]
    assert batches[0][1].duration == pytest.approx(aod_travel_time(max(mv.distance for mv in moves)))
    assert validate_schedule(s) == []


def test_crossing_moves_two_batches():
    hw = _hw()
    g = hw.geometry
    a, b = Site(ENT, 0, 0), Site(ENT, 4, 0)
    m = MappingState({"q0": a, "q1": b})
    moves = [_mv("q0", a, Site(ENT, 5, 2), g), _mv("q1", b, Site(ENT, 1, 2), g)]
    batches, s = _route(moves, m, hw)
    assert len(batches) == 2
    assert validate_schedule(s) == []


def test_swap_deadlock_goes_through_parking():
    hw = _hw()
    g = hw.geometry
    a, b = Site(ENT, 0, 1), Site(ENT, 3, 1)
    m = MappingState({"q0": a, "q1": b})
    stats = RoutingStats()
    batches, s = _route([_mv("q0", a, b, g), _mv("q1", b, a, g)], m, hw, stats=stats)
    assert m.positions == {"q0": b, "q1": a}
    assert stats.parked == 1 and stats.fallbacks == 1 and len(batches) == 3
    kinds = [p.kind for batch in batches for p in batch]
    assert {PARK, BIGMOVE} <= set(kinds)
    assert validate_schedule(s) == []


def test_parking_exhausted():
    hw = _hw()
    g = hw.geometry
    a, b = Site(ENT, 0, 1), Site(ENT, 3, 1)
    pos = {"q0": a, "q1": b}
    pos.update({f"a{i}": s for i, s in enumerate(g.parking_sites())})
    with pytest.raises(RoutingError, match="parking"):
        schedule_moves([_mv("q0", a, b, g), _mv("q1", b, a, g)], MappingState(pos), g, hw)


def test_colliding_destinations_rejected():
    hw = _hw()
    g = hw.geometry
    a, b, c = Site(ENT, 0, 1), Site(ENT, 3, 1), Site(ENT, 6, 1)
    with pytest.raises(RoutingError):
        schedule_moves([_mv("q0", a, c, g), _mv("q1", b, c, g)], MappingState({"q0": a, "q1": b}), g, hw)


def test_fallback_sequence_shape():
    hw = _hw()
    g = hw.geometry
    src, dst = g.storage_sites()[-1], Site(ENT, 3, 3)
    m = MappingState({"q0": src})
    prims = staged_fallback(_mv("q0", src, dst, g), m, g, hw)
    assert [p.kind for p in prims] == [ACTIVATE, PARK, BIGMOVE, PARK, DEACTIVATE]
    for p in prims:
        apply_primitive(p, m)
    assert m.site("q0") == dst
    with pytest.raises(RoutingError):
        staged_fallback(_mv("q0", dst, src, g), MappingState({"q0": dst, "q1": src}), g, hw)


def _all_sites(g):
    ent = [Site(ENT, c, r) for c in range(g.ent_cols) for r in range(g.ent_rows)]
    return g.storage_sites() + ent


@given(st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=60, deadline=None)
def test_random_moves_replay_and_legality(k, seed):
    rng = np.random.default_rng(seed)
    hw = _hw(16)
    g = hw.geometry
    sites = _all_sites(g)
    pick = rng.choice(len(sites), 2 * k, replace=False)
    start = [sites[i] for i in pick[:k]]
    m = MappingState({f"q{i}": s for i, s in enumerate(start)})
    # half of the atoms move, some into sites vacated by others
    pool = [sites[i] for i in pick[k:]] + start
    dests = [pool[i] for i in rng.permutation(len(pool))[:k]]
    moves = []
    final = dict(m.positions)
    for i, d in enumerate(dests):
        if d != start[i] and rng.random() < 0.7:
            final[f"q{i}"] = d
    if len(set(final.values())) != len(final):
        return
    moves = [_mv(a, m.site(a), d, g) for a, d in final.items() if d != m.site(a)]
    batches, s = _route(moves, m, hw)
    assert m.positions == final
    assert validate_schedule(s) == []
    for batch in batches:
        prims = {p.kind: p for p in batch}
        if MOVE in prims:
            p = prims[MOVE]
            sub = [MoveVector.between(a, x, y, g) for a, x, y in zip(p.atoms, p.src, p.dst)]
            assert build_conflict_graph(sub, MappingState({a: x for a, x in zip(p.atoms, p.src)}), g).edges == set()
            for axis in (0, 1):
                src_order = np.argsort([g.xy(x)[axis] for x in p.src], kind="stable")
                dst_order = np.argsort([g.xy(y)[axis] for y in p.dst], kind="stable")
                assert list(src_order) == list(dst_order)


def test_schedule_deterministic():
    hw = _hw(16)
    g = hw.geometry
    src = g.storage_sites()[-6:]
    dst = g.qubit_sites()[:6]
    moves = [_mv(f"q{i}", s, d, g) for i, (s, d) in enumerate(zip(src, dst))]
    a = schedule_moves(moves, MappingState({f"q{i}": s for i, s in enumerate(src)}), g, hw)
    b = schedule_moves(moves, MappingState({f"q{i}": s for i, s in enumerate(src)}), g, hw)
    assert a == b


def _chromatic(n, edges):
    for k in range(1, n + 1):
        for colours in product(range(k), repeat=n):
            if all(colours[a] != colours[b] for a, b in edges):
                return k
    return n


def test_batch_count_near_colouring_bound():
    # informational slack check on small instances against the exact chromatic number
    hw = _hw(16)
    g = hw.geometry
    rng = np.random.default_rng(2)
    for _ in range(20):
        ents = [Site(ENT, c, r) for c in range(g.ent_cols) for r in g.qubit_rows]
        pick = rng.choice(len(ents), 12, replace=False)
        src = [ents[i] for i in pick[:6]]
        dst = [ents[i] for i in pick[6:]]
        moves = [_mv(f"q{i}", s, d, g) for i, (s, d) in enumerate(zip(src, dst))]
        m = MappingState({f"q{i}": s for i, s in enumerate(src)})
        cg = build_conflict_graph(moves, m, g)
        batches = schedule_moves(moves, m, g, hw)
        assert len(batches) <= _chromatic(6, cg.edges) + 2
