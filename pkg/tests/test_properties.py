import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ilptemper.bench import relative_gap
from ilptemper.core import (
    EnergyParams,
    apply_flips,
    build_instance,
    energy,
    flip_deltas,
    init_state,
    objective,
    violation,
)
from ilptemper.io import read_canonical, read_trace, write_canonical, write_trace
from ilptemper.samplers import sample_indices
from ilptemper.tempering import TraceRecord, make_ladder

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def instances(draw, max_n=8, max_m=5):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(0, max_m))
    c = draw(arrays(np.float64, n, elements=finite))
    b = draw(arrays(np.float64, m, elements=finite))
    cells = draw(st.sets(st.tuples(st.integers(0, max(m - 1, 0)), st.integers(0, n - 1)),
                         max_size=n * m)) if m else set()
    trips = [(r, j, draw(finite)) for r, j in sorted(cells)]
    inst = build_instance(n, m, c, trips, b)
    x = draw(arrays(np.int8, n, elements=st.integers(0, 1)))
    return inst, x


@settings(max_examples=150, deadline=None)
@given(instances(), st.floats(0.01, 100), st.sampled_from([1, 2]))
def test_energy_decomposes(case, lam, p):
    inst, x = case
    e = energy(inst, x, EnergyParams(lam, p))
    want = objective(inst, x) + lam * violation(inst, x, p)[0]
    assert math.isclose(e, want, rel_tol=1e-12, abs_tol=1e-9)
    assert violation(inst, x, p)[0] >= 0


@settings(max_examples=150, deadline=None)
@given(instances(), st.floats(0.01, 100), st.sampled_from([1, 2]))
def test_flip_delta_is_neighbor_difference(case, lam, p):
    inst, x = case
    params = EnergyParams(lam, p)
    s = init_state(inst, x, params)
    d = flip_deltas(inst, s, params)
    for j in range(inst.n):
        y = x.copy()
        y[j] ^= 1
        want = energy(inst, y, params) - energy(inst, x, params)
        assert math.isclose(d[j], want, rel_tol=1e-9, abs_tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(instances(), st.data())
def test_double_flip_restores_state(case, data):
    inst, x = case
    params = EnergyParams(2.0, 2)
    J = data.draw(st.lists(st.integers(0, inst.n - 1), unique=True, max_size=inst.n))
    s = init_state(inst, x, params)
    back = apply_flips(inst, apply_flips(inst, s, J, params), J, params)
    assert back.x.tolist() == s.x.tolist()
    assert math.isclose(back.energy, s.energy, rel_tol=1e-9, abs_tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_canonical_round_trip(case):
    inst, _ = case
    assert read_canonical(write_canonical(inst)) == inst


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e6), st.integers(0, 10**9),
                          st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False)),
                          st.floats(allow_nan=False, allow_infinity=False)), max_size=20))
def test_trace_round_trip(rows):
    recs = [TraceRecord(w, s, inc, e, inc is not None) for w, s, inc, e in rows]
    assert read_trace(write_trace(recs)) == recs


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-700, 700)), st.data())
def test_sampled_indices_distinct_and_in_range(lw, data):
    L = data.draw(st.integers(1, lw.size))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    J = sample_indices(lw, L, rng)
    assert len(set(J.tolist())) == L
    assert all(0 <= j < lw.size for j in J)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.integers(1, 40))
def test_ladder_monotone_with_exact_ends(a, b, B):
    lo, hi = min(a, b), max(a, b)
    v = make_ladder(lo, hi, B).values
    assert v[0] == lo and (B == 1 or v[-1] == hi)
    assert all(x <= y * (1 + 1e-12) for x, y in zip(v, v[1:]))


@given(finite, finite.filter(lambda v: abs(v) > 1e-6))
def test_gap_sign_follows_order(obj, bks):
    g = relative_gap(obj, bks)
    assert (g > 0) == (obj > bks) and (g < 0) == (obj < bks)
