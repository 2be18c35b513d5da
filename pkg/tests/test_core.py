import numpy as np
import pytest

from ilptemper import _backend
from ilptemper.core import (
    REFRESH_EVERY,
    EnergyParams,
    FeasTolerance,
    apply_flips,
    build_instance,
    energy,
    flip_deltas,
    init_state,
    is_feasible,
    objective,
    violation,
)
from ilptemper.errors import (
    DimensionMismatch,
    DuplicateEntry,
    DuplicateIndex,
    IndexOutOfRange,
    NonFiniteValue,
    NonPositivePenalty,
)

from conftest import from_dense
from oracles import dense_energy, random_ilp


def test_minimal_instance_has_one_row_of_two():
    inst = build_instance(2, 1, [1, 2], [(0, 0, 1), (0, 1, 1)], [1])
    assert (inst.n, inst.m, inst.nnz) == (2, 1, 2)
    assert inst.metadata == {}


def test_duplicate_triplet_rejected():
    with pytest.raises(DuplicateEntry):
        build_instance(2, 1, [1, 2], [(0, 0, 1), (0, 0, 1)], [1])


@pytest.mark.parametrize("kw, err", [
    (dict(c=[1]), DimensionMismatch),
    (dict(b=[1, 2]), DimensionMismatch),
    (dict(triplets=[(1, 0, 1.0)]), IndexOutOfRange),
    (dict(triplets=[(0, 2, 1.0)]), IndexOutOfRange),
    (dict(triplets=[(0, 0, float("nan"))]), NonFiniteValue),
    (dict(c=[1, float("inf")]), NonFiniteValue),
])
def test_build_validation(kw, err):
    args = dict(n=2, m=1, c=[1, 2], triplets=[(0, 0, 1)], b=[1])
    args.update(kw)
    with pytest.raises(err):
        build_instance(**args)


def test_explicit_zeros_dropped_and_layouts_agree():
    inst = build_instance(3, 2, [0, 0, 0], [(0, 0, 0.0), (1, 2, 2.0), (0, 1, -1.0)], [0, 0])
    assert inst.nnz == 2
    r1, c1, v1 = inst.triplets()
    r2, c2, v2 = inst.column_triplets()
    assert sorted(zip(r1, c1, v1)) == sorted(zip(r2, c2, v2))


def test_instance_arrays_are_read_only(ref3):
    with pytest.raises(ValueError):
        ref3.c[0] = 5.0


def test_unconstrained_and_empty_column():
    inst = build_instance(3, 0, [1, 0, -1], [], [])
    assert violation(inst, [1, 1, 1])[0] == 0.0
    s = init_state(inst, [0, 1, 0], EnergyParams(1.0))
    assert flip_deltas(inst, s, EnergyParams(1.0))[1] == 0.0


def test_reference_energies(ref3):
    p1, p2 = EnergyParams(5.0, 1), EnergyParams(5.0, 2)
    assert energy(ref3, [0, 0, 0], p1) == 0.0
    assert energy(ref3, [1, 1, 1], p1) == 12.0
    assert energy(ref3, [1, 1, 1], p2) == 12.0


def test_reference_violation(ref3):
    tot, per = violation(ref3, [0, 1, 0])
    assert tot == 0.0 and per.tolist() == [0.0, 0.0]
    tot, per = violation(ref3, [1, 1, 1], 1)
    assert tot == 2.0 and per.tolist() == [1.0, 1.0]


def test_zero_vector_feasible_with_nonnegative_rhs():
    rng = np.random.default_rng(0)
    A, b, c = random_ilp(rng, 6, 4)
    b = np.abs(b)
    assert violation(from_dense(A, b, c), np.zeros(6))[0] == 0.0


def test_reference_feasibility(ref3):
    assert is_feasible(ref3, [0, 1, 0], FeasTolerance())
    assert not is_feasible(ref3, [1, 1, 0], FeasTolerance())
    inst = build_instance(1, 1, [0], [(0, 0, 1.4)], [1.0])
    assert is_feasible(inst, [1], FeasTolerance(0.5))
    assert not is_feasible(inst, [1], FeasTolerance(0.0))


def test_dimension_checks(ref3):
    p = EnergyParams(1.0)
    for f in (lambda: energy(ref3, [0, 1], p), lambda: violation(ref3, [0] * 4),
              lambda: is_feasible(ref3, [0]), lambda: init_state(ref3, [0, 0], p)):
        with pytest.raises(DimensionMismatch):
            f()


def test_energy_params_validation():
    with pytest.raises(NonPositivePenalty):
        EnergyParams(0.0)
    with pytest.raises(ValueError):
        EnergyParams(1.0, 3)


def test_init_state_reference(ref3):
    p = EnergyParams(5.0)
    s = init_state(ref3, [0, 0, 0], p)
    assert (s.obj, s.act.tolist(), s.viol, s.energy) == (0.0, [0.0, 0.0], 0.0, 0.0)
    s = init_state(ref3, [1, 1, 1], p)
    assert (s.obj, s.act.tolist(), s.viol, s.energy) == (2.0, [2.0, 2.0], 2.0, 12.0)


def test_reference_flip_deltas(ref3):
    p = EnergyParams(5.0)
    s = init_state(ref3, [0, 0, 0], p)
    assert flip_deltas(ref3, s, p).tolist() == [1.0, -2.0, 3.0]


def test_apply_flips_reference(ref3):
    p = EnergyParams(5.0)
    s = init_state(ref3, [0, 0, 0], p)
    y = apply_flips(ref3, s, [1], p)
    assert y.x.tolist() == [0, 1, 0]
    assert (y.obj, y.act.tolist(), y.viol, y.energy) == (-2.0, [1.0, 1.0], 0.0, -2.0)
    assert s.x.tolist() == [0, 0, 0]  # original untouched


def test_apply_flips_empty_and_involution(ref3):
    p = EnergyParams(5.0, 2)
    s = init_state(ref3, [1, 0, 1], p)
    same = apply_flips(ref3, s, [], p)
    assert same.x.tolist() == s.x.tolist() and same.energy == s.energy
    back = apply_flips(ref3, apply_flips(ref3, s, [0, 1, 2], p), [0, 1, 2], p)
    np.testing.assert_allclose(back.act, s.act, atol=1e-9)
    np.testing.assert_allclose(back.pen_delta, s.pen_delta, atol=1e-9)
    assert back.energy == pytest.approx(s.energy, abs=1e-9)


def test_apply_flips_errors(ref3):
    s = init_state(ref3, [0, 0, 0], EnergyParams(1.0))
    with pytest.raises(IndexOutOfRange):
        apply_flips(ref3, s, [3])
    with pytest.raises(DuplicateIndex):
        apply_flips(ref3, s, [1, 1])


@pytest.mark.parametrize("exponent", [1, 2])
@pytest.mark.parametrize("fractional", [False, True])
def test_flip_deltas_match_neighbor_energies(exponent, fractional):
    rng = np.random.default_rng(11 + exponent + 7 * fractional)
    for _ in range(40):
        A, b, c = random_ilp(rng, 8, 5, fractional=fractional)
        inst = from_dense(A, b, c)
        lam = float(rng.uniform(0.5, 5))
        p = EnergyParams(lam, exponent)
        x = rng.integers(0, 2, 8)
        s = init_state(inst, x, p)
        e0 = dense_energy(A, b, c, x, lam, exponent)
        want = []
        for j in range(8):
            y = x.copy()
            y[j] ^= 1
            want.append(dense_energy(A, b, c, y, lam, exponent) - e0)
        np.testing.assert_allclose(flip_deltas(inst, s, p), want, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("exponent", [1, 2])
def test_incremental_caches_match_recompute(backend, exponent):
    rng = np.random.default_rng(5)
    A, b, c = random_ilp(rng, 12, 9, fractional=True)
    inst = from_dense(A, b, c)
    p = EnergyParams(2.0, exponent)
    s = init_state(inst, rng.integers(0, 2, 12), p)
    arrs = _backend.arrays(inst, backend)
    kern = _backend.get(backend)
    for _ in range(300):
        J = rng.choice(12, size=rng.integers(1, 4), replace=False)
        kern.flip_inplace(arrs, s, J)
        fresh = init_state(inst, s.x, p)
        np.testing.assert_allclose(s.act, fresh.act, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(s.pen_delta, fresh.pen_delta, rtol=1e-9, atol=1e-9)
        assert s.obj == pytest.approx(fresh.obj, rel=1e-9, abs=1e-9)
        assert s.viol == pytest.approx(fresh.viol, rel=1e-9, abs=1e-9)
        assert s.n_violated == fresh.n_violated


def test_feasible_states_have_exactly_zero_violation(backend):
    # fractional data makes activity round-off likely; viol must still be exactly 0
    rng = np.random.default_rng(9)
    A, b, c = random_ilp(rng, 10, 6, fractional=True)
    inst = from_dense(A, b + 5, c)
    s = init_state(inst, np.zeros(10), EnergyParams(1.0))
    kern = _backend.get(backend)
    arrs = _backend.arrays(inst, backend)
    for _ in range(200):
        kern.flip_inplace(arrs, s, [int(rng.integers(10))])
        if s.nbad[1] == 0:
            assert s.viol == 0.0


def test_periodic_refresh_resets_flip_counter(ref3):
    p = EnergyParams(1.0)
    s = init_state(ref3, [0, 0, 0], p)
    s.flips[0] = REFRESH_EVERY - 1
    y = apply_flips(ref3, s, [0], p)
    assert y.flips[0] == 0
    assert y.energy == energy(ref3, y.x, p)


def test_equality_and_repr(ref3):
    same = build_instance(3, 2, [1, -2, 3], [(1, 2, 1), (0, 0, 1), (0, 1, 1), (1, 1, 1)],
                          [1, 1], name="ref3")
    assert same == ref3
    assert "n=3" in repr(ref3)
