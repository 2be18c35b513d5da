"""Canonical binary ILP, penalized energy and incremental flip machinery.

Problems are stored as ``min c.x  s.t.  A x <= b,  x in {0,1}^n`` with the
constraint matrix kept in both compressed-row and compressed-column form.
The energy of an assignment is

    E(x; lam) = c.x + lam * sum_k max(0, A_k x - b_k) ** p,   p in {1, 2}.

A :class:`ChainState` caches ``c.x``, ``A x``, the total violation, the
number of rows violated beyond the feasibility tolerance, and, for every
variable, the change of the (unweighted) violation that flipping it would
cause.  The last cache makes the full vector of flip deltas available in
O(n) and is updated by :func:`apply_flips` touching only the rows that the
flipped columns hit.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import (
    DimensionMismatch,
    DuplicateEntry,
    DuplicateIndex,
    IndexOutOfRange,
    IlpValueError,
    NonFiniteValue,
    NonPositivePenalty,
)

#: default feasibility slack on ``A x <= b``
FEAS_EPS = 1e-6

#: caches are rebuilt from scratch after this many flips
REFRESH_EVERY = 100_000


class IlpInstance:
    """Immutable binary ILP in canonical ``min / <= / {0,1}`` form.

    Build with :func:`build_instance`; the constructor assumes validated,
    sorted inputs.
    """

    __slots__ = (
        "n", "m", "c", "b", "name", "metadata",
        "row_ptr", "row_col", "row_val", "col_ptr", "col_row", "col_val",
        "entry_row", "_kernel_cache",
    )

    def __init__(self, n, m, c, b, row_ptr, row_col, row_val,
                 col_ptr, col_row, col_val, name="", metadata=None):
        self.n = int(n)
        self.m = int(m)
        self.c = _frozen(c, np.float64)
        self.b = _frozen(b, np.float64)
        self.row_ptr = _frozen(row_ptr, np.int64)
        self.row_col = _frozen(row_col, np.int64)
        self.row_val = _frozen(row_val, np.float64)
        self.col_ptr = _frozen(col_ptr, np.int64)
        self.col_row = _frozen(col_row, np.int64)
        self.col_val = _frozen(col_val, np.float64)
        self.entry_row = _frozen(
            np.repeat(np.arange(self.m, dtype=np.int64), np.diff(self.row_ptr)),
            np.int64)
        self.name = str(name)
        self.metadata = dict(metadata or {})
        self._kernel_cache = {}

    @property
    def nnz(self):
        return int(self.row_col.size)

    def triplets(self):
        """(rows, cols, vals) in row-major order."""
        return self.entry_row.copy(), self.row_col.copy(), self.row_val.copy()

    def column_triplets(self):
        """(rows, cols, vals) in column-major order."""
        cols = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.col_ptr))
        return self.col_row.copy(), cols, self.col_val.copy()

    def row(self, k):
        lo, hi = self.row_ptr[k], self.row_ptr[k + 1]
        return self.row_col[lo:hi], self.row_val[lo:hi]

    def column(self, j):
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.col_row[lo:hi], self.col_val[lo:hi]

    def activities(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.bincount(self.entry_row, weights=self.row_val * x[self.row_col],
                           minlength=self.m)

    def dense(self):
        A = np.zeros((self.m, self.n))
        A[self.entry_row, self.row_col] = self.row_val
        return A

    def __eq__(self, other):
        if not isinstance(other, IlpInstance):
            return NotImplemented
        return (
            self.n == other.n and self.m == other.m and self.name == other.name
            and self.metadata == other.metadata
            and all(np.array_equal(getattr(self, a), getattr(other, a))
                    for a in ("c", "b", "row_ptr", "row_col", "row_val"))
        )

    def __repr__(self):
        return f"IlpInstance(name={self.name!r}, n={self.n}, m={self.m}, nnz={self.nnz})"


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype).copy()
    a.flags.writeable = False
    return a


def build_instance(n, m, c, triplets, b, name="", metadata=None):
    """Validate ``(row, col, value)`` triplets and build both sparse layouts.

    Zero-valued triplets are dropped.  Raises :class:`DimensionMismatch`,
    :class:`IndexOutOfRange`, :class:`DuplicateEntry` or
    :class:`NonFiniteValue`.
    """
    n, m = int(n), int(m)
    if n < 1 or m < 0:
        raise DimensionMismatch(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if c.size != n:
        raise DimensionMismatch(f"|c|={c.size} but n={n}")
    if b.size != m:
        raise DimensionMismatch(f"|b|={b.size} but m={m}")

    if isinstance(triplets, tuple) and len(triplets) == 3 and not np.isscalar(triplets[0]):
        rows, cols, vals = (np.asarray(t) for t in triplets)
    else:
        trip = list(triplets)
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        vals = np.array([t[2] for t in trip], dtype=np.float64)
    rows = rows.astype(np.int64, copy=False).reshape(-1)
    cols = cols.astype(np.int64, copy=False).reshape(-1)
    vals = vals.astype(np.float64, copy=False).reshape(-1)
    if not (rows.size == cols.size == vals.size):
        raise DimensionMismatch("triplet arrays differ in length")

    for label, arr in (("c", c), ("b", b), ("A", vals)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"non-finite value in {label}")
    if rows.size:
        if rows.min() < 0 or rows.max() >= m:
            raise IndexOutOfRange(f"row index outside [0, {m})")
        if cols.min() < 0 or cols.max() >= n:
            raise IndexOutOfRange(f"column index outside [0, {n})")

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size > 1:
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEntry(f"duplicate entry at (row={rows[k]}, col={cols[k]})")
    keep = vals != 0.0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]

    row_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=row_ptr[1:])
    corder = np.lexsort((rows, cols))
    col_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=n), out=col_ptr[1:])
    return IlpInstance(n, m, c, b, row_ptr, cols, vals,
                       col_ptr, rows[corder], vals[corder],
                       name=name, metadata=metadata)


@dataclass(frozen=True)
class EnergyParams:
    lam: float
    exponent: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise NonPositivePenalty(f"penalty weight must be > 0, got {self.lam}")
        if self.exponent not in (1, 2):
            raise IlpValueError(f"penalty exponent must be 1 or 2, got {self.exponent}")

    def with_lam(self, lam):
        return EnergyParams(lam, self.exponent)


@dataclass(frozen=True)
class FeasTolerance:
    eps: float = FEAS_EPS

    def __post_init__(self):
        if not self.eps >= 0:
            raise IlpValueError(f"tolerance must be >= 0, got {self.eps}")


def _as_binary(inst, x):
    x = np.asarray(x)
    if x.ndim != 1 or x.size != inst.n:
        raise DimensionMismatch(f"assignment has shape {x.shape}, expected ({inst.n},)")
    return (x != 0).astype(np.int8)


def _penalty(r, exponent):
    r = np.maximum(r, 0.0)
    return r if exponent == 1 else r * r


def objective(inst, x):
    x = _as_binary(inst, x)
    return float(inst.c @ x)


def violation(inst, x, exponent=1):
    """Total and per-row violation ``max(0, A_k x - b_k) ** exponent``."""
    x = _as_binary(inst, x)
    per_row = _penalty(inst.activities(x) - inst.b, exponent)
    return float(per_row.sum()), per_row


def energy(inst, x, params):
    x = _as_binary(inst, x)
    total, _ = violation(inst, x, params.exponent)
    return float(inst.c @ x) + params.lam * total


def is_feasible(inst, x, tol=None):
    eps = FEAS_EPS if tol is None else (tol.eps if isinstance(tol, FeasTolerance) else float(tol))
    x = _as_binary(inst, x)
    return bool(np.all(inst.activities(x) <= inst.b + eps))


class ChainState:
    """One replica: an assignment plus its incrementally maintained caches.

    ``pen_delta[j]`` is the change in total violation caused by flipping
    ``x[j]`` alone; it does not depend on the penalty weight, so a state can
    move between chains with different ``lam`` by reassigning :attr:`lam`.
    """

    __slots__ = ("x", "act", "pen_delta", "scal", "nbad", "flips",
                 "lam", "exponent", "eps")

    def __init__(self, x, act, pen_delta, obj, viol, nbad, lam, exponent,
                 eps=FEAS_EPS, flips=0):
        self.x = x
        self.act = act
        self.pen_delta = pen_delta
        # scal/nbad/flips are length-1 arrays so compiled kernels update them in place
        self.scal = np.array([obj, viol], dtype=np.float64)
        # [rows with A_k x > b_k + eps, rows with A_k x > b_k]
        self.nbad = np.array(nbad if np.ndim(nbad) else [nbad, nbad], dtype=np.int64)
        self.flips = np.array([flips], dtype=np.int64)
        self.lam = float(lam)
        self.exponent = int(exponent)
        self.eps = float(eps)

    @property
    def obj(self):
        return float(self.scal[0])

    @property
    def viol(self):
        return float(self.scal[1])

    @property
    def energy(self):
        return float(self.scal[0] + self.lam * self.scal[1])

    @property
    def n_violated(self):
        """Rows with ``A_k x > b_k + eps``."""
        return int(self.nbad[0])

    @property
    def feasible(self):
        return self.nbad[0] == 0

    def copy(self):
        return ChainState(self.x.copy(), self.act.copy(), self.pen_delta.copy(),
                          self.scal[0], self.scal[1], self.nbad.copy(), self.lam,
                          self.exponent, self.eps, self.flips[0])

    def params(self):
        return EnergyParams(self.lam, self.exponent)

    def __repr__(self):
        return (f"ChainState(obj={self.obj:g}, viol={self.viol:g}, "
                f"energy={self.energy:g}, n_violated={self.n_violated})")


def pen_deltas(inst, x, act, exponent):
    """Per-variable violation change of a single flip, O(n + nnz)."""
    cols = np.repeat(np.arange(inst.n), np.diff(inst.col_ptr))
    s = 1.0 - 2.0 * x[cols]
    a = act[inst.col_row]
    bb = inst.b[inst.col_row]
    diff = _penalty(a + s * inst.col_val - bb, exponent) - _penalty(a - bb, exponent)
    return np.bincount(cols, weights=diff, minlength=inst.n)


def refresh(inst, s):
    """Recompute every cache of ``s`` in place from its assignment."""
    x = s.x
    act = inst.activities(x)
    s.act[:] = act
    s.scal[0] = float(inst.c @ x)
    s.nbad[0] = int(np.count_nonzero(act > inst.b + s.eps))
    s.nbad[1] = int(np.count_nonzero(act > inst.b))
    s.scal[1] = float(_penalty(act - inst.b, s.exponent).sum()) if s.nbad[1] else 0.0
    s.pen_delta[:] = pen_deltas(inst, x, act, s.exponent)
    s.flips[0] = 0
    return s


def init_state(inst, x0, params, tol=None):
    eps = FEAS_EPS if tol is None else (tol.eps if isinstance(tol, FeasTolerance) else float(tol))
    x = _as_binary(inst, x0)
    s = ChainState(x.copy(), np.zeros(inst.m), np.zeros(inst.n), 0.0, 0.0, 0,
                   params.lam, params.exponent, eps)
    return refresh(inst, s)


def _check_exponent(s, params):
    if params.exponent != s.exponent:
        raise IlpValueError(
            f"state built for exponent {s.exponent}, params use {params.exponent}")


def flip_deltas(inst, s, params):
    """``E(x with j flipped) - E(x)`` for every j, from the caches."""
    _check_exponent(s, params)
    sign = 1.0 - 2.0 * s.x
    return inst.c * sign + params.lam * s.pen_delta


def check_flip_set(inst, J):
    J = np.asarray(J, dtype=np.int64).reshape(-1)
    if J.size:
        if J.min() < 0 or J.max() >= inst.n:
            raise IndexOutOfRange(f"flip index outside [0, {inst.n})")
        if np.unique(J).size != J.size:
            raise DuplicateIndex("flip set has repeated indices")
    return J


def apply_flips(inst, s, J, params=None):
    """Return a new state equal to ``s`` with the bits in ``J`` toggled."""
    if params is not None:
        _check_exponent(s, params)
    J = check_flip_set(inst, J)
    out = s.copy()
    if params is not None:
        out.lam = params.lam
    if J.size:
        _backend.kernels.flip_inplace(_backend.arrays(inst), out, J)
        if out.flips[0] >= REFRESH_EVERY:
            refresh(inst, out)
    return out
