# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: incremental flips and the per-chain MCMC loop.

Mirrors ``_pykernels`` exactly in the order uniforms are consumed.  The
step loop runs without the GIL.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

ctypedef cnp.int64_t i64
ctypedef cnp.int8_t i8

cdef enum:
    KIND_MLBP = 0
    KIND_RWM = 1


cdef struct Mat:
    i64 n
    i64 m
    const double* c
    const double* b
    const i64* row_ptr
    const i64* row_col
    const double* row_val
    const i64* col_ptr
    const i64* col_row
    const double* col_val


cdef struct State:
    i8* x
    double* act
    double* pd
    double obj
    double viol
    i64 nbad
    i64 npos
    i64 flips
    double lam
    int p
    double eps


cdef struct Work:
    i64* rowmark
    i64* varmark
    i64 stamp
    i64* R
    i64 nR
    double* sav_act
    i64* V
    i64 nV
    double* sav_pd
    double sav_obj
    double sav_viol
    i64 sav_nbad
    i64 sav_npos


cdef inline double pen(double r, int p) noexcept nogil:
    if r <= 0.0:
        return 0.0
    if p == 1:
        return r
    return r * r


cdef class _Arrays:
    """Keeps the buffers behind the raw pointers alive."""
    cdef const double[::1] c, b, row_val, col_val
    cdef const i64[::1] row_ptr, row_col, col_ptr, col_row
    cdef Mat mat

    def __init__(self, arrs):
        c, b, row_ptr, row_col, row_val, col_ptr, col_row, col_val = arrs
        # pad empties so that &v[0] is always valid
        self.c = _pad(c, np.float64)
        self.b = _pad(b, np.float64)
        self.row_ptr = _pad(row_ptr, np.int64)
        self.row_col = _pad(row_col, np.int64)
        self.row_val = _pad(row_val, np.float64)
        self.col_ptr = _pad(col_ptr, np.int64)
        self.col_row = _pad(col_row, np.int64)
        self.col_val = _pad(col_val, np.float64)
        self.mat.n = len(c)
        self.mat.m = len(b)
        self.mat.c = &self.c[0]
        self.mat.b = &self.b[0]
        self.mat.row_ptr = &self.row_ptr[0]
        self.mat.row_col = &self.row_col[0]
        self.mat.row_val = &self.row_val[0]
        self.mat.col_ptr = &self.col_ptr[0]
        self.mat.col_row = &self.col_row[0]
        self.mat.col_val = &self.col_val[0]


def _pad(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    if a.size == 0:
        return np.zeros(1, dtype=dtype)
    return a


cdef class _Scratch:
    cdef i64[::1] rowmark, varmark, R, V, J
    cdef double[::1] sav_act, sav_pd, lw, w, tmp
    cdef Work work

    def __init__(self, i64 n, i64 m):
        m = max(m, 1)
        self.rowmark = np.full(m, -1, dtype=np.int64)
        self.varmark = np.full(n, -1, dtype=np.int64)
        self.R = np.empty(m, dtype=np.int64)
        self.V = np.empty(n, dtype=np.int64)
        self.J = np.empty(n, dtype=np.int64)
        self.sav_act = np.empty(m, dtype=np.float64)
        self.sav_pd = np.empty(n, dtype=np.float64)
        self.lw = np.empty(n, dtype=np.float64)
        self.w = np.empty(n, dtype=np.float64)
        self.tmp = np.empty(2 * n + 1, dtype=np.float64)
        self.work.rowmark = &self.rowmark[0]
        self.work.varmark = &self.varmark[0]
        self.work.stamp = 0
        self.work.R = &self.R[0]
        self.work.V = &self.V[0]
        self.work.sav_act = &self.sav_act[0]
        self.work.sav_pd = &self.sav_pd[0]


cdef void flip_set(Mat* A, State* S, Work* W, const i64* J, i64 nJ, bint save) noexcept nogil:
    cdef i64 q, j, e, k, r, i
    cdef double a, bk, base, sg
    cdef int p = S.p
    W.stamp += 1
    cdef i64 st = W.stamp
    W.nR = 0
    W.nV = 0
    if save:
        W.sav_obj = S.obj
        W.sav_viol = S.viol
        W.sav_nbad = S.nbad
        W.sav_npos = S.npos
    for q in range(nJ):
        j = J[q]
        for e in range(A.col_ptr[j], A.col_ptr[j + 1]):
            k = A.col_row[e]
            if W.rowmark[k] != st:
                W.rowmark[k] = st
                W.R[W.nR] = k
                W.nR += 1
    # retract contributions of the affected rows at the old activities
    for r in range(W.nR):
        k = W.R[r]
        a = S.act[k]
        bk = A.b[k]
        base = pen(a - bk, p)
        if save:
            W.sav_act[r] = a
        S.viol -= base
        if a > bk + S.eps:
            S.nbad -= 1
        if a > bk:
            S.npos -= 1
        for e in range(A.row_ptr[k], A.row_ptr[k + 1]):
            i = A.row_col[e]
            if save and W.varmark[i] != st:
                W.varmark[i] = st
                W.V[W.nV] = i
                W.sav_pd[W.nV] = S.pd[i]
                W.nV += 1
            sg = 1.0 - 2.0 * S.x[i]
            S.pd[i] -= pen(a + sg * A.row_val[e] - bk, p) - base
    for q in range(nJ):
        j = J[q]
        sg = 1.0 - 2.0 * S.x[j]
        S.obj += A.c[j] * sg
        for e in range(A.col_ptr[j], A.col_ptr[j + 1]):
            S.act[A.col_row[e]] += sg * A.col_val[e]
        S.x[j] = 1 - S.x[j]
    for r in range(W.nR):
        k = W.R[r]
        a = S.act[k]
        bk = A.b[k]
        base = pen(a - bk, p)
        S.viol += base
        if a > bk + S.eps:
            S.nbad += 1
        if a > bk:
            S.npos += 1
        for e in range(A.row_ptr[k], A.row_ptr[k + 1]):
            i = A.row_col[e]
            sg = 1.0 - 2.0 * S.x[i]
            S.pd[i] += pen(a + sg * A.row_val[e] - bk, p) - base
    if S.npos == 0:
        S.viol = 0.0
    S.flips += nJ


cdef void undo_flips(State* S, Work* W, const i64* J, i64 nJ) noexcept nogil:
    cdef i64 r, q
    for r in range(W.nR):
        S.act[W.R[r]] = W.sav_act[r]
    for r in range(W.nV):
        S.pd[W.V[r]] = W.sav_pd[r]
    for q in range(nJ):
        S.x[J[q]] = 1 - S.x[J[q]]
    S.obj = W.sav_obj
    S.viol = W.sav_viol
    S.nbad = W.sav_nbad
    S.npos = W.sav_npos
    S.flips -= nJ


cdef void refresh(Mat* A, State* S) noexcept nogil:
    cdef i64 k, e, j
    cdef double a, bk, base, sg, acc
    cdef int p = S.p
    S.obj = 0.0
    for j in range(A.n):
        if S.x[j]:
            S.obj += A.c[j]
    S.viol = 0.0
    S.nbad = 0
    S.npos = 0
    for k in range(A.m):
        acc = 0.0
        for e in range(A.row_ptr[k], A.row_ptr[k + 1]):
            acc += A.row_val[e] * S.x[A.row_col[e]]
        S.act[k] = acc
        bk = A.b[k]
        S.viol += pen(acc - bk, p)
        if acc > bk + S.eps:
            S.nbad += 1
        if acc > bk:
            S.npos += 1
    if S.npos == 0:
        S.viol = 0.0
    for j in range(A.n):
        acc = 0.0
        sg = 1.0 - 2.0 * S.x[j]
        for e in range(A.col_ptr[j], A.col_ptr[j + 1]):
            k = A.col_row[e]
            a = S.act[k]
            bk = A.b[k]
            acc += pen(a + sg * A.col_val[e] - bk, p) - pen(a - bk, p)
        S.pd[j] = acc
    S.flips = 0


cdef double log_weights(Mat* A, State* S, double tau, double* lw, double* w,
                        double* mx_out) noexcept nogil:
    """Fill lw with -delta/(2 tau) and w with exp(lw - max); return log-sum-exp."""
    cdef i64 j
    cdef double mx = -INFINITY, tot = 0.0, scale = -0.5 / tau
    for j in range(A.n):
        lw[j] = (A.c[j] * (1.0 - 2.0 * S.x[j]) + S.lam * S.pd[j]) * scale
        if lw[j] > mx:
            mx = lw[j]
    for j in range(A.n):
        w[j] = exp(lw[j] - mx)
        tot += w[j]
    mx_out[0] = mx
    return mx + log(tot)


cdef void draw(i64 n, const double* lw, double* w, const double* u, int L, i64* J) noexcept nogil:
    """Sequential inverse-CDF draws without replacement; w holds exp weights
    on entry and has the picked atoms zeroed on exit."""
    cdef i64 j, r, q, pick
    cdef double total, target, acc, best
    cdef bint taken
    for r in range(L):
        if r > 0:
            w[J[r - 1]] = 0.0
        total = 0.0
        for j in range(n):
            total += w[j]
        target = u[r] * total
        pick = -1
        acc = 0.0
        for j in range(n):
            acc += w[j]
            if acc > target:
                pick = j
                break
        if total <= 0.0 or pick < 0:
            # underflow or roundoff past the end
            pick = -1
            for j in range(n - 1, -1, -1):
                if w[j] > 0.0:
                    pick = j
                    break
            if pick < 0:
                best = -INFINITY
                for j in range(n):
                    taken = False
                    for q in range(r):
                        if J[q] == j:
                            taken = True
                            break
                    if not taken and (pick < 0 or lw[j] > best):
                        best = lw[j]
                        pick = j
        J[r] = pick


cdef inline double flip_logw(Mat* A, State* S, i64 j, double scale) noexcept nogil:
    return (A.c[j] * (1.0 - 2.0 * S.x[j]) + S.lam * S.pd[j]) * scale


cdef bint mlbp_step(Mat* A, State* S, Work* W, double tau, const double* u, int L,
                    bint joint, double* lw, double* w, double* tmp, i64* J) noexcept nogil:
    cdef double lse_x, lse_y, e_old, e_term, sum_x = 0.0, sum_y = 0.0, log_r
    cdef double mx, mxy, rest, tot, ly, scale = -0.5 / tau
    cdef i64 q, r, i, j, st
    lse_x = log_weights(A, S, tau, lw, w, &mx)
    draw(A.n, lw, w, u, L, J)
    e_term = 0.0
    for q in range(L):
        e_term += 2.0 * lw[J[q]]
        sum_x += lw[J[q]] - lse_x
    e_old = S.obj + S.lam * S.viol
    flip_set(A, S, W, J, L, True)

    # Only variables sharing a row with J (the saved set V) and J itself change
    # weight; the rest of the reverse normalizer reuses the forward weights.
    st = W.stamp
    mxy = mx
    for r in range(W.nV):
        ly = flip_logw(A, S, W.V[r], scale)
        tmp[r] = ly
        if ly > mxy:
            mxy = ly
    for q in range(L):
        j = J[q]
        ly = flip_logw(A, S, j, scale)
        sum_y += ly
        if W.varmark[j] != st:
            # empty column: its weight changes through the objective only
            W.varmark[j] = st
            tmp[W.nV + q] = ly
            if ly > mxy:
                mxy = ly
        else:
            tmp[W.nV + q] = -INFINITY
    rest = 0.0
    for i in range(A.n):
        if W.varmark[i] != st:
            rest += w[i]
    tot = rest * exp(mx - mxy)
    for r in range(W.nV + L):
        tot += exp(tmp[r] - mxy)
    lse_y = mxy + log(tot)
    sum_y -= L * lse_y
    if joint:
        e_term = (e_old - (S.obj + S.lam * S.viol)) / tau
    log_r = e_term + sum_y - sum_x
    if u[L] < exp(log_r if log_r < 0.0 else 0.0):
        return True
    undo_flips(S, W, J, L)
    return False


cdef bint rwm_step(Mat* A, State* S, Work* W, double tau, const double* u, i64* J) noexcept nogil:
    cdef i64 j = <i64>(u[0] * A.n)
    cdef double delta, r
    if j > A.n - 1:
        j = A.n - 1
    delta = A.c[j] * (1.0 - 2.0 * S.x[j]) + S.lam * S.pd[j]
    r = -delta / tau
    if u[1] < exp(r if r < 0.0 else 0.0):
        J[0] = j
        flip_set(A, S, W, J, 1, False)
        return True
    return False


cdef inline void load_state(State* S, s, i8[::1] x, double[::1] act, double[::1] pd):
    S.x = &x[0]
    S.act = &act[0] if act.shape[0] > 0 else NULL
    S.pd = &pd[0]
    S.obj = s.scal[0]
    S.viol = s.scal[1]
    S.nbad = s.nbad[0]
    S.npos = s.nbad[1]
    S.flips = s.flips[0]
    S.lam = s.lam
    S.p = s.exponent
    S.eps = s.eps


cdef inline void store_state(State* S, s):
    s.scal[0] = S.obj
    s.scal[1] = S.viol
    s.nbad[0] = S.nbad
    s.nbad[1] = S.npos
    s.flips[0] = S.flips


def flip_inplace(arrs, s, J):
    cdef _Arrays A = arrs if isinstance(arrs, _Arrays) else _Arrays(arrs)
    cdef i64[::1] Jv = np.ascontiguousarray(J, dtype=np.int64)
    cdef _Scratch sc = _Scratch(A.mat.n, A.mat.m)
    cdef State S
    cdef i8[::1] x = s.x
    cdef double[::1] act = s.act
    cdef double[::1] pd = s.pen_delta
    if Jv.shape[0] == 0:
        return
    load_state(&S, s, x, act, pd)
    flip_set(&A.mat, &S, &sc.work, &Jv[0], Jv.shape[0], False)
    store_state(&S, s)


def full_refresh(arrs, s):
    cdef _Arrays A = arrs if isinstance(arrs, _Arrays) else _Arrays(arrs)
    cdef State S
    cdef i8[::1] x = s.x
    cdef double[::1] act = s.act
    cdef double[::1] pd = s.pen_delta
    load_state(&S, s, x, act, pd)
    refresh(&A.mat, &S)
    store_state(&S, s)


def prepare(arrs):
    return _Arrays(arrs)


def run_chain(arrs, s, uniforms, i64 t0, i64 K, double log_tau0, double log_gamma,
              i64 reheat_period, int kind, int L, bint joint, i64 refresh_every,
              double[::1] energies, i64[::1] ev_step, double[::1] ev_obj,
              i8[::1] best_x, double[::1] best):
    cdef _Arrays A = arrs if isinstance(arrs, _Arrays) else _Arrays(arrs)
    cdef _Scratch sc = _Scratch(A.mat.n, A.mat.m)
    cdef const double[::1] uv = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef State S
    cdef i8[::1] x = s.x
    cdef double[::1] act = s.act if s.act.size else np.zeros(1)
    cdef double[::1] pd = s.pen_delta
    cdef i64 i, t, te, width, accepted = 0, nev = 0, j
    cdef double tau
    cdef bint ok
    cdef Mat* M = &A.mat
    cdef Work* W = &sc.work
    width = L + 1 if kind == KIND_MLBP else 2
    if uv.shape[0] < K * width:
        raise ValueError("not enough uniforms")
    if K <= 0:
        return 0, 0
    load_state(&S, s, x, act, pd)
    with nogil:
        for i in range(K):
            t = t0 + i
            te = t % reheat_period if reheat_period > 0 else t
            tau = exp(log_tau0 + te * log_gamma)
            if kind == KIND_MLBP:
                ok = mlbp_step(M, &S, W, tau, &uv[i * width], L, joint,
                               &sc.lw[0], &sc.w[0], &sc.tmp[0], &sc.J[0])
            else:
                ok = rwm_step(M, &S, W, tau, &uv[i * width], &sc.J[0])
            if ok:
                accepted += 1
            if S.flips >= refresh_every:
                refresh(M, &S)
            energies[i] = S.obj + S.lam * S.viol
            if S.nbad == 0 and (best[0] == 0.0 or S.obj < best[1]):
                best[0] = 1.0
                best[1] = S.obj
                for j in range(M.n):
                    best_x[j] = S.x[j]
                ev_step[nev] = t
                ev_obj[nev] = S.obj
                nev += 1
    store_state(&S, s)
    return accepted, nev
