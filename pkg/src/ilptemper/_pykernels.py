"""Pure numpy implementation of the hot kernels.

Used when the compiled extension is unavailable or when
``ILPTEMPER_BACKEND=python`` is set.  Follows the compiled kernels step for
step and consumes the same uniforms, so trajectories coincide up to
floating-point summation order.
"""

import math

import numpy as np

KIND_MLBP = 0
KIND_RWM = 1


def _pen(r, exponent):
    r = np.maximum(r, 0.0)
    return r if exponent == 1 else r * r


def _ranges(ptr, keys):
    lo = ptr[keys]
    hi = ptr[keys + 1]
    lens = hi - lo
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(lo - np.concatenate(([0], np.cumsum(lens)[:-1])), lens)
    return starts + np.arange(total, dtype=np.int64)


def _flip(arrs, x, act, pd, obj, viol, nbad, J, exponent, eps):
    """Return updated copies (x, act, pd, obj, viol, nbad) with J toggled.

    ``nbad`` is the pair (rows beyond eps, rows strictly violated).
    """
    c, b, row_ptr, row_col, row_val, col_ptr, col_row, col_val = arrs
    x = x.copy()
    act = act.copy()
    pd = pd.copy()
    ce = _ranges(col_ptr, J)
    R = np.unique(col_row[ce])
    re = _ranges(row_ptr, R)
    er = np.repeat(R, row_ptr[R + 1] - row_ptr[R])
    ei = row_col[re]
    ea = row_val[re]

    old_act = act[R]
    s_old = 1.0 - 2.0 * x[ei]
    a_old = act[er]
    contrib_old = _pen(a_old + s_old * ea - b[er], exponent) - _pen(a_old - b[er], exponent)

    sJ = 1.0 - 2.0 * x[J]
    obj = obj + float(np.sum(c[J] * sJ))
    jcols = np.repeat(J, col_ptr[J + 1] - col_ptr[J])
    np.add.at(act, col_row[ce], (1.0 - 2.0 * x[jcols]) * col_val[ce])
    x[J] ^= 1

    new_act = act[R]
    viol = viol + float(np.sum(_pen(new_act - b[R], exponent) - _pen(old_act - b[R], exponent)))
    nbad = (nbad[0] + int(np.count_nonzero(new_act > b[R] + eps))
            - int(np.count_nonzero(old_act > b[R] + eps)),
            nbad[1] + int(np.count_nonzero(new_act > b[R]))
            - int(np.count_nonzero(old_act > b[R])))
    if nbad[1] == 0:
        viol = 0.0

    s_new = 1.0 - 2.0 * x[ei]
    a_new = act[er]
    contrib_new = _pen(a_new + s_new * ea - b[er], exponent) - _pen(a_new - b[er], exponent)
    np.add.at(pd, ei, contrib_new - contrib_old)
    return x, act, pd, obj, viol, nbad


def flip_inplace(arrs, s, J):
    J = np.asarray(J, dtype=np.int64)
    x, act, pd, obj, viol, nbad = _flip(arrs, s.x, s.act, s.pen_delta, s.scal[0],
                                        s.scal[1], tuple(s.nbad), J, s.exponent, s.eps)
    s.x[:] = x
    s.act[:] = act
    s.pen_delta[:] = pd
    s.scal[0] = obj
    s.scal[1] = viol
    s.nbad[:] = nbad
    s.flips[0] += J.size


def prepare(arrs):
    return tuple(arrs)


def full_refresh(arrs, s):
    c, b, row_ptr, row_col, row_val, col_ptr, col_row, col_val = arrs
    m = b.size
    n = c.size
    xf = s.x.astype(np.float64)
    er = np.repeat(np.arange(m), np.diff(row_ptr))
    act = np.bincount(er, weights=row_val * xf[row_col], minlength=m)
    cols = np.repeat(np.arange(n), np.diff(col_ptr))
    sg = 1.0 - 2.0 * xf[cols]
    a = act[col_row]
    bb = b[col_row]
    diff = _pen(a + sg * col_val - bb, s.exponent) - _pen(a - bb, s.exponent)
    s.act[:] = act
    s.pen_delta[:] = np.bincount(cols, weights=diff, minlength=n)
    s.scal[0] = float(c @ xf)
    s.nbad[0] = int(np.count_nonzero(act > b + s.eps))
    s.nbad[1] = int(np.count_nonzero(act > b))
    s.scal[1] = float(_pen(act - b, s.exponent).sum()) if s.nbad[1] else 0.0
    s.flips[0] = 0


def log_weights(c, x, pd, lam, tau):
    return -(c * (1.0 - 2.0 * x) + lam * pd) / (2.0 * tau)


def logsumexp(lw):
    mx = float(np.max(lw))
    return mx + math.log(float(np.sum(np.exp(lw - mx))))


def draw_without_replacement(lw, L, us):
    """Sequential inverse-CDF draws; ``us`` holds L uniforms in [0, 1)."""
    w = np.exp(lw - np.max(lw))
    picked = []
    for r in range(L):
        if picked:
            w[picked[-1]] = 0.0
        cum = np.cumsum(w)
        total = cum[-1]
        j = int(np.searchsorted(cum, us[r] * total, side="right"))
        if total <= 0.0 or j >= w.size:
            # underflow or roundoff past the end: fall back to the last positive atom,
            # else the largest remaining log-weight
            pos = np.flatnonzero(w > 0.0)
            if pos.size:
                j = int(pos[-1])
            else:
                rest = lw.copy()
                rest[picked] = -np.inf
                j = int(np.argmax(rest))
        picked.append(j)
    return np.array(picked, dtype=np.int64)


def run_chain(arrs, s, uniforms, t0, K, log_tau0, log_gamma, reheat_period,
              kind, L, joint, refresh_every, energies, ev_step, ev_obj,
              best_x, best):
    """Advance ``s`` by K steps in place.

    ``best`` is a length-2 float array ``[has_best, best_obj]``.  Returns
    ``(n_accepted, n_events)``; events are strict improvements of this chain's
    best feasible objective, written to ``ev_step``/``ev_obj``.
    """
    c, b = arrs[0], arrs[1]
    n = c.size
    lam = s.lam
    exponent = s.exponent
    eps = s.eps
    width = L + 1 if kind == KIND_MLBP else 2
    accepted = 0
    nev = 0
    x, act, pd = s.x.copy(), s.act.copy(), s.pen_delta.copy()
    obj, viol, nbad = float(s.scal[0]), float(s.scal[1]), tuple(s.nbad)
    flips = int(s.flips[0])
    for i in range(K):
        t = t0 + i
        te = t % reheat_period if reheat_period > 0 else t
        tau = math.exp(log_tau0 + te * log_gamma)
        u = uniforms[i * width:(i + 1) * width]
        if kind == KIND_MLBP:
            lw_x = log_weights(c, x, pd, lam, tau)
            lse_x = logsumexp(lw_x)
            J = draw_without_replacement(lw_x, L, u)
            ny = _flip(arrs, x, act, pd, obj, viol, nbad, J, exponent, eps)
            lw_y = log_weights(c, ny[0], ny[2], lam, tau)
            lse_y = logsumexp(lw_y)
            if joint:
                e_term = ((obj + lam * viol) - (ny[3] + lam * ny[4])) / tau
            else:
                e_term = float(np.sum(2.0 * lw_x[J]))
            log_r = e_term + float(np.sum(lw_y[J] - lse_y)) - float(np.sum(lw_x[J] - lse_x))
            if u[L] < math.exp(min(0.0, log_r)):
                x, act, pd, obj, viol, nbad = ny
                accepted += 1
                flips += L
        else:
            j = min(int(u[0] * n), n - 1)
            delta = c[j] * (1.0 - 2.0 * x[j]) + lam * pd[j]
            if u[1] < math.exp(min(0.0, -delta / tau)):
                x, act, pd, obj, viol, nbad = _flip(
                    arrs, x, act, pd, obj, viol, nbad,
                    np.array([j], dtype=np.int64), exponent, eps)
                accepted += 1
                flips += 1
        if flips >= refresh_every:
            s.x[:] = x
            full_refresh(arrs, s)
            act, pd = s.act.copy(), s.pen_delta.copy()
            obj, viol, nbad = float(s.scal[0]), float(s.scal[1]), tuple(s.nbad)
            flips = 0
        energies[i] = obj + lam * viol
        if nbad[0] == 0 and (best[0] == 0.0 or obj < best[1]):
            best[0] = 1.0
            best[1] = obj
            best_x[:] = x
            ev_step[nev] = t
            ev_obj[nev] = obj
            nev += 1
    s.x[:] = x
    s.act[:] = act
    s.pen_delta[:] = pd
    s.scal[0] = obj
    s.scal[1] = viol
    s.nbad[:] = nbad
    s.flips[0] = flips
    return accepted, nev
