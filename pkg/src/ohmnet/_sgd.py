"""Hot loops for skip-gram training, compiled with numba when available.

The pure-Python definitions below are the reference semantics; numba only
compiles them unchanged, so both execution paths perform the identical
sequence of IEEE double operations.  All randomness (pair order, negative
draws, step sizes) is materialized into arrays by the caller, which keeps
the kernels deterministic and RNG handling in one place.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


def _sigmoid_impl(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


_sigmoid = njit(cache=True)(_sigmoid_impl) if HAVE_NUMBA else _sigmoid_impl


def _count_pairs_impl(offsets, window):
    total = 0
    for w in range(len(offsets) - 1):
        length = offsets[w + 1] - offsets[w]
        for c in range(length):
            lo = c - window if c - window > 0 else 0
            hi = c + window + 1 if c + window + 1 < length else length
            total += hi - lo - 1
    return total


def _extract_pairs_impl(flat, offsets, window):
    total = _count_pairs(offsets, window)
    pairs = np.empty((total, 2), dtype=np.int64)
    t = 0
    for w in range(len(offsets) - 1):
        start = offsets[w]
        length = offsets[w + 1] - start
        for c in range(length):
            lo = c - window if c - window > 0 else 0
            hi = c + window + 1 if c + window + 1 < length else length
            for j in range(lo, hi):
                if j != c:
                    pairs[t, 0] = flat[start + c]
                    pairs[t, 1] = flat[start + j]
                    t += 1
    return pairs


def _sgns_epoch_impl(fin, fout, pairs, negs, alphas, lam, reg_cap, parent_vecs, parent_rows):
    """One pass of pairwise updates over ``pairs`` (row indices into fin/fout).

    Per pair: ascend the negative-sampling surrogate on the center's input
    vector and the context/negative output vectors; when lam > 0 also pull
    the center toward its parent's vector with coefficient
    min(lam * alpha, reg_cap).
    """
    n_pairs = pairs.shape[0]
    d = fin.shape[1]
    n_neg = negs.shape[1]
    work = np.empty(d, dtype=np.float64)
    for t in range(n_pairs):
        u = pairs[t, 0]
        v = pairs[t, 1]
        a = alphas[t]
        for k in range(d):
            work[k] = 0.0
        z = 0.0
        for k in range(d):
            z += fin[u, k] * fout[v, k]
        g = a * _sigmoid(-z)
        for k in range(d):
            work[k] += g * fout[v, k]
            fout[v, k] += g * fin[u, k]
        for j in range(n_neg):
            m = negs[t, j]
            z = 0.0
            for k in range(d):
                z += fin[u, k] * fout[m, k]
            g = -a * _sigmoid(z)
            for k in range(d):
                work[k] += g * fout[m, k]
                fout[m, k] += g * fin[u, k]
        for k in range(d):
            fin[u, k] += work[k]
        if lam > 0.0:
            c = lam * a
            if c > reg_cap:
                c = reg_cap
            pr = parent_rows[u]
            for k in range(d):
                fin[u, k] += c * (parent_vecs[pr, k] - fin[u, k])


def _sgns_epoch_hogwild_impl(fin, fout, pairs, negs, alphas, lam, reg_cap,
                             parent_vecs, parent_rows):
    """Lock-free variant: pair updates race benignly on shared tables, so
    results are not reproducible across runs."""
    n_pairs = pairs.shape[0]
    d = fin.shape[1]
    n_neg = negs.shape[1]
    for t in prange(n_pairs):
        work = np.zeros(d, dtype=np.float64)
        u = pairs[t, 0]
        v = pairs[t, 1]
        a = alphas[t]
        z = 0.0
        for k in range(d):
            z += fin[u, k] * fout[v, k]
        g = a * _sigmoid(-z)
        for k in range(d):
            work[k] += g * fout[v, k]
            fout[v, k] += g * fin[u, k]
        for j in range(n_neg):
            m = negs[t, j]
            z = 0.0
            for k in range(d):
                z += fin[u, k] * fout[m, k]
            g = -a * _sigmoid(z)
            for k in range(d):
                work[k] += g * fout[m, k]
                fout[m, k] += g * fin[u, k]
        for k in range(d):
            fin[u, k] += work[k]
        if lam > 0.0:
            c = lam * a
            if c > reg_cap:
                c = reg_cap
            pr = parent_rows[u]
            for k in range(d):
                fin[u, k] += c * (parent_vecs[pr, k] - fin[u, k])


if HAVE_NUMBA:
    _count_pairs = njit(cache=True)(_count_pairs_impl)
    extract_pairs = njit(cache=True)(_extract_pairs_impl)
    sgns_epoch = njit(cache=True)(_sgns_epoch_impl)
    sgns_epoch_hogwild = njit(cache=True, parallel=True)(_sgns_epoch_hogwild_impl)

    def set_threads(n: int) -> None:
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
else:
    _count_pairs = _count_pairs_impl
    extract_pairs = _extract_pairs_impl
    sgns_epoch = _sgns_epoch_impl
    sgns_epoch_hogwild = _sgns_epoch_hogwild_impl

    def set_threads(n: int) -> None:
        pass
