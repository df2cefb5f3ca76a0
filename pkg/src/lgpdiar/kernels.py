"""Hot inner loops, each in a numba and a numpy flavour.

The public names (``loo_log_scores``, ``ar1_filter``, ``nearest_centroid``)
dispatch on :data:`lgpdiar._accel.USE_NUMBA`. The ``*_numba`` and
``*_numpy`` variants are importable directly so tests and benchmarks can
compare them.
"""

import math

import numpy as np
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

__all__ = [
    "loo_log_scores",
    "loo_log_scores_numba",
    "loo_log_scores_numpy",
    "loo_sweep",
    "loo_sweep_numba",
    "loo_sweep_numpy",
    "ar1_filter",
    "ar1_filter_numba",
    "ar1_filter_numpy",
    "nearest_centroid",
    "nearest_centroid_numba",
    "nearest_centroid_numpy",
]

_LOG_2PI = math.log(2.0 * math.pi)

# rows per vectorised block in the numpy LOO path (bounds N*K*D temporaries)
_LOO_CHUNK_ELEMS = 1 << 21


@njit(cache=True)
def loo_log_scores_numba(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    n_seg, dim = Z.shape
    n_spk = counts.shape[0]
    out = np.empty((n_seg, n_spk))
    for n in range(n_seg):
        for i in range(n_spk):
            if not active[i]:
                out[n, i] = -np.inf
                continue
            g = gamma[n, i]
            c = counts[i] - g
            if c > 0.0:
                x = c * scale
                a = ((1.0 - r) * x + 2.0 * r) / (1.0 + r)
                if x < a:
                    a = x
                ratio = a / c
            else:
                a = 0.0
                ratio = 0.0
            acc = 0.0
            for d in range(dim):
                p = psi[d]
                denom = p * a + 1.0
                mean = p * ratio * (sums[i, d] - g * Z[n, d]) / denom
                var = 1.0 + p / denom
                diff = Z[n, d] - mean
                acc += math.log(var) + diff * diff / var
            out[n, i] = log_w[i] - 0.5 * (acc + dim * _LOG_2PI)
    return out


def loo_log_scores_numpy(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    n_seg, dim = Z.shape
    n_spk = counts.shape[0]
    out = np.full((n_seg, n_spk), -np.inf)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return out
    step = max(1, _LOO_CHUNK_ELEMS // max(1, idx.size * dim))
    S = sums[idx]
    lw = log_w[idx]
    for lo in range(0, n_seg, step):
        z = Z[lo:lo + step]
        g = gamma[lo:lo + step][:, idx]
        c = counts[idx][None, :] - g
        pos = c > 0.0
        x = np.where(pos, c, 0.0) * scale
        a = np.minimum(x, ((1.0 - r) * x + 2.0 * r) / (1.0 + r))
        a = np.where(pos, a, 0.0)
        ratio = np.divide(a, c, out=np.zeros_like(a), where=pos)
        denom = psi[None, None, :] * a[:, :, None] + 1.0
        loo_sum = S[None, :, :] - g[:, :, None] * z[:, None, :]
        mean = psi * ratio[:, :, None] * loo_sum / denom
        var = 1.0 + psi / denom
        diff = z[:, None, :] - mean
        acc = np.sum(np.log(var) + diff * diff / var, axis=2)
        out[lo:lo + step, idx] = lw[None, :] - 0.5 * (acc + dim * _LOG_2PI)
    return out


@njit(cache=True)
def loo_sweep_numba(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    """Sequential LOO pass: statistics absorb each new row before the next.

    ``gamma``, ``counts`` and ``sums`` are updated in place.
    """
    n_seg, dim = Z.shape
    n_spk = counts.shape[0]
    row = np.empty(n_spk)
    for n in range(n_seg):
        best = -np.inf
        for i in range(n_spk):
            if not active[i]:
                row[i] = -np.inf
                continue
            g = gamma[n, i]
            c = counts[i] - g
            if c > 0.0:
                x = c * scale
                a = ((1.0 - r) * x + 2.0 * r) / (1.0 + r)
                if x < a:
                    a = x
                ratio = a / c
            else:
                a = 0.0
                ratio = 0.0
            acc = 0.0
            for d in range(dim):
                p = psi[d]
                denom = p * a + 1.0
                mean = p * ratio * (sums[i, d] - g * Z[n, d]) / denom
                var = 1.0 + p / denom
                diff = Z[n, d] - mean
                acc += math.log(var) + diff * diff / var
            row[i] = log_w[i] - 0.5 * (acc + dim * _LOG_2PI)
            if row[i] > best:
                best = row[i]
        total = 0.0
        for i in range(n_spk):
            if active[i]:
                row[i] = math.exp(row[i] - best)
                total += row[i]
            else:
                row[i] = 0.0
        for i in range(n_spk):
            new = row[i] / total
            delta = new - gamma[n, i]
            if delta != 0.0:
                counts[i] += delta
                for d in range(dim):
                    sums[i, d] += delta * Z[n, d]
            gamma[n, i] = new
    return gamma


def loo_sweep_numpy(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    for n in range(Z.shape[0]):
        scores = loo_log_scores_numpy(Z[n:n + 1], gamma[n:n + 1], counts, sums, psi,
                                      log_w, active, r, scale)[0]
        new = np.zeros_like(scores)
        s = scores[active]
        p = np.exp(s - s.max())
        new[active] = p / p.sum()
        delta = new - gamma[n]
        counts += delta
        sums += delta[:, None] * Z[n][None, :]
        gamma[n] = new
    return gamma


@njit(cache=True)
def ar1_filter_numba(e, r):
    out = np.empty_like(e)
    if e.shape[0] == 0:
        return out
    innov = math.sqrt(1.0 - r * r)
    out[0] = e[0]
    for t in range(1, e.shape[0]):
        for d in range(e.shape[1]):
            out[t, d] = r * out[t - 1, d] + innov * e[t, d]
    return out


def ar1_filter_numpy(e, r):
    if e.shape[0] == 0:
        return np.empty_like(e)
    innov = math.sqrt(1.0 - r * r)
    # zi chosen so that out[0] == e[0] (stationary start)
    zi = ((1.0 - innov) * e[0])[None, :]
    out = lfilter([innov], [1.0, -r], e, axis=0, zi=zi)[0]
    out[0] = e[0]
    return out


@njit(cache=True)
def nearest_centroid_numba(X, C):
    n, dim = X.shape
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(k):
            acc = 0.0
            for d in range(dim):
                t = X[i, d] - C[j, d]
                acc += t * t
            if acc < best:
                best = acc
                arg = j
        labels[i] = arg
        dist[i] = best
    return labels, dist


def nearest_centroid_numpy(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(X.shape[0]), labels]


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def loo_log_scores(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    """Leave-one-out log(w_i) + log predictive for every (segment, speaker).

    Inactive speakers get ``-inf``. All inputs live in the diagonalised
    space (within-class covariance is the identity).
    """
    fn = loo_log_scores_numba if USE_NUMBA else loo_log_scores_numpy
    return fn(_contig(Z), _contig(gamma), _contig(counts), _contig(sums),
              _contig(psi), _contig(log_w), np.ascontiguousarray(active, dtype=np.bool_),
              float(r), float(scale))


def loo_sweep(Z, gamma, counts, sums, psi, log_w, active, r, scale):
    """In-place sequential LOO update of ``gamma`` (rows in index order)."""
    fn = loo_sweep_numba if USE_NUMBA else loo_sweep_numpy
    return fn(_contig(Z), gamma, counts, sums, _contig(psi), _contig(log_w),
              np.ascontiguousarray(active, dtype=np.bool_), float(r), float(scale))


def ar1_filter(e, r):
    fn = ar1_filter_numba if USE_NUMBA else ar1_filter_numpy
    return fn(_contig(e), float(r))


def nearest_centroid(X, C):
    fn = nearest_centroid_numba if USE_NUMBA else nearest_centroid_numpy
    return fn(_contig(X), _contig(C))
