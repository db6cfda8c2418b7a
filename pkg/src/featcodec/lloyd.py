"""Lloyd-Max codebook fitting on pooled scalar feature values.

The data is sorted once. With sorted data and sorted centers, nearest-center
assignment is a single merge walk and every region is a contiguous run, so an
iteration costs O(n + L) inside the compiled kernels.

Plain Lloyd iteration stalls in local minima on small or clumpy inputs. Each
restart therefore polishes its converged codebook with two move types, each
followed by more Lloyd iterations and kept only when the distortion drops:

* transfer: hand one boundary sample to the neighbouring region when that
  lowers the squared error once both means shift (Hartigan's criterion);
* split-merge: merge the cheapest adjacent pair of regions and split the
  region with the largest two-way gain.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DegenerateInputError, ParamError
from .features import FeatureTensor
from .transform import (
    DEFAULT_LEVELS,
    FitReport,
    TransformCodebook,
    _check_fit_input,
    check_seed,
    nearest_center,
    to_f32_grid,
)

DEFAULT_RESTARTS = 10
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 200
# a polish move must cut distortion by at least this relative amount
MIN_MOVE_GAIN = 1e-12


@njit(cache=True)
def _assign(xs, c, sym):
    # xs sorted ascending, c strictly increasing; returns the squared-error sum
    L = c.size
    k = 0
    sse = 0.0
    for i in range(xs.size):
        x = xs[i]
        while k + 1 < L and abs(x - c[k + 1]) < abs(x - c[k]):
            k += 1
        sym[i] = k
        d = x - c[k]
        sse += d * d
    return sse


@njit(cache=True)
def _first_empty(sym, counts):
    counts[:] = 0
    for i in range(sym.size):
        counts[sym[i]] += 1
    for k in range(counts.size):
        if counts[k] == 0:
            return k
    return -1


@njit(cache=True)
def _reseed(xs, c, sym, empty):
    """Move center ``empty`` onto the worst-served sample; False if none exists."""
    best = 0.0
    bi = -1
    for i in range(xs.size):
        r = xs[i] - c[sym[i]]
        r = r * r
        if r > best:
            best = r
            bi = i
    if bi < 0:
        return False
    v = xs[bi]
    out = np.empty(c.size, np.float64)
    j = 0
    placed = False
    for k in range(c.size):
        if k == empty:
            continue
        if not placed and v < c[k]:
            out[j] = v
            j += 1
            placed = True
        out[j] = c[k]
        j += 1
    if not placed:
        out[j] = v
    c[:] = out
    return True


@njit(cache=True)
def _mean_f32(xs, a, b):
    base = xs[a]
    acc = 0.0
    for j in range(a, b):
        acc += xs[j] - base
    return np.float64(np.float32(base + acc / (b - a)))


@njit(cache=True)
def _update(xs, sym, c):
    # region means rounded to float32; regions are contiguous in sorted data
    n = xs.size
    i = 0
    while i < n:
        j = i
        while j < n and sym[j] == sym[i]:
            j += 1
        c[sym[i]] = _mean_f32(xs, i, j)
        i = j


@njit(cache=True)
def _lloyd(xs, c, tol, max_iters, trace):
    n = xs.size
    L = c.size
    sym = np.empty(n, np.int64)
    counts = np.zeros(L, np.int64)
    d = _assign(xs, c, sym) / n
    trace[0] = d
    nt = 1
    reseeds = 0
    it = 0
    while it < max_iters:
        guard = 0
        e = _first_empty(sym, counts)
        while e >= 0 and guard < 4 * L:
            if not _reseed(xs, c, sym, e):
                break
            reseeds += 1
            guard += 1
            d = _assign(xs, c, sym) / n
            e = _first_empty(sym, counts)
        _update(xs, sym, c)
        d_new = _assign(xs, c, sym) / n
        it += 1
        trace[nt] = d_new
        nt += 1
        converged = abs(d - d_new) <= tol * max(d, 1e-30)
        d = d_new
        if converged:
            break
    return it, reseeds, nt


@njit(cache=True)
def _seg_sse(p1, p2, a, b):
    if b - a < 2:
        return 0.0
    s = p1[b] - p1[a]
    v = p2[b] - p2[a] - s * s / (b - a)
    return v if v > 0.0 else 0.0


@njit(cache=True)
def _means_of(xs, st, c):
    out = c.copy()
    for k in range(c.size):
        if st[k + 1] > st[k]:
            out[k] = _mean_f32(xs, st[k], st[k + 1])
    return out


@njit(cache=True)
def _moves(xs, c, p1, p2):
    """Candidate centers from the best transfer and the best split-merge.

    Returns an array of shape (2, L) and a flag per row telling whether the
    row holds a candidate with a positive predicted gain.
    """
    n = xs.size
    L = c.size
    sym = np.empty(n, np.int64)
    _assign(xs, c, sym)
    st = np.zeros(L + 1, np.int64)
    for i in range(n):
        st[sym[i] + 1] += 1
    for k in range(L):
        st[k + 1] += st[k]
    out = np.empty((2, L), np.float64)
    ok = np.zeros(2, np.bool_)

    # transfer
    best_d = 0.0
    best_k = -1
    best_dir = 0
    for k in range(L - 1):
        na = st[k + 1] - st[k]
        nb = st[k + 2] - st[k + 1]
        if na == 0 or nb == 0:
            continue
        ma = (p1[st[k + 1]] - p1[st[k]]) / na
        mb = (p1[st[k + 2]] - p1[st[k + 1]]) / nb
        if na > 1:
            x = p1[st[k + 1]] - p1[st[k + 1] - 1]
            dd = nb / (nb + 1.0) * (x - mb) ** 2 - na / (na - 1.0) * (x - ma) ** 2
            if dd < best_d:
                best_d, best_k, best_dir = dd, k, 1
        if nb > 1:
            x = p1[st[k + 1] + 1] - p1[st[k + 1]]
            dd = na / (na + 1.0) * (x - ma) ** 2 - nb / (nb - 1.0) * (x - mb) ** 2
            if dd < best_d:
                best_d, best_k, best_dir = dd, k, -1
    if best_k >= 0:
        st2 = st.copy()
        st2[best_k + 1] -= best_dir
        out[0] = _means_of(xs, st2, c)
        ok[0] = True

    # split-merge: best split per region, then pair it with the cheapest merge
    gain = np.zeros(L)
    cut = np.full(L, -1, np.int64)
    for k in range(L):
        a = st[k]
        b = st[k + 1]
        whole = _seg_sse(p1, p2, a, b)
        for t in range(a + 1, b):
            if xs[t] == xs[t - 1]:
                continue
            g = whole - _seg_sse(p1, p2, a, t) - _seg_sse(p1, p2, t, b)
            if g > gain[k]:
                gain[k] = g
                cut[k] = t
    # the three largest split gains; a merge touches two regions, so one of
    # these is always the best split outside the merged pair
    top = np.full(3, -1, np.int64)
    for k in range(L):
        g = gain[k]
        for r in range(3):
            if top[r] < 0 or g > gain[top[r]]:
                for q in range(2, r, -1):
                    top[q] = top[q - 1]
                top[r] = k
                break
    best_net = 0.0
    bm = -1
    bs = -1
    for m in range(L - 1):
        cost = (
            _seg_sse(p1, p2, st[m], st[m + 2])
            - _seg_sse(p1, p2, st[m], st[m + 1])
            - _seg_sse(p1, p2, st[m + 1], st[m + 2])
        )
        for s in top:
            if s < 0 or s == m or s == m + 1 or cut[s] < 0:
                continue
            net = gain[s] - cost
            if net > best_net:
                best_net, bm, bs = net, m, s
            break
    if bm >= 0:
        # drop the boundary inside the merged pair, add the split point
        extra = np.array([cut[bs]], np.int64)
        st2 = np.sort(np.concatenate((st[: bm + 1], st[bm + 2 :], extra)))
        out[1] = _means_of(xs, st2, c)
        ok[1] = True
    return out, ok


@njit(cache=True)
def _capture(xs, d2, j, v):
    """Bounds and error reduction of the samples a new center ``v`` would win.

    In one dimension the samples closer to ``v`` than to every chosen center
    form a contiguous run around ``xs[j]``.
    """
    n = xs.size
    g = 0.0
    lo = j
    while lo >= 0:
        e = (xs[lo] - v) ** 2
        if not e < d2[lo]:
            break
        g += d2[lo] - e
        lo -= 1
    hi = j + 1
    while hi < n:
        e = (xs[hi] - v) ** 2
        if not e < d2[hi]:
            break
        g += d2[hi] - e
        hi += 1
    return lo + 1, hi, g


@njit(cache=True)
def _greedy_kpp(xs, levels, trials, u):
    """Greedy k-means++ seeding driven by the pre-drawn uniforms ``u``."""
    n = xs.size
    chosen = np.empty(levels, np.float64)
    chosen[0] = xs[min(int(u[0] * n), n - 1)]
    d2 = np.empty(n, np.float64)
    for i in range(n):
        d2[i] = (xs[i] - chosen[0]) ** 2
    cum = np.empty(n, np.float64)
    got = 1
    p = 1
    while got < levels:
        acc = 0.0
        for i in range(n):
            acc += d2[i]
            cum[i] = acc
        if acc <= 0.0:
            break
        # the trial removing the most squared error wins; ties keep the first
        best_g = -1.0
        best_j = 0
        for _ in range(trials):
            j = np.searchsorted(cum, u[p] * acc, side="right")
            p += 1
            if j >= n:
                j = n - 1
            _, _, g = _capture(xs, d2, j, xs[j])
            if g > best_g:
                best_g = g
                best_j = j
        v = xs[best_j]
        chosen[got] = v
        got += 1
        a, b, _ = _capture(xs, d2, best_j, v)
        for i in range(a, b):
            d2[i] = (xs[i] - v) ** 2
    return chosen[:got]


def _fill_distinct(xs: np.ndarray, centers: np.ndarray, levels: int) -> np.ndarray:
    """Deduplicate centers and top up with farthest samples until ``levels`` remain."""
    c = np.unique(to_f32_grid(centers))
    while c.size < levels:
        err = xs - c[nearest_center(xs, c)]
        i = int(np.argmax(err * err))
        if err[i] == 0:
            raise DegenerateInputError("not enough distinct values to seed all levels")
        c = np.sort(np.append(c, xs[i]))
    return c


def initial_centers(xs: np.ndarray, levels: int) -> np.ndarray:
    """Equal-frequency quantile midpoints of the sorted data."""
    q = np.quantile(xs, (np.arange(levels) + 0.5) / levels)
    return _fill_distinct(xs, q, levels)


def kpp_centers(xs: np.ndarray, levels: int, rng: np.random.Generator) -> np.ndarray:
    trials = 2 + int(math.log(levels))
    u = rng.random(1 + (levels - 1) * trials)
    return _fill_distinct(xs, _greedy_kpp(xs, levels, trials, u), levels)


def _run_restart(xs, p1, p2, c0, tol, max_iters, restart) -> tuple[np.ndarray, FitReport]:
    c = np.array(c0, dtype=np.float64)
    buf = np.empty(max_iters + 1, dtype=np.float64)
    used, reseeds, nt = _lloyd(xs, c, tol, max_iters, buf)
    trace = list(buf[:nt])
    d = trace[-1]
    while used < max_iters and d > 0:
        cands, ok = _moves(xs, c, p1, p2)
        accepted = False
        for row in range(2):
            if not ok[row] or used >= max_iters:
                continue
            cand = cands[row].copy()
            if not (np.diff(cand) > 0).all():
                continue
            it, rs, nt = _lloyd(xs, cand, tol, max_iters - used, buf)
            used += it
            tr = buf[:nt]
            if tr[-1] < d * (1.0 - MIN_MOVE_GAIN) and tr.max() <= d:
                c, d = cand, float(tr[-1])
                trace.extend(tr)
                reseeds += rs
                accepted = True
                break
        if not accepted:
            break
    trace_t = tuple(float(v) for v in trace)
    return c, FitReport(int(used), trace_t, trace_t[-1], int(reseeds), restart)


def fit_lloyd_max(
    data: FeatureTensor,
    levels: int = DEFAULT_LEVELS,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[TransformCodebook, FitReport]:
    """Fit a Lloyd-Max codebook, keeping the best of several restarts.

    Restart 0 starts from equal-frequency quantile centers; later restarts
    use greedy k-means++ seeding drawn from a generator keyed on
    ``(seed, restart)``. Each restart alternates nearest-center assignment
    and region-mean update until the relative change in distortion drops to
    ``tol``, repairs empty regions by re-seeding at the worst-served sample,
    then polishes (see module docstring). ``max_iters`` caps the Lloyd
    iterations a restart may spend, polishing included.

    Returns:
        The lowest-distortion codebook and its report. ``report.all_restarts``
        holds the report of every restart in order.
    """
    seed = check_seed(seed)
    if int(restarts) < 1:
        raise ParamError("restarts must be >= 1")
    if not tol > 0:
        raise ParamError("tol must be > 0")
    if int(max_iters) < 1:
        raise ParamError("max_iters must be >= 1")
    xs, levels = _check_fit_input(data, levels)
    # centered prefix sums; only differences x - mean enter the move gains
    y = xs - xs.mean()
    p1 = np.concatenate(([0.0], np.cumsum(y)))
    p2 = np.concatenate(([0.0], np.cumsum(y * y)))

    reports = []
    best_c, best_rep = None, None
    for r in range(int(restarts)):
        if r == 0:
            c0 = initial_centers(xs, levels)
        else:
            c0 = kpp_centers(xs, levels, np.random.default_rng([seed, r]))
        c, rep = _run_restart(xs, p1, p2, c0, float(tol), int(max_iters), r)
        reports.append(rep)
        if best_rep is None or rep.final_distortion < best_rep.final_distortion:
            best_c, best_rep = c, rep

    best = FitReport(
        best_rep.iterations,
        best_rep.distortion_trace,
        best_rep.final_distortion,
        best_rep.reseed_events,
        best_rep.restart,
        tuple(reports),
    )
    return TransformCodebook(best_c, "lloyd-max", seed, data.source_tag), best
