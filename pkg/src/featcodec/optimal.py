"""Exact 1-D k-means by dynamic programming, used as an oracle for small fits."""

from __future__ import annotations

import numpy as np

from .errors import SizeError
from .features import FeatureTensor
from .transform import TransformCodebook, _check_fit_input, to_f32_grid, transform_distortion

MAX_DP_ELEMENTS = 4096
MAX_DP_LEVELS = 64


def optimal_partition(xs: np.ndarray, levels: int) -> np.ndarray:
    """Split points of the optimal contiguous partition of sorted ``xs``.

    Returns ``levels + 1`` indices ``0 = s_0 < s_1 < ... < s_L = n``. Splits
    are only placed between distinct values, so equal values never straddle
    two clusters.
    """
    y = xs - xs.mean()
    p1 = np.concatenate(([0.0], np.cumsum(y)))
    p2 = np.concatenate(([0.0], np.cumsum(y * y)))
    cut = np.concatenate(([True], xs[1:] != xs[:-1], [True]))
    pos = np.flatnonzero(cut)  # admissible segment boundaries

    inf = np.inf
    # best[l][m]: cost of covering xs[:pos[m]] with l + 1 segments
    best = np.full((levels, pos.size), inf)
    back = np.zeros((levels, pos.size), dtype=np.int64)
    seg = pos[1:]
    best[0, 1:] = p2[seg] - p1[seg] ** 2 / seg
    for lvl in range(1, levels):
        prev = best[lvl - 1]
        for m in range(lvl + 1, pos.size):
            i = pos[m]
            j = pos[:m]
            s1 = p1[i] - p1[j]
            cost = prev[:m] + (p2[i] - p2[j]) - s1 * s1 / (i - j)
            a = int(np.argmin(cost))
            best[lvl, m] = cost[a]
            back[lvl, m] = a
    splits = [pos.size - 1]
    for lvl in range(levels - 1, 0, -1):
        splits.append(back[lvl, splits[-1]])
    splits.append(0)
    return pos[np.array(splits[::-1])]


def fit_optimal_dp(data: FeatureTensor, levels: int) -> tuple[TransformCodebook, float]:
    """Globally optimal codebook for small instances, plus its distortion.

    Centers are the segment means rounded to float32, matching the other
    fitters; the distortion is that of the returned codebook.
    """
    if data.size > MAX_DP_ELEMENTS:
        raise SizeError(f"DP oracle handles at most {MAX_DP_ELEMENTS} elements, got {data.size}")
    if levels > MAX_DP_LEVELS:
        raise SizeError(f"DP oracle handles at most {MAX_DP_LEVELS} levels, got {levels}")
    xs, levels = _check_fit_input(data, levels)
    s = optimal_partition(xs, levels)
    centers = np.array(
        [xs[a] + np.mean(xs[a:b] - xs[a]) for a, b in zip(s[:-1], s[1:])], dtype=np.float64
    )
    cb = TransformCodebook(to_f32_grid(centers), "lloyd-max", 0, data.source_tag)
    return cb, transform_distortion(data, cb)
