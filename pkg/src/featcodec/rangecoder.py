"""Integer range coder with an adaptive order-0 frequency model.

The coder keeps a 32-bit ``range`` of at least 2**24 after every
renormalization and a 33-bit ``low`` whose carry is propagated through a
cached byte plus a run of pending 0xFF bytes, as in the LZMA range coder.
All arithmetic is on integers, so output is identical on every platform.

The model covers ``levels + 1`` symbols. The extra symbol (index ``levels``)
is a terminator coded once after the data; it never gains counts.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TOP = 1 << 24
MASK32 = 0xFFFFFFFF
BASE_RESCALE_THRESHOLD = 1 << 16
COUNT_INCREMENT = 8

STATUS_OK = 0
STATUS_BAD_SYMBOL = 1
STATUS_OVERRUN = 2
STATUS_NO_TERMINATOR = 3
STATUS_TRAILING = 4


def rescale_threshold(levels: int) -> int:
    """Total-count ceiling for a model over ``levels`` data symbols.

    Halving with a floor of one only shrinks the total below the ceiling if
    the alphabet (plus terminator) is at most half of it, so very large
    alphabets get a larger power-of-two ceiling.
    """
    symbols = levels + 1
    t = BASE_RESCALE_THRESHOLD
    while symbols > t // 2:
        t <<= 1
    return t


# -- adaptive model (Fenwick tree over counts) -----------------------------------


@njit(cache=True)
def _fw_build(counts, tree):
    m = counts.size
    tree[:] = 0
    for i in range(1, m + 1):
        tree[i] += counts[i - 1]
        j = i + (i & -i)
        if j <= m:
            tree[j] += tree[i]


@njit(cache=True)
def _fw_prefix(tree, i):
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True)
def _fw_add(tree, i, delta):
    m = tree.size - 1
    i += 1
    while i <= m:
        tree[i] += delta
        i += i & -i


@njit(cache=True)
def _fw_find(tree, target, top_bit):
    # largest s with prefix(s) <= target; returns (s, prefix(s))
    m = tree.size - 1
    pos = 0
    acc = 0
    step = top_bit
    while step > 0:
        nxt = pos + step
        if nxt <= m and acc + tree[nxt] <= target:
            pos = nxt
            acc += tree[nxt]
        step >>= 1
    return pos, acc


@njit(cache=True)
def _model_update(counts, tree, total, s, inc, threshold):
    counts[s] += inc
    _fw_add(tree, s, inc)
    total += inc
    if total > threshold:
        total = 0
        for k in range(counts.size):
            c = counts[k] >> 1
            if c < 1:
                c = 1
            counts[k] = c
            total += c
        _fw_build(counts, tree)
    return total


def _top_bit(m: int) -> int:
    return 1 << (m.bit_length() - 1)


class AdaptiveModel:
    """Order-0 adaptive frequency model over ``levels`` symbols plus a terminator.

    Counts start at 1 and grow by a fixed increment per coded symbol; when
    the total passes the rescale threshold every count is halved (floor 1).
    The coding kernels run the same update schedule on raw arrays.
    """

    def __init__(self, levels: int, increment: int = COUNT_INCREMENT):
        self.levels = int(levels)
        self.increment = int(increment)
        self.rescale_threshold = rescale_threshold(self.levels)
        self.counts = np.ones(self.levels + 1, dtype=np.int64)
        self.tree = np.zeros(self.levels + 2, dtype=np.int64)
        _fw_build(self.counts, self.tree)
        self.total = int(self.counts.sum())

    def cumulative(self, s: int) -> int:
        return int(_fw_prefix(self.tree, s))

    def find(self, target: int) -> int:
        s, _ = _fw_find(self.tree, target, _top_bit(self.levels + 1))
        return int(s)

    def update(self, s: int) -> None:
        self.total = int(
            _model_update(
                self.counts, self.tree, self.total, s, self.increment, self.rescale_threshold
            )
        )


# -- coder kernels --------------------------------------------------------------


@njit(cache=True)
def _shift_low(low, cache, cache_size, out, pos):
    if low < 0xFF000000 or low > MASK32:
        carry = low >> 32
        temp = cache
        while True:
            out[pos] = (temp + carry) & 0xFF
            pos += 1
            temp = 0xFF
            cache_size -= 1
            if cache_size == 0:
                break
        cache = (low >> 24) & 0xFF
    cache_size += 1
    low = (low & 0x00FFFFFF) << 8
    return low, cache, cache_size, pos


@njit(cache=True)
def encode_symbols(symbols, levels, inc, threshold):
    m = levels + 1
    counts = np.ones(m, np.int64)
    tree = np.zeros(m + 1, np.int64)
    _fw_build(counts, tree)
    total = m
    out = np.empty(4 * symbols.size + 16, np.uint8)
    pos = 0
    low = 0
    rng = MASK32
    cache = 0
    cache_size = 1
    for i in range(symbols.size + 1):
        s = symbols[i] if i < symbols.size else levels
        cum = _fw_prefix(tree, s)
        r = rng // total
        low += r * cum
        rng = r * counts[s]
        while rng < TOP:
            rng <<= 8
            low, cache, cache_size, pos = _shift_low(low, cache, cache_size, out, pos)
        if i < symbols.size:
            total = _model_update(counts, tree, total, s, inc, threshold)
    for _ in range(5):
        low, cache, cache_size, pos = _shift_low(low, cache, cache_size, out, pos)
    return out[:pos]


@njit(cache=True)
def decode_symbols(payload, n, levels, inc, threshold, top_bit):
    m = levels + 1
    counts = np.ones(m, np.int64)
    tree = np.zeros(m + 1, np.int64)
    _fw_build(counts, tree)
    total = m
    out = np.empty(n, np.int64)
    size = payload.size
    pos = 0
    overrun = False
    code = 0
    rng = MASK32
    for _ in range(5):
        b = 0
        if pos < size:
            b = payload[pos]
        else:
            overrun = True
        pos += 1
        code = ((code << 8) | b) & MASK32
    for i in range(n + 1):
        r = rng // total
        v = code // r
        if v >= total:
            return out, STATUS_BAD_SYMBOL
        s, cum = _fw_find(tree, v, top_bit)
        code -= r * cum
        rng = r * counts[s]
        while rng < TOP:
            rng <<= 8
            b = 0
            if pos < size:
                b = payload[pos]
            else:
                overrun = True
            pos += 1
            code = ((code << 8) | b) & MASK32
        if i < n:
            if s == levels:
                return out, STATUS_BAD_SYMBOL
            out[i] = s
            total = _model_update(counts, tree, total, s, inc, threshold)
        elif s != levels:
            return out, STATUS_NO_TERMINATOR
    if overrun:
        return out, STATUS_OVERRUN
    if pos != size:
        return out, STATUS_TRAILING
    return out, STATUS_OK
