"""Scalar codebooks mapping feature values to a fixed integer alphabet.

A :class:`TransformCodebook` holds ``L`` strictly increasing reconstruction
values. The forward map sends each value to the index of its nearest center
(lower index on ties); the inverse map is a table lookup.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    FormatError,
    LevelMismatchError,
    ParamError,
)
from .features import FeatureTensor

MIN_LEVELS = 2
MAX_LEVELS = 65_536
DEFAULT_LEVELS = 256
# share of mass clipped at each end by the uniform baseline
DEFAULT_TRUNCATE_PCT = 0.001

MODES = ("lloyd-max", "equal-freq", "uniform")
_MODE_CODE = {m: i for i, m in enumerate(MODES)}

DTCB_MAGIC = b"DTCB"
DTCB_VERSION = 1
_DTCB_HEAD = struct.Struct("<4sBBIQ")


def check_levels(levels: int) -> int:
    if isinstance(levels, bool) or int(levels) != levels:
        raise ParamError(f"levels must be an integer, got {levels!r}")
    levels = int(levels)
    if not MIN_LEVELS <= levels <= MAX_LEVELS:
        raise ParamError(f"levels must lie in [{MIN_LEVELS}, {MAX_LEVELS}], got {levels}")
    return levels


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParamError("seed must be a 64-bit unsigned integer")
    return seed


class TransformCodebook:
    """Sorted reconstruction values plus the fit metadata that produced them."""

    __slots__ = ("centers", "mode", "fit_seed", "source_tag", "_boundaries")

    def __init__(
        self,
        centers: Sequence[float] | np.ndarray,
        mode: str = "lloyd-max",
        fit_seed: int = 0,
        source_tag: str = "",
    ):
        c = np.array(centers, dtype=np.float64).reshape(-1)
        check_levels(c.size)
        if mode not in MODES:
            raise ParamError(f"unknown mode {mode!r}")
        if not np.isfinite(c).all():
            raise ParamError("codebook centers must be finite")
        if not (np.diff(c) > 0).all():
            raise ParamError("codebook centers must be strictly increasing")
        c.flags.writeable = False
        self.centers = c
        self.mode = mode
        self.fit_seed = check_seed(fit_seed)
        self.source_tag = source_tag
        self._boundaries: np.ndarray | None = None

    @property
    def levels(self) -> int:
        return self.centers.size

    @property
    def boundaries(self) -> np.ndarray:
        """Midpoints between neighbouring centers (``L - 1`` values)."""
        if self._boundaries is None:
            b = 0.5 * (self.centers[:-1] + self.centers[1:])
            b.flags.writeable = False
            self._boundaries = b
        return self._boundaries

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransformCodebook):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.fit_seed == other.fit_seed
            and self.centers.tobytes() == other.centers.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.mode, self.fit_seed, self.centers.tobytes()))

    def __repr__(self) -> str:
        return (
            f"TransformCodebook(levels={self.levels}, mode={self.mode!r}, "
            f"fit_seed={self.fit_seed}, source_tag={self.source_tag!r})"
        )


class SymbolPlane:
    """Integer symbols in ``[0, levels)`` laid out with a tensor's shape."""

    __slots__ = ("shape", "symbols", "levels")

    def __init__(self, shape: Sequence[int], symbols: Any, levels: int):
        shape = tuple(int(d) for d in shape)
        if not shape or any(d < 0 for d in shape):
            raise ParamError(f"invalid plane shape {shape}")
        levels = check_levels(levels)
        sym = np.ascontiguousarray(np.asarray(symbols).reshape(-1))
        if sym.size and not np.issubdtype(sym.dtype, np.integer):
            raise ParamError("symbols must be integers")
        sym = sym.astype(np.int64, copy=False)
        if sym.size != math.prod(shape):
            raise ParamError(f"shape {shape} needs {math.prod(shape)} symbols, got {sym.size}")
        if sym.size and (sym.min() < 0 or sym.max() >= levels):
            raise ParamError(f"symbols must lie in [0, {levels - 1}]")
        sym.flags.writeable = False
        self.shape = shape
        self.symbols = sym
        self.levels = levels

    @property
    def size(self) -> int:
        return self.symbols.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymbolPlane):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.levels == other.levels
            and np.array_equal(self.symbols, other.symbols)
        )

    def __repr__(self) -> str:
        return f"SymbolPlane(shape={self.shape}, levels={self.levels})"


@dataclass(frozen=True)
class FitReport:
    iterations: int
    distortion_trace: tuple[float, ...]
    final_distortion: float
    reseed_events: int = 0
    restart: int = 0
    # per-restart reports; only populated on the report returned by a fit
    all_restarts: tuple["FitReport", ...] = field(default=(), repr=False)


# -- forward / inverse ------------------------------------------------------------


def nearest_center(values: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each value, lower index on ties.

    Binary search over the midpoints gives the answer up to rounding of the
    midpoint itself; a local fix-up against the exact distances makes the
    result identical to a full argmin scan.
    """
    x = np.asarray(values, dtype=np.float64)
    c = centers
    if c.size == 1:
        return np.zeros(x.shape, dtype=np.int64)
    b = 0.5 * (c[:-1] + c[1:])
    k = np.searchsorted(b, x, side="left").astype(np.int64)
    last = c.size - 1
    while True:
        down = k > 0
        km = np.maximum(k - 1, 0)
        down &= np.abs(x - c[km]) <= np.abs(x - c[k])
        up = k < last
        kp = np.minimum(k + 1, last)
        up &= np.abs(x - c[kp]) < np.abs(x - c[k])
        if not (down.any() or up.any()):
            return k
        k = k - down + up


def forward_transform(data: FeatureTensor, cb: TransformCodebook) -> SymbolPlane:
    symbols = nearest_center(data.values, cb.centers)
    return SymbolPlane(data.shape, symbols, cb.levels)


def inverse_transform(plane: SymbolPlane, cb: TransformCodebook) -> FeatureTensor:
    if plane.levels != cb.levels:
        raise LevelMismatchError(f"plane has {plane.levels} levels, codebook {cb.levels}")
    if plane.size == 0:
        raise ParamError("cannot build a feature tensor from an empty plane")
    return FeatureTensor(plane.shape, cb.centers[plane.symbols], cb.source_tag)


def transform_distortion(data: FeatureTensor, cb: TransformCodebook) -> float:
    """Mean squared transformation distortion, per element."""
    x = data.values.astype(np.float64)
    err = x - cb.centers[nearest_center(x, cb.centers)]
    return float(np.mean(err * err))


def mse(a: FeatureTensor, b: FeatureTensor) -> float:
    if a.shape != b.shape:
        raise ParamError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.mean(d * d))


# -- helpers shared by the fitters --------------------------------------------------


def to_f32_grid(centers: np.ndarray) -> np.ndarray:
    """Round centers to float32 so reconstructions are exactly representable."""
    return np.asarray(centers, dtype=np.float64).astype(np.float32).astype(np.float64)


def distinct_count(x: np.ndarray) -> int:
    if x.size == 0:
        return 0
    s = np.sort(x)
    return int(1 + np.count_nonzero(s[1:] != s[:-1]))


def _check_fit_input(data: FeatureTensor, levels: int) -> tuple[np.ndarray, int]:
    levels = check_levels(levels)
    x = np.sort(data.values.astype(np.float64))
    if distinct_count(x) < levels:
        raise DegenerateInputError(
            f"data has {distinct_count(x)} distinct values, fewer than levels={levels}"
        )
    return x, levels


def _region_stats(xs: np.ndarray, sym: np.ndarray, levels: int):
    """Counts and means of each region, for sorted data with sorted symbols."""
    counts = np.bincount(sym, minlength=levels)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    means = np.full(levels, np.nan)
    nz = counts > 0
    if nz.any():
        # shift by the region's first value so constant regions come out exact
        base = xs[starts[nz]]
        dev = xs - np.repeat(base, counts[nz])
        means[nz] = base + np.add.reduceat(dev, starts[nz]) / counts[nz]
    return counts, starts, means


# -- equal-frequency and uniform fits ------------------------------------------------


def _quantile_partition(xs: np.ndarray, levels: int) -> tuple[np.ndarray, np.ndarray]:
    # boundaries at the j/L quantiles; a value equal to a boundary goes below it
    q = np.quantile(xs, np.arange(1, levels) / levels)
    return q, np.searchsorted(q, xs, side="left")


def equal_frequency_counts(data: FeatureTensor, levels: int) -> np.ndarray:
    """Sample count of each quantile region used by ``fit_equal_frequency``.

    These are the fit-time regions. The fitted codebook's own nearest-center
    regions differ, because region means are not centered between quantiles.
    """
    xs, levels = _check_fit_input(data, levels)
    return np.bincount(_quantile_partition(xs, levels)[1], minlength=levels)


def fit_equal_frequency(data: FeatureTensor, levels: int = DEFAULT_LEVELS) -> TransformCodebook:
    """Histogram-equalizing codebook: quantile regions, region-mean centers."""
    xs, levels = _check_fit_input(data, levels)
    q, sym = _quantile_partition(xs, levels)
    counts, starts, means = _region_stats(xs, sym, levels)
    centers = means.copy()

    empty = counts == 0
    if empty.any():
        lo = np.concatenate(([xs[0]], q))
        hi = np.concatenate((q, [xs[-1]]))
        centers[empty] = 0.5 * (lo[empty] + hi[empty])
    centers = to_f32_grid(centers)

    if not (np.diff(centers) > 0).all():
        # collapse repair: move every region onto its median, then recheck
        medians = centers.copy()
        nz = ~empty
        mid = starts[nz] + (counts[nz] - 1) // 2
        medians[nz] = xs[mid]
        dup = np.zeros(levels, dtype=bool)
        dup[1:] |= np.diff(centers) <= 0
        dup[:-1] |= np.diff(centers) <= 0
        centers = to_f32_grid(np.where(dup, medians, centers))
        if not (np.diff(centers) > 0).all():
            raise DegenerateInputError("equal-frequency regions collapse onto tied values")
    return TransformCodebook(centers, "equal-freq", 0, data.source_tag)


def fit_uniform(
    data: FeatureTensor, levels: int = DEFAULT_LEVELS, truncate_pct: float = 0.0
) -> TransformCodebook:
    """Uniform grid over the (optionally truncated) value range."""
    levels = check_levels(levels)
    if not 0.0 <= truncate_pct < 0.5:
        raise ParamError("truncate_pct must lie in [0, 0.5)")
    x = data.values.astype(np.float64)
    lo, hi = np.quantile(x, [truncate_pct, 1.0 - truncate_pct])
    if not hi > lo:
        raise DegenerateInputError("value range is empty after truncation")
    step = (hi - lo) / levels
    centers = to_f32_grid(lo + (np.arange(levels) + 0.5) * step)
    if not (np.diff(centers) > 0).all():
        raise DegenerateInputError("range too narrow for this many float32 levels")
    return TransformCodebook(centers, "uniform", 0, data.source_tag)


# -- DTCB serialization ----------------------------------------------------------


def serialize_codebook(cb: TransformCodebook) -> bytes:
    head = _DTCB_HEAD.pack(DTCB_MAGIC, DTCB_VERSION, _MODE_CODE[cb.mode], cb.levels, cb.fit_seed)
    body = head + cb.centers.astype("<f8").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_codebook(data: bytes, source_tag: str = "") -> TransformCodebook:
    data = bytes(data)
    if len(data) < _DTCB_HEAD.size + 4:
        raise FormatError("codebook stream truncated")
    magic, version, mode, levels, seed = _DTCB_HEAD.unpack_from(data)
    if magic != DTCB_MAGIC:
        raise FormatError("bad codebook magic")
    if version != DTCB_VERSION:
        raise FormatError(f"unsupported codebook version {version}")
    if mode >= len(MODES):
        raise FormatError(f"unknown codebook mode {mode}")
    if not MIN_LEVELS <= levels <= MAX_LEVELS:
        raise FormatError(f"codebook level count {levels} out of range")
    end = _DTCB_HEAD.size + 8 * levels
    if len(data) != end + 4:
        raise FormatError(f"codebook stream is {len(data)} bytes, expected {end + 4}")
    (crc,) = struct.unpack_from("<I", data, end)
    if crc != zlib.crc32(data[:end]):
        raise FormatError("codebook CRC mismatch")
    centers = np.frombuffer(data, dtype="<f8", count=levels, offset=_DTCB_HEAD.size)
    if not np.isfinite(centers).all() or not (np.diff(centers) > 0).all():
        raise FormatError("codebook centers must be finite and strictly increasing")
    return TransformCodebook(centers, MODES[mode], seed, source_tag)


def fit(
    data: FeatureTensor,
    mode: str = "lloyd-max",
    levels: int = DEFAULT_LEVELS,
    seed: int = 0,
    *,
    restarts: int = 10,
    tol: float = 1e-6,
    max_iters: int = 200,
    truncate_pct: float = DEFAULT_TRUNCATE_PCT,
) -> tuple[TransformCodebook, FitReport | None]:
    """Dispatch to one of the three fitters; only Lloyd-Max yields a report."""
    if mode == "lloyd-max":
        from .lloyd import fit_lloyd_max

        return fit_lloyd_max(data, levels, seed, restarts, tol, max_iters)
    if mode == "equal-freq":
        return fit_equal_frequency(data, levels), None
    if mode == "uniform":
        return fit_uniform(data, levels, truncate_pct), None
    raise ParamError(f"unknown mode {mode!r}")
