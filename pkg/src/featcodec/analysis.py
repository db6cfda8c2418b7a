"""Distribution diagnostics: histograms, CDFs, entropy, KL divergence and
interval widths, plus CSV/SVG report writers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    EdgeMismatchError,
    EmptyHistogramError,
    ParamError,
    StoreIOError,
    TooFewLevelsError,
)
from .features import FeatureTensor
from .transform import SymbolPlane, TransformCodebook

DEFAULT_BINS = 256
DEFAULT_EPSILON = 1e-10
RANGE_PAD = 1e-9


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise ParamError("histogram needs len(edges) == len(counts) + 1")
        if counts.size < 1:
            raise ParamError("histogram needs at least one bin")
        if not (np.diff(edges) > 0).all():
            raise ParamError("histogram edges must be strictly increasing")
        if (counts < 0).any():
            raise ParamError("histogram counts must be non-negative")
        edges.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bins(self) -> int:
        return int(self.counts.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Histogram):
            return NotImplemented
        return np.array_equal(self.edges, other.edges) and np.array_equal(
            self.counts, other.counts
        )


@dataclass(frozen=True)
class AlignmentMatrix:
    labels: tuple[str, ...]
    kl: np.ndarray


def _values(data: FeatureTensor | np.ndarray) -> np.ndarray:
    if isinstance(data, FeatureTensor):
        return data.values.astype(np.float64)
    return np.asarray(data, dtype=np.float64).reshape(-1)


def histogram(
    data: FeatureTensor | np.ndarray,
    bins: int = DEFAULT_BINS,
    range: tuple[float, float] | None = None,  # noqa: A002 - mirrors numpy
) -> Histogram:
    """Equal-width histogram; bins are half-open except the last.

    Without ``range`` the data's span is widened by a relative 1e-9 on each
    side, so the extreme values sit strictly inside the outer bins.
    """
    if int(bins) < 2:
        raise ParamError("bins must be >= 2")
    x = _values(data)
    if range is None:
        if x.size == 0:
            raise DegenerateInputError("cannot infer a range from empty data")
        lo, hi = float(x.min()), float(x.max())
        if lo == hi:
            raise DegenerateInputError("all values are equal; pass an explicit range")
        pad = RANGE_PAD * max(abs(lo), abs(hi), hi - lo)
        lo, hi = lo - pad, hi + pad
    else:
        lo, hi = float(range[0]), float(range[1])
        if not lo < hi:
            raise ParamError(f"histogram range needs lo < hi, got [{lo}, {hi}]")
    counts, edges = np.histogram(x, bins=int(bins), range=(lo, hi))
    return Histogram(edges, counts)


def symbol_histogram(plane: SymbolPlane) -> Histogram:
    """One bin per symbol, with edges at half-integers."""
    counts = np.bincount(plane.symbols, minlength=plane.levels)
    edges = np.arange(plane.levels + 1, dtype=np.float64) - 0.5
    return Histogram(edges, counts)


def shared_range(tensors: Sequence[FeatureTensor]) -> tuple[float, float]:
    """Union of the per-tensor value ranges, widened like ``histogram``."""
    lo = min(float(t.values.min()) for t in tensors)
    hi = max(float(t.values.max()) for t in tensors)
    if lo == hi:
        raise DegenerateInputError("all values are equal across sources")
    pad = RANGE_PAD * max(abs(lo), abs(hi), hi - lo)
    return lo - pad, hi + pad


def shared_histograms(
    tensors: Sequence[FeatureTensor], bins: int = DEFAULT_BINS
) -> list[Histogram]:
    rng = shared_range(tensors)
    return [histogram(t, bins, rng) for t in tensors]


def _require_mass(hist: Histogram) -> int:
    total = hist.total
    if total <= 0:
        raise EmptyHistogramError("histogram has no counts")
    return total


def empirical_cdf(hist: Histogram) -> np.ndarray:
    total = _require_mass(hist)
    return np.cumsum(hist.counts) / total


def shannon_entropy(hist: Histogram) -> float:
    """Entropy of the bin frequencies in bits."""
    total = _require_mass(hist)
    c = hist.counts[hist.counts > 0].astype(np.float64)
    p = c / total
    h = float(-(p * np.log2(p)).sum())
    return max(h, 0.0)


def kl_divergence(p: Histogram, q: Histogram, epsilon: float = DEFAULT_EPSILON) -> float:
    """D(p || q) in nats after additive smoothing of both histograms.

    ``epsilon`` is added to every bin count before renormalizing, which keeps
    the divergence finite when ``q`` has empty bins that ``p`` occupies.
    """
    if not epsilon > 0:
        raise ParamError("epsilon must be > 0")
    if not np.array_equal(p.edges, q.edges):
        raise EdgeMismatchError("histograms do not share edges")
    _require_mass(p)
    _require_mass(q)
    ps = p.counts + epsilon
    qs = q.counts + epsilon
    ps = ps / ps.sum()
    qs = qs / qs.sum()
    d = float(np.sum(ps * (np.log(ps) - np.log(qs))))
    return max(d, 0.0)


def interval_width_report(cb: TransformCodebook) -> tuple[list[tuple[int, float, float]], float]:
    """Widths of the bounded (interior) regions of a codebook.

    Returns:
        Rows ``(region, width, log10 width)`` for regions 1 .. L-2, and the
        mean interior width.
    """
    if cb.levels < 3:
        raise TooFewLevelsError(f"need at least 3 levels for interior regions, got {cb.levels}")
    w = np.diff(cb.boundaries)
    rows = [(k + 1, float(v), math.log10(v)) for k, v in enumerate(w)]
    return rows, float(w.mean())


def alignment_matrix(
    sources: Sequence[tuple[str, Histogram]], epsilon: float = DEFAULT_EPSILON
) -> AlignmentMatrix:
    if len(sources) < 2:
        raise ParamError("alignment matrix needs at least 2 sources")
    labels = tuple(tag for tag, _ in sources)
    hists = [h for _, h in sources]
    m = len(hists)
    kl = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                kl[i, j] = kl_divergence(hists[i], hists[j], epsilon)
    kl.flags.writeable = False
    return AlignmentMatrix(labels, kl)


# -- reports ----------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _open_for_write(path: str | Path):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise StoreIOError(f"cannot write {path}: {e}") from e


def write_histogram_csv(hist: Histogram, path: str | Path) -> None:
    cdf = empirical_cdf(hist) if hist.total else np.zeros(hist.bins)
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin", "lo", "hi", "count", "cdf"])
        for b in range(hist.bins):
            w.writerow(
                [b, _fmt(hist.edges[b]), _fmt(hist.edges[b + 1]), int(hist.counts[b]), _fmt(cdf[b])]
            )


def write_widths_csv(rows: Sequence[tuple[int, float, float]], path: str | Path) -> None:
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["region", "width", "log10_width"])
        for k, width, lw in rows:
            w.writerow([k, _fmt(width), _fmt(lw)])


def write_matrix_csv(mat: AlignmentMatrix, path: str | Path) -> None:
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["p", "q", "kl"])
        for i, a in enumerate(mat.labels):
            for j, b in enumerate(mat.labels):
                w.writerow([a, b, _fmt(mat.kl[i, j])])


def histogram_svg(hist: Histogram, title: str = "", width: int = 640, height: int = 320) -> str:
    """Bars on a log-scaled frequency axis with the empirical CDF overlaid."""
    pad = 40
    pw, ph = width - 2 * pad, height - 2 * pad
    top = math.log10(max(int(hist.counts.max()), 1) + 1)
    bw = pw / hist.bins
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="{pad - 12}" font-size="12" font-family="sans-serif">'
        f"{_xml(title)}</text>",
        f'<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for b, c in enumerate(hist.counts):
        if c <= 0:
            continue
        h = ph * math.log10(int(c) + 1) / top
        parts.append(
            f'<rect x="{pad + b * bw:.3f}" y="{pad + ph - h:.3f}" '
            f'width="{bw:.3f}" height="{h:.3f}" fill="steelblue"/>'
        )
    if hist.total:
        cdf = empirical_cdf(hist)
        pts = " ".join(
            f"{pad + (b + 1) * bw:.3f},{pad + ph * (1 - v):.3f}" for b, v in enumerate(cdf)
        )
        parts.append(f'<polyline points="{pad:.3f},{pad + ph:.3f} {pts}" '
                     'fill="none" stroke="red" stroke-width="1.5"/>')
    parts.append(
        f'<text x="{pad}" y="{height - 12}" font-size="10" font-family="sans-serif">'
        f"{_fmt(hist.edges[0])} .. {_fmt(hist.edges[-1])} (log-scaled frequency)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_histogram_svg(hist: Histogram, path: str | Path, title: str = "") -> None:
    with _open_for_write(path) as f:
        f.write(histogram_svg(hist, title))


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
