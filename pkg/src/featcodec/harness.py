"""Rate-distortion experiments: single points, level sweeps and cross-source
matrices, plus CSV/SVG reports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import codec
from .errors import FeatcodecError, ParamError, StoreIOError
from .features import FeatureTensor, pool, sample_fit_indices
from .transform import (
    MODES,
    check_levels,
    check_seed,
    fit,
    forward_transform,
    inverse_transform,
    mse,
)

CSV_COLUMNS = ("mode", "levels", "fit_tag", "eval_tag", "bpfp", "mse", "header_bits_share")
FIT_SET_SIZE = 10


@dataclass(frozen=True)
class RDPoint:
    mode: str
    levels: int
    bpfp: float
    mse: float
    source_tag: str
    eval_tag: str
    header_bits_share: float

    def row(self) -> list[str]:
        return [
            self.mode,
            str(self.levels),
            self.source_tag,
            self.eval_tag,
            format(self.bpfp, ".17g"),
            format(self.mse, ".17g"),
            format(self.header_bits_share, ".17g"),
        ]


@dataclass(frozen=True)
class SweepSpec:
    levels_list: tuple[int, ...]
    fit_mode: str
    fit_source: FeatureTensor
    eval_source: FeatureTensor | None = None
    seed: int = 0
    # passed through to the fitter (restarts, tol, max_iters, truncate_pct)
    fit_options: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        lv = [check_levels(v) for v in self.levels_list]
        if not lv:
            raise ParamError("levels_list must not be empty")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ParamError("levels_list must be strictly increasing")
        if self.fit_mode not in MODES:
            raise ParamError(f"unknown mode {self.fit_mode!r}")
        check_seed(self.seed)


def run_point(
    fit_data: FeatureTensor,
    eval_data: FeatureTensor,
    mode: str,
    levels: int,
    seed: int = 0,
    **fit_options: Any,
) -> RDPoint:
    """Fit on ``fit_data``, then push ``eval_data`` through the full pipeline.

    The decoded symbol plane must equal the forward plane bit for bit before
    the reconstruction error is measured.
    """
    cb, _ = fit(fit_data, mode, levels, seed, **fit_options)
    return _point_with_codebook(cb, fit_data.source_tag, eval_data, mode)


def run_sweep(spec: SweepSpec) -> list[RDPoint]:
    spec.validate()
    eval_data = spec.fit_source if spec.eval_source is None else spec.eval_source
    return [
        run_point(spec.fit_source, eval_data, spec.fit_mode, lv, spec.seed, **spec.fit_options)
        for lv in spec.levels_list
    ]


def split_source(
    source: FeatureTensor | Sequence[FeatureTensor], seed: int = 0, k: int = FIT_SET_SIZE
) -> tuple[FeatureTensor, FeatureTensor]:
    """Fit and evaluation data for one cross-matrix source.

    A single tensor is used for both. For a collection, ``k`` tensors drawn
    without replacement form the fit set and the remainder is held out; with
    ``k`` or fewer tensors everything is pooled for both roles.
    """
    if isinstance(source, FeatureTensor):
        return source, source
    tensors = list(source)
    if not tensors:
        raise ParamError("empty source collection")
    tag = tensors[0].source_tag
    if len(tensors) <= k:
        p = pool(tensors, tag)
        return p, p
    chosen = set(sample_fit_indices(len(tensors), k, seed))
    fit_set = pool([t for i, t in enumerate(tensors) if i in chosen], tag)
    held = pool([t for i, t in enumerate(tensors) if i not in chosen], tag)
    return fit_set, held


def run_cross_matrix(
    sources: Sequence[FeatureTensor | Sequence[FeatureTensor]],
    mode: str,
    levels: int,
    seed: int = 0,
    **fit_options: Any,
) -> list[list[RDPoint]]:
    """``points[i][j]`` fits on source ``i`` and evaluates on source ``j``."""
    if len(sources) < 2:
        raise ParamError("cross matrix needs at least 2 sources")
    splits = [split_source(s, seed) for s in sources]
    books = [fit(f, mode, levels, seed, **fit_options)[0] for f, _ in splits]
    out = []
    for (fit_data, _), cb in zip(splits, books):
        row = []
        for _, eval_data in splits:
            row.append(_point_with_codebook(cb, fit_data.source_tag, eval_data, mode))
        out.append(row)
    return out


def _point_with_codebook(cb, fit_tag: str, eval_data: FeatureTensor, mode: str) -> RDPoint:
    plane = forward_transform(eval_data, cb)
    stream = codec.encode(plane, cb)
    decoded, cb_dec = codec.decode(stream.to_bytes())
    if decoded != plane or cb_dec != cb:
        raise FeatcodecError("codec round trip altered the symbol plane")
    return RDPoint(
        mode=mode,
        levels=cb.levels,
        bpfp=codec.bpfp(stream, eval_data.size),
        mse=mse(eval_data, inverse_transform(decoded, cb_dec)),
        source_tag=fit_tag,
        eval_tag=eval_data.source_tag,
        header_bits_share=stream.header_bits / stream.total_bits,
    )


# -- reports ----------------------------------------------------------------------


def _flatten(points) -> list[RDPoint]:
    flat: list[RDPoint] = []
    for p in points:
        if isinstance(p, RDPoint):
            flat.append(p)
        else:
            flat.extend(_flatten(p))
    return flat


def emit_report(points, path: str | Path, format: str = "csv") -> None:  # noqa: A002
    """Write points (a list or a nested matrix) as CSV or as an SVG RD plot."""
    flat = _flatten(points)
    if not flat:
        raise ParamError("no points to report")
    if format == "csv":
        text = ",".join(CSV_COLUMNS) + "\n" + "".join(",".join(p.row()) + "\n" for p in flat)
    elif format == "svg":
        text = rd_svg(flat)
    else:
        raise ParamError(f"unknown report format {format!r}")
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise StoreIOError(f"cannot write {path}: {e}") from e


def read_csv(path: str | Path) -> list[RDPoint]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        raise StoreIOError(f"cannot read {path}: {e}") from e
    return [
        RDPoint(
            mode=r["mode"],
            levels=int(r["levels"]),
            bpfp=float(r["bpfp"]),
            mse=float(r["mse"]),
            source_tag=r["fit_tag"],
            eval_tag=r["eval_tag"],
            header_bits_share=float(r["header_bits_share"]),
        )
        for r in rows
    ]


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")


def rd_svg(points: Sequence[RDPoint], width: int = 640, height: int = 400) -> str:
    """bpfp on x, mse on y (log10 when every mse is positive), one polyline
    per (mode, fit tag, eval tag)."""
    pad = 50
    pw, ph = width - 2 * pad, height - 2 * pad
    log_y = all(p.mse > 0 for p in points)
    ys = [math.log10(p.mse) if log_y else p.mse for p in points]
    xs = [p.bpfp for p in points]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(v: float) -> float:
        return pad + pw * (v - x0) / (x1 - x0)

    def sy(v: float) -> float:
        return pad + ph * (1.0 - (v - y0) / (y1 - y0))

    groups: dict[tuple[str, str, str], list[tuple[float, float]]] = {}
    for p, y in zip(points, ys):
        groups.setdefault((p.mode, p.source_tag, p.eval_tag), []).append((p.bpfp, y))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{pad + pw / 2:.1f}" y="{height - 12}" font-size="12" '
        f'font-family="sans-serif" text-anchor="middle">bpfp</text>',
        f'<text x="14" y="{pad + ph / 2:.1f}" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 14 {pad + ph / 2:.1f})" text-anchor="middle">'
        f'{"log10 mse" if log_y else "mse"}</text>',
    ]
    for gi, (key, pts) in enumerate(groups.items()):
        color = _PALETTE[gi % len(_PALETTE)]
        pts.sort()
        coords = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.3f}" cy="{sy(y):.3f}" r="2.5" fill="{color}"/>')
        label = " / ".join(_xml(s) for s in key)
        out.append(
            f'<text x="{pad + 8}" y="{pad + 16 + 14 * gi}" font-size="11" '
            f'font-family="sans-serif" fill="{color}">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

