"""Command-line driver: one subcommand per pipeline stage.

Results go to files and to ``key=value`` lines on stdout; diagnostics go to
stderr. Any library error exits with status 1 and names the error kind.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from . import analysis, codec, harness
from .errors import FeatcodecError, FormatError, ParamError, StoreIOError
from .features import (
    SOURCE_KINDS,
    SyntheticSourceSpec,
    generate,
    load_npy,
    pool,
    sample_fit_set,
    save_npy,
)
from .transform import (
    MODES,
    deserialize_codebook,
    fit,
    forward_transform,
    inverse_transform,
    mse,
    serialize_codebook,
    transform_distortion,
)

log = logging.getLogger("featcodec")


def _emit(**kv: Any) -> None:
    for k, v in kv.items():
        if isinstance(v, float):
            v = format(v, ".17g")
        print(f"{k}={v}")


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise StoreIOError(f"cannot read {path}: {e}") from e


def _write_bytes(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise StoreIOError(f"cannot write {path}: {e}") from e


def _fit_options(args: argparse.Namespace) -> dict[str, Any]:
    opts: dict[str, Any] = {}
    for name in ("restarts", "tol", "max_iters", "truncate_pct"):
        v = getattr(args, name, None)
        if v is not None:
            opts[name] = v
    return opts


# -- subcommands --------------------------------------------------------------------


def cmd_fit(args: argparse.Namespace) -> None:
    tensors = [load_npy(p) for p in args.input]
    if len(tensors) > args.k_fit:
        tensors = sample_fit_set(tensors, args.k_fit, args.seed)
    data = pool(tensors, tensors[0].source_tag)
    log.info("fitting %s, L=%d on %d values", args.mode, args.levels, data.size)
    cb, report = fit(data, args.mode, args.levels, args.seed, **_fit_options(args))
    _write_bytes(args.out, serialize_codebook(cb))
    if report is not None:
        final, iters, restart = report.final_distortion, report.iterations, report.restart
    else:
        final, iters, restart = transform_distortion(data, cb), 0, 0
    _emit(
        mode=cb.mode,
        levels=cb.levels,
        elements=data.size,
        final_distortion=final,
        iterations=iters,
        best_restart=restart,
    )


def cmd_encode(args: argparse.Namespace) -> None:
    data = load_npy(args.input)
    cb = deserialize_codebook(_read_bytes(args.codebook))
    plane = forward_transform(data, cb)
    stream = codec.encode(plane, cb)
    raw = stream.to_bytes()
    _write_bytes(args.out, raw)
    _emit(
        elements=data.size,
        levels=cb.levels,
        bytes=len(raw),
        payload_bytes=len(stream.payload),
        bpfp=codec.bpfp(stream, data.size),
        header_bits_share=stream.header_bits / stream.total_bits,
        mse=transform_distortion(data, cb),
    )


def cmd_decode(args: argparse.Namespace) -> None:
    stream = codec.Bitstream.from_bytes(_read_bytes(args.input))
    plane, cb = codec.decode(stream)
    if plane.size == 0:
        raise ParamError("stream holds an empty plane; NPY output needs at least one element")
    recon = inverse_transform(plane, cb)
    save_npy(recon, args.out)
    out = dict(elements=plane.size, levels=cb.levels, bpfp=codec.bpfp(stream, plane.size))
    if args.reference:
        ref = load_npy(args.reference)
        out["mse"] = mse(ref, recon)
    _emit(**out)


def cmd_analyze(args: argparse.Namespace) -> None:
    tensors = [load_npy(p) for p in args.input]
    prefix = args.out_prefix
    # a prefix ending in a separator names a directory; create it like any parent
    out_dir = Path(prefix) if prefix.endswith(("/", "\\")) else Path(prefix).parent
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StoreIOError(f"cannot create {out_dir}: {e}") from e
    if len(tensors) > 1:
        hists = analysis.shared_histograms(tensors, args.bins)
    else:
        hists = [analysis.histogram(tensors[0], args.bins)]
    names = [f"{i}-{t.source_tag}" for i, t in enumerate(tensors)]
    out: dict[str, Any] = {}
    for name, t, h in zip(names, tensors, hists):
        analysis.write_histogram_csv(h, f"{prefix}{name}.hist.csv")
        if not args.no_svg:
            analysis.write_histogram_svg(h, f"{prefix}{name}.hist.svg", t.source_tag)
        out[f"entropy_bits.{name}"] = analysis.shannon_entropy(h)
    if len(tensors) > 1:
        mat = analysis.alignment_matrix(list(zip(names, hists)))
        analysis.write_matrix_csv(mat, f"{prefix}kl.csv")
        out["kl_max"] = float(mat.kl.max())
    if args.codebook:
        cb = deserialize_codebook(_read_bytes(args.codebook))
        if cb.levels >= 3:
            rows, mean_w = analysis.interval_width_report(cb)
            analysis.write_widths_csv(rows, f"{prefix}widths.csv")
            out["mean_interval_width"] = mean_w
        sym = [analysis.symbol_histogram(forward_transform(t, cb)) for t in tensors]
        for name, h in zip(names, sym):
            analysis.write_histogram_csv(h, f"{prefix}{name}.symbols.csv")
            out[f"symbol_entropy_bits.{name}"] = analysis.shannon_entropy(h)
        if len(tensors) > 1:
            smat = analysis.alignment_matrix(list(zip(names, sym)))
            analysis.write_matrix_csv(smat, f"{prefix}kl_symbols.csv")
            out["symbol_kl_max"] = float(smat.kl.max())
    _emit(**out)


def parse_config(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``[a, b, c]`` is a list, ``#`` starts a comment.

    Scalars become int or float when they parse as such; quotes are stripped.
    """
    out: dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_\-]*", key):
            raise FormatError(f"config line {n}: bad key {key!r}")
        key = key.replace("-", "_")
        if val.startswith("["):
            if not val.endswith("]"):
                raise FormatError(f"config line {n}: unterminated list")
            inner = val[1:-1].strip()
            out[key] = [_scalar(v.strip()) for v in inner.split(",")] if inner else []
        else:
            out[key] = _scalar(val)
    return out


def _scalar(s: str) -> Any:
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _parse_levels(v: Any) -> tuple[int, ...]:
    if isinstance(v, str):
        v = [s for s in v.replace(" ", "").split(",") if s]
    if isinstance(v, int):
        v = [v]
    try:
        return tuple(int(x) for x in v)
    except (TypeError, ValueError):
        raise ParamError(f"bad level list {v!r}") from None


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg: dict[str, Any] = {}
    if args.spec:
        cfg = parse_config(_read_bytes(args.spec).decode("utf-8", errors="strict"))
    for key in ("input", "eval", "mode", "levels", "restarts", "tol", "max_iters", "truncate_pct"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.seed_set:
        cfg["seed"] = args.seed
    if "input" not in cfg:
        raise ParamError("sweep needs an input (flag --input or 'input' in the config file)")
    unknown = set(cfg) - {
        "input", "eval", "mode", "levels", "seed", "restarts", "tol", "max_iters", "truncate_pct"
    }
    if unknown:
        raise ParamError(f"unknown sweep settings: {sorted(unknown)}")
    fit_src = load_npy(cfg["input"])
    eval_src = load_npy(cfg["eval"]) if cfg.get("eval") else None
    spec = harness.SweepSpec(
        levels_list=_parse_levels(cfg.get("levels", [2, 4, 8, 16, 32, 64, 128, 256])),
        fit_mode=str(cfg.get("mode", "lloyd-max")),
        fit_source=fit_src,
        eval_source=eval_src,
        seed=int(cfg.get("seed", 0)),
        fit_options={
            k: cfg[k] for k in ("restarts", "tol", "max_iters", "truncate_pct") if k in cfg
        },
    )
    points = harness.run_sweep(spec)
    for out in args.out:
        harness.emit_report(points, out, _report_format(out))
    _emit(
        points=len(points),
        min_mse=min(p.mse for p in points),
        max_bpfp=max(p.bpfp for p in points),
    )


def _report_format(path: str) -> str:
    return "svg" if path.lower().endswith(".svg") else "csv"


def cmd_cross(args: argparse.Namespace) -> None:
    sources = [load_npy(p) for p in args.inputs]
    matrix = harness.run_cross_matrix(
        sources, args.mode, args.levels, args.seed, **_fit_options(args)
    )
    for out in args.out:
        harness.emit_report(matrix, out, _report_format(out))
    m = len(matrix)
    # worst margin of each column's diagonal against its best off-diagonal entry
    margins = [
        min(matrix[i][j].mse for i in range(m) if i != j) - matrix[j][j].mse for j in range(m)
    ]
    _emit(sources=m, points=m * m, min_diagonal_margin=min(margins))


def _kv_params(items: Sequence[str]) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for item in items:
        if "=" not in item:
            raise ParamError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        v = v.strip()
        if "," in v:
            params[k.strip()] = tuple(float(x) for x in v.split(","))
        else:
            params[k.strip()] = float(v)
    return params


def cmd_gen(args: argparse.Namespace) -> None:
    spec = SyntheticSourceSpec(args.kind, _kv_params(args.param), args.seed)
    t = generate(spec, args.count)
    save_npy(t, args.out)
    _emit(kind=args.kind, count=t.size, seed=args.seed, min=float(t.values.min()),
          max=float(t.values.max()))


# -- parser -------------------------------------------------------------------------


def _u64(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="RNG seed (u64)")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="featcodec", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=_u64, default=0, help="RNG seed (u64, default 0)")
    p.add_argument("--verbose", "-v", action="store_true", default=False)
    sub = p.add_subparsers(dest="command", required=True)

    def fit_flags(sp: argparse.ArgumentParser, levels_default: int | None = 256) -> None:
        sp.add_argument("--mode", choices=MODES, default="lloyd-max")
        if levels_default is not None:
            sp.add_argument("--levels", type=int, default=levels_default)
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--truncate-pct", type=float)

    sp = sub.add_parser("fit", parents=[common], help="fit a codebook (DTCB)")
    sp.add_argument("--input", nargs="+", required=True)
    fit_flags(sp)
    sp.add_argument("--k-fit", type=int, default=10, help="tensors sampled for fitting")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("encode", parents=[common], help="transform and entropy-code a tensor")
    sp.add_argument("--input", required=True)
    sp.add_argument("--codebook", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", parents=[common], help="decode a DTFC stream to NPY")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--reference", help="original NPY, to report mse")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("analyze", parents=[common], help="histograms, entropy, KL, widths")
    sp.add_argument("--input", nargs="+", required=True)
    sp.add_argument("--bins", type=int, default=analysis.DEFAULT_BINS)
    sp.add_argument("--codebook", help="DTCB file for width and symbol reports")
    sp.add_argument("--out-prefix", required=True)
    sp.add_argument("--no-svg", action="store_true")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", parents=[common], help="rate-distortion sweep over levels")
    sp.add_argument("--spec", help="key = value config file")
    sp.add_argument("--input")
    sp.add_argument("--eval")
    sp.add_argument("--mode", choices=MODES)
    sp.add_argument("--levels", help="comma-separated level counts")
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--truncate-pct", type=float)
    sp.add_argument("--out", nargs="+", required=True, help=".csv and/or .svg paths")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("cross", parents=[common], help="cross-source fit/eval matrix")
    sp.add_argument("--inputs", nargs="+", required=True)
    fit_flags(sp)
    sp.add_argument("--out", nargs="+", required=True, help=".csv and/or .svg paths")
    sp.set_defaults(func=cmd_cross)

    sp = sub.add_parser("gen", parents=[common], help="generate a synthetic source")
    sp.add_argument("--kind", choices=SOURCE_KINDS, required=True)
    sp.add_argument("--count", type=int, required=True)
    sp.add_argument("--param", action="append", default=[], help="key=value, lists comma-separated")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    # a seed given explicitly (either position) overrides sweep config files
    args.seed_set = any(a == "--seed" or a.startswith("--seed=") for a in argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except FeatcodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
