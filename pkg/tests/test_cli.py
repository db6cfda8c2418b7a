import csv

import numpy as np
import pytest

from featcodec import FeatureTensor, load_npy, save_npy
from featcodec.cli import main, parse_config
from featcodec.errors import FormatError


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    return code, kv, err


@pytest.fixture()
def peaky_file(tmp_path, capsys):
    path = tmp_path / "peaky.npy"
    code, kv, _ = run(capsys, "gen", "--kind", "peaky-mixture", "--count", 20000, "--seed", 42,
                      "--out", path)
    assert code == 0 and kv["count"] == "20000"
    return path


def test_gen_params(tmp_path, capsys):
    path = tmp_path / "u.npy"
    code, kv, _ = run(capsys, "--seed", 1, "gen", "--kind", "near-uniform", "--count", 50,
                      "--param", "low=2", "--param", "high=3", "--out", path)
    assert code == 0
    v = load_npy(path).values
    assert v.min() >= 2 and v.max() <= 3


def test_fit_encode_decode_pipeline(tmp_path, capsys, peaky_file):
    cb = tmp_path / "cb.dtcb"
    code, kv, _ = run(capsys, "fit", "--input", peaky_file, "--levels", 64, "--seed", 3,
                      "--restarts", 3, "--out", cb)
    assert code == 0 and kv["levels"] == "64" and float(kv["final_distortion"]) > 0
    bs = tmp_path / "x.dtfc"
    code, enc, _ = run(capsys, "encode", "--input", peaky_file, "--codebook", cb, "--out", bs)
    assert code == 0 and int(enc["bytes"]) == bs.stat().st_size
    rec = tmp_path / "rec.npy"
    code, dec, _ = run(capsys, "decode", "--input", bs, "--out", rec, "--reference", peaky_file)
    assert code == 0
    assert float(dec["mse"]) == pytest.approx(float(kv["final_distortion"]), abs=1e-9)
    assert dec["bpfp"] == enc["bpfp"]
    assert load_npy(rec).shape == load_npy(peaky_file).shape


def test_analyze_reports(tmp_path, capsys, peaky_file):
    flat = tmp_path / "flat.npy"
    run(capsys, "gen", "--kind", "near-uniform", "--count", 20000, "--out", flat)
    cb = tmp_path / "cb.dtcb"
    run(capsys, "fit", "--input", peaky_file, "--levels", 32, "--restarts", 2, "--out", cb)
    prefix = tmp_path / "nested" / "rep-"
    code, kv, _ = run(capsys, "analyze", "--input", peaky_file, flat, "--codebook", cb,
                      "--out-prefix", prefix)
    assert code == 0 and float(kv["kl_max"]) > 0
    with open(f"{prefix}0-peaky.hist.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 256
    top = max(rows, key=lambda r: int(r["count"]))
    assert float(top["lo"]) <= 0.0 <= float(top["hi"])
    for name in ("0-peaky.hist.svg", "kl.csv", "widths.csv", "1-flat.symbols.csv",
                 "kl_symbols.csv"):
        assert (tmp_path / "nested" / f"rep-{name}").exists()


def test_sweep_from_config(tmp_path, capsys, peaky_file):
    conf = tmp_path / "sweep.conf"
    conf.write_text(
        f"# rd sweep\ninput = {peaky_file}\nmode = uniform\nlevels = [2, 4, 8]\nseed = 5\n"
    )
    out = tmp_path / "rd.csv"
    code, kv, _ = run(capsys, "sweep", "--spec", conf, "--out", out, tmp_path / "rd.svg")
    assert code == 0 and kv["points"] == "3"
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert [r["levels"] for r in rows] == ["2", "4", "8"]
    assert (tmp_path / "rd.svg").read_text().startswith("<?xml")


def test_sweep_flags_override_config(tmp_path, capsys, peaky_file):
    conf = tmp_path / "s.conf"
    conf.write_text(f"input = {peaky_file}\nlevels = [2, 4]\n")
    code, kv, _ = run(capsys, "sweep", "--spec", conf, "--levels", "8", "--mode", "equal-freq",
                      "--out", tmp_path / "o.csv")
    assert code == 0 and kv["points"] == "1"


def test_cross_matrix(tmp_path, capsys):
    paths = []
    for i, kind in enumerate(["peaky-mixture", "heavy-tail"]):
        paths.append(tmp_path / f"{i}.npy")
        run(capsys, "gen", "--kind", kind, "--count", 5000, "--seed", i, "--out", paths[-1])
    out = tmp_path / "cross.csv"
    code, kv, _ = run(capsys, "cross", "--inputs", *paths, "--levels", 16, "--restarts", 2,
                      "--out", out)
    assert code == 0 and kv["points"] == "4"
    assert float(kv["min_diagonal_margin"]) > 0
    with open(out) as f:
        assert len(list(csv.DictReader(f))) == 4


# -- errors ---------------------------------------------------------------------------


def test_levels_one_is_param_error(tmp_path, capsys, peaky_file):
    code, _, err = run(capsys, "fit", "--input", peaky_file, "--levels", 1,
                       "--out", tmp_path / "c")
    assert code == 1 and err.startswith("error: param-error")
    assert not (tmp_path / "c").exists()


def test_corrupt_stream_rejected(tmp_path, capsys, peaky_file):
    cb, bs = tmp_path / "cb", tmp_path / "bs"
    run(capsys, "fit", "--input", peaky_file, "--mode", "uniform", "--levels", 8, "--out", cb)
    run(capsys, "encode", "--input", peaky_file, "--codebook", cb, "--out", bs)
    raw = bytearray(bs.read_bytes())
    raw[len(raw) // 2] ^= 0x40
    bs.write_bytes(bytes(raw))
    code, _, err = run(capsys, "decode", "--input", bs, "--out", tmp_path / "r.npy")
    assert code == 1 and err.startswith("error: format-error")


def test_analyze_prefix_directory_is_created(tmp_path, capsys, peaky_file):
    code, _, _ = run(capsys, "analyze", "--input", peaky_file, "--no-svg",
                     "--out-prefix", f"{tmp_path / 'out'}/")
    assert code == 0 and (tmp_path / "out" / "0-peaky.hist.csv").exists()


def test_missing_input_is_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "encode", "--input", tmp_path / "nope.npy", "--codebook",
                       tmp_path / "cb", "--out", tmp_path / "o")
    assert code == 1 and "io-error" in err


def test_bad_seed_rejected_by_parser(capsys):
    with pytest.raises(SystemExit):
        main(["--seed", "-1", "gen", "--kind", "heavy-tail", "--count", "1", "--out", "x"])


def test_parse_config():
    cfg = parse_config("a = 1\nb = 2.5  # note\nc = [1, 2]\nd = 'x y'\nmax-iters = 3\n")
    assert cfg == {"a": 1, "b": 2.5, "c": [1, 2], "d": "x y", "max_iters": 3}
    with pytest.raises(FormatError):
        parse_config("novalue\n")
    with pytest.raises(FormatError):
        parse_config("a = [1, 2\n")


# -- determinism ----------------------------------------------------------------------


def test_repeated_runs_are_byte_identical(tmp_path, capsys):
    src = tmp_path / "s.npy"
    save_npy(FeatureTensor((3000,), np.random.default_rng(0).laplace(size=3000)), src)
    outs = []
    for rep in range(2):
        d = tmp_path / f"r{rep}"
        d.mkdir()
        run(capsys, "--seed", 77, "fit", "--input", src, "--levels", 32, "--out", d / "cb")
        run(capsys, "encode", "--input", src, "--codebook", d / "cb", "--out", d / "bs")
        run(capsys, "sweep", "--input", src, "--levels", "2,8", "--seed", 77,
            "--out", d / "rd.csv", d / "rd.svg")
        outs.append([(d / n).read_bytes() for n in ("cb", "bs", "rd.csv", "rd.svg")])
    assert outs[0] == outs[1]
