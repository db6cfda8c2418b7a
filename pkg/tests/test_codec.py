import hashlib
import math
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from featcodec import (
    Bitstream,
    CorruptPayloadError,
    FormatError,
    LevelMismatchError,
    ParamError,
    SymbolPlane,
    TransformCodebook,
    bpfp,
    decode,
    encode,
    serialize_codebook,
)
from featcodec import rangecoder
from featcodec.rangecoder import AdaptiveModel, rescale_threshold


def grid(levels, mode="uniform", seed=0):
    return TransformCodebook(np.arange(levels, dtype=np.float64), mode, seed)


def plane(symbols, levels, shape=None):
    symbols = np.asarray(symbols, dtype=np.int64)
    return SymbolPlane(shape or (symbols.size,), symbols, levels)


def empirical_entropy(symbols):
    _, c = np.unique(symbols, return_counts=True)
    p = c / c.sum()
    return float(-(p * np.log2(p)).sum())


def ideal_adaptive_bits(symbols, levels):
    """Code length of the adaptive model, terminator included, in bits."""
    m = AdaptiveModel(levels)
    bits = 0.0
    for s in list(symbols) + [levels]:
        bits -= math.log2(m.counts[s] / m.total)
        if s < levels:
            m.update(int(s))
    return bits


# -- adaptive model -----------------------------------------------------------------


def test_rescale_threshold():
    assert rescale_threshold(2) == 1 << 16
    assert rescale_threshold(256) == 1 << 16
    assert rescale_threshold(32_767) == 1 << 16
    assert rescale_threshold(65_536) == 1 << 18


@given(st.integers(2, 300), st.lists(st.integers(0, 10**6), max_size=3000))
def test_model_invariants(levels, raw):
    m = AdaptiveModel(levels)
    for r in raw:
        m.update(r % levels)
        assert m.total <= m.rescale_threshold
    assert (m.counts >= 1).all()
    assert m.total == int(m.counts.sum())
    cum = np.concatenate(([0], np.cumsum(m.counts)))
    for s in range(0, levels + 1, max(1, levels // 17)):
        assert m.cumulative(s) == cum[s]
        # every target inside a symbol's slot resolves to that symbol
        assert m.find(int(cum[s])) == s
        assert m.find(int(cum[s + 1] - 1)) == s


def test_model_rescales_with_floor():
    m = AdaptiveModel(4, increment=1000)
    for _ in range(200):
        m.update(0)
    assert m.total <= m.rescale_threshold
    assert m.counts[1:].tolist() == [1, 1, 1, 1]


# -- bitstream layout -----------------------------------------------------------------


def test_layout_fields():
    cb = grid(4)
    p = plane([0, 1, 2, 3, 3, 2], 4, (2, 3))
    raw = encode(p, cb).to_bytes()
    assert raw[:4] == b"DTFC"
    assert raw[4:7] == bytes([1, 0, 2])
    assert struct.unpack_from("<2I", raw, 7) == (2, 3)
    levels, cb_len = struct.unpack_from("<2I", raw, 15)
    assert levels == 4 and raw[23 : 23 + cb_len] == serialize_codebook(cb)
    (plen,) = struct.unpack_from("<I", raw, 23 + cb_len)
    assert len(raw) == 23 + cb_len + 4 + plen + 4
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])


def test_total_bits_is_serialized_length():
    s = encode(plane(np.arange(100) % 7, 7), grid(7))
    assert s.total_bits == 8 * len(s.to_bytes())
    assert s.header_bits == s.total_bits - 8 * len(s.payload)


# -- round trip ---------------------------------------------------------------------


@st.composite
def planes(draw):
    levels = draw(st.sampled_from([2, 3, 16, 255, 256, 257, 4096, 65_536]))
    shape = tuple(draw(st.lists(st.integers(1, 12), min_size=1, max_size=4)))
    n = math.prod(shape)
    style = draw(st.sampled_from(["uniform", "skewed", "constant", "extremes"]))
    rng = np.random.default_rng(draw(st.integers(0, 2**32)))
    if style == "uniform":
        sym = rng.integers(0, levels, n)
    elif style == "skewed":
        sym = np.minimum(rng.geometric(0.3, n) - 1, levels - 1)
    elif style == "constant":
        sym = np.full(n, draw(st.integers(0, levels - 1)))
    else:
        sym = rng.choice([0, levels - 1], n)
    return plane(sym, levels, shape)


@given(planes(), st.sampled_from(["lloyd-max", "equal-freq", "uniform"]), st.integers(0, 2**64 - 1))
def test_round_trip_property(p, mode, seed):
    cb = grid(p.levels, mode, seed)
    raw = encode(p, cb).to_bytes()
    back, cb2 = decode(raw)
    assert back == p and back.symbols.tobytes() == p.symbols.tobytes()
    assert cb2 == cb
    assert encode(p, cb).to_bytes() == raw


def test_extreme_alphabets_long_planes():
    rng = np.random.default_rng(3)
    for levels in (2, 65_536):
        p = plane(rng.integers(0, levels, 50_000), levels)
        back, _ = decode(encode(p, grid(levels)).to_bytes())
        assert back == p


def test_empty_plane():
    p = SymbolPlane((0,), np.zeros(0, np.int64), 8)
    s = encode(p, grid(8))
    assert s.payload == b""
    back, cb = decode(s.to_bytes())
    assert back == p and back.size == 0


def test_level_mismatch():
    with pytest.raises(LevelMismatchError):
        encode(plane([0, 1], 2), grid(3))


def test_frozen_stream_digest():
    # guards against silent changes to the coder, model schedule or layout
    rng = np.random.default_rng(2024)
    p = SymbolPlane((50, 40), rng.integers(0, 16, 2000), 16)
    cb = TransformCodebook(np.arange(16.0), "lloyd-max", 3)
    raw = encode(p, cb).to_bytes()
    assert len(raw) == 1196
    assert hashlib.sha256(raw).hexdigest() == (
        "e1cb72199690e31cc02d33f5a7256775670923b816ba27034c064db0d3fb545d"
    )


# -- rate -----------------------------------------------------------------------------


def test_constant_plane_payload():
    s = encode(plane(np.zeros(100_000), 256), grid(256))
    assert len(s.payload) <= 200
    assert len(s.payload) == 139  # frozen regression value


def test_uniform_rate():
    sym = np.random.default_rng(11).integers(0, 256, 100_000)
    s = encode(plane(sym, 256), grid(256))
    rate = 8 * len(s.payload) / sym.size
    assert 8.0 <= rate <= 8.1


@pytest.mark.parametrize(
    "draw",
    [
        lambda r, n: r.integers(0, 256, n),
        lambda r, n: np.clip(np.rint(r.normal(128, 3, n)), 0, 255),
        lambda r, n: np.clip(np.rint(r.normal(128, 30, n)), 0, 255),
        lambda r, n: np.minimum(r.geometric(0.05, n) - 1, 255),
        lambda r, n: r.choice(256, n, p=np.r_[0.9, np.full(255, 0.1 / 255)]),
    ],
    ids=["uniform", "narrow-normal", "wide-normal", "geometric", "spike"],
)
def test_rate_bound_near_entropy(draw):
    n = 100_000
    sym = draw(np.random.default_rng(5), n).astype(np.int64)
    s = encode(plane(sym, 256), grid(256))
    assert 8 * len(s.payload) <= n * (empirical_entropy(sym) + 0.1) + 1024


@given(st.integers(2, 64), st.integers(0, 2**32))
def test_payload_matches_ideal_code_length(levels, seed):
    # a range coder should land within a few bytes of the model's own code length
    rng = np.random.default_rng(seed)
    sym = np.minimum(rng.geometric(0.2, 3000) - 1, levels - 1)
    s = encode(plane(sym, levels), grid(levels))
    ideal = ideal_adaptive_bits(sym, levels)
    assert ideal - 8 <= 8 * len(s.payload) <= ideal + 8 * 6


# -- corruption -----------------------------------------------------------------------


def _sample_stream():
    sym = np.random.default_rng(1).integers(0, 32, 5000)
    return encode(plane(sym, 32), grid(32))


def test_every_header_byte_flip_rejected():
    s = _sample_stream()
    raw = s.to_bytes()
    header_len = len(s.header_bytes())
    for i in range(header_len):
        bad = bytearray(raw)
        bad[i] ^= 0x5A
        with pytest.raises((FormatError, CorruptPayloadError)):
            decode(bytes(bad))


@given(st.data())
def test_any_single_byte_corruption_detected(data):
    raw = bytearray(_sample_stream().to_bytes())
    i = data.draw(st.integers(0, len(raw) - 1))
    raw[i] ^= data.draw(st.integers(1, 255))
    with pytest.raises((FormatError, CorruptPayloadError)):
        decode(bytes(raw))


def test_truncation_mid_payload():
    raw = _sample_stream().to_bytes()
    with pytest.raises(CorruptPayloadError):
        decode(raw[: len(raw) - 100])


def test_bad_magic_version_coder():
    raw = _sample_stream().to_bytes()
    for pos, val in ((0, ord("X")), (4, 2), (5, 1)):
        bad = bytearray(raw)
        bad[pos] = val
        with pytest.raises(FormatError):
            decode(bytes(bad))


def test_sentinel_catches_payload_damage_without_crc():
    # bypass the CRC to exercise the coder's own desync detection
    s = _sample_stream()
    short = Bitstream(s.shape, s.levels, s.codebook, s.payload[:-40])
    with pytest.raises(CorruptPayloadError):
        decode(short)
    padded = Bitstream(s.shape, s.levels, s.codebook, s.payload + b"\x00\x00")
    with pytest.raises(CorruptPayloadError):
        decode(padded)
    fewer = Bitstream((4000,), s.levels, s.codebook, s.payload)
    with pytest.raises(CorruptPayloadError):
        decode(fewer)


def test_decoder_status_codes():
    sym = np.arange(200) % 5
    payload = rangecoder.encode_symbols(sym.astype(np.int64), 5, 8, rescale_threshold(5))
    top = 1 << ((6).bit_length() - 1)
    args = (5, 8, rescale_threshold(5), top)
    out, status = rangecoder.decode_symbols(payload, 200, *args)
    assert status == rangecoder.STATUS_OK and (out == sym).all()
    _, status = rangecoder.decode_symbols(payload, 199, *args)
    assert status in (rangecoder.STATUS_NO_TERMINATOR, rangecoder.STATUS_BAD_SYMBOL)
    _, status = rangecoder.decode_symbols(payload[:-3], 200, *args)
    assert status != rangecoder.STATUS_OK


# -- bpfp -----------------------------------------------------------------------------


def test_bpfp_arithmetic():
    cb_bytes = serialize_codebook(grid(2))
    fixed = 4 + 3 + 4 + 8 + len(cb_bytes) + 4 + 4
    s = Bitstream((8000,), 2, cb_bytes, b"\x00" * (1000 - fixed))
    assert len(s.to_bytes()) == 1000
    assert bpfp(s, 8000) == 1.0


def test_bpfp_count_mismatch():
    s = encode(SymbolPlane((0,), np.zeros(0, np.int64), 2), grid(2))
    with pytest.raises(ParamError):
        bpfp(s, 5)
    with pytest.raises(ParamError):
        bpfp(_sample_stream(), 4999)


def test_bpfp_uniform_stream():
    sym = np.random.default_rng(11).integers(0, 256, 100_000)
    s = encode(plane(sym, 256), grid(256))
    # the 2 KB codebook adds about 0.17 bits per element on top of the payload
    assert 8.0 <= bpfp(s, sym.size) <= 8.25
