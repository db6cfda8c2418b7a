"""Self-describing bitstreams for symbol planes.

Layout (little-endian)::

    "DTFC" | version u8 | coder id u8 | rank u8 | shape u32 * rank | levels u32
    | codebook length u32 | DTCB block | payload length u32 | payload | CRC32 u32

The CRC covers every byte before it.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import rangecoder
from .errors import CorruptPayloadError, FormatError, LevelMismatchError, ParamError
from .transform import SymbolPlane, TransformCodebook, deserialize_codebook, serialize_codebook

MAGIC = b"DTFC"
VERSION = 1
CODER_ORDER0_RANGE = 0

_STATUS_MESSAGES = {
    rangecoder.STATUS_BAD_SYMBOL: "coder desynchronized (symbol out of range)",
    rangecoder.STATUS_OVERRUN: "payload ended before the terminator",
    rangecoder.STATUS_NO_TERMINATOR: "terminator symbol missing after the last element",
    rangecoder.STATUS_TRAILING: "unexpected bytes after the terminator",
}


@dataclass(frozen=True)
class Bitstream:
    shape: tuple[int, ...]
    levels: int
    codebook: bytes
    payload: bytes
    coder_id: int = CODER_ORDER0_RANGE

    @property
    def element_count(self) -> int:
        return math.prod(self.shape)

    def header_bytes(self) -> bytes:
        return (
            MAGIC
            + struct.pack("<BBB", VERSION, self.coder_id, len(self.shape))
            + struct.pack(f"<{len(self.shape)}I", *self.shape)
            + struct.pack("<II", self.levels, len(self.codebook))
            + self.codebook
            + struct.pack("<I", len(self.payload))
        )

    def to_bytes(self) -> bytes:
        body = self.header_bytes() + self.payload
        return body + struct.pack("<I", zlib.crc32(body))

    @property
    def total_bits(self) -> int:
        return 8 * (len(self.header_bytes()) + len(self.payload) + 4)

    @property
    def header_bits(self) -> int:
        """Everything except the coded payload: header, codebook and CRC."""
        return self.total_bits - 8 * len(self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        data = bytes(data)
        if len(data) < 7 or data[:4] != MAGIC:
            raise FormatError("bad bitstream magic")
        version, coder_id, rank = struct.unpack_from("<BBB", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported bitstream version {version}")
        if coder_id != CODER_ORDER0_RANGE:
            raise FormatError(f"unknown coder id {coder_id}")
        if rank < 1:
            raise FormatError("bitstream rank must be >= 1")
        off = 7
        try:
            shape = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            levels, cb_len = struct.unpack_from("<II", data, off)
            off += 8
            codebook = data[off : off + cb_len]
            off += cb_len
            (payload_len,) = struct.unpack_from("<I", data, off)
            off += 4
        except struct.error:
            raise FormatError("bitstream header truncated") from None
        if len(codebook) != cb_len:
            raise FormatError("bitstream header truncated")
        end = off + payload_len
        if len(data) < end + 4:
            raise CorruptPayloadError(
                f"stream holds {len(data)} bytes, header declares {end + 4}"
            )
        if len(data) > end + 4:
            raise FormatError("trailing bytes after the bitstream CRC")
        (crc,) = struct.unpack_from("<I", data, end)
        if crc != zlib.crc32(data[:end]):
            raise FormatError("bitstream CRC mismatch")
        return cls(tuple(shape), levels, codebook, data[off:end], coder_id)


def encode(plane: SymbolPlane, cb: TransformCodebook) -> Bitstream:
    """Range-code a symbol plane under the adaptive order-0 model."""
    if plane.levels != cb.levels:
        raise LevelMismatchError(f"plane has {plane.levels} levels, codebook {cb.levels}")
    if plane.size == 0:
        payload = b""
    else:
        payload = rangecoder.encode_symbols(
            plane.symbols,
            plane.levels,
            rangecoder.COUNT_INCREMENT,
            rangecoder.rescale_threshold(plane.levels),
        ).tobytes()
    return Bitstream(plane.shape, plane.levels, serialize_codebook(cb), payload)


def decode(stream: Bitstream | bytes) -> tuple[SymbolPlane, TransformCodebook]:
    if not isinstance(stream, Bitstream):
        stream = Bitstream.from_bytes(stream)
    cb = deserialize_codebook(stream.codebook)
    if cb.levels != stream.levels:
        raise FormatError(f"header declares {stream.levels} levels, codebook has {cb.levels}")
    n = stream.element_count
    if n == 0:
        if stream.payload:
            raise CorruptPayloadError("empty plane carries a payload")
        return SymbolPlane(stream.shape, np.zeros(0, np.int64), stream.levels), cb
    payload = np.frombuffer(stream.payload, dtype=np.uint8)
    symbols, status = rangecoder.decode_symbols(
        payload,
        n,
        stream.levels,
        rangecoder.COUNT_INCREMENT,
        rangecoder.rescale_threshold(stream.levels),
        rangecoder._top_bit(stream.levels + 1),
    )
    if status != rangecoder.STATUS_OK:
        raise CorruptPayloadError(_STATUS_MESSAGES[status])
    return SymbolPlane(stream.shape, symbols, stream.levels), cb


def bpfp(stream: Bitstream, element_count: int) -> float:
    """Bits per feature point: every stream bit over the element count."""
    if element_count < 1 or element_count != stream.element_count:
        raise ParamError(
            f"element_count {element_count} does not match the encoded "
            f"shape {stream.shape} ({stream.element_count} elements)"
        )
    return stream.total_bits / element_count
