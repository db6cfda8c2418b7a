"""Feature tensors: NPY I/O, synthetic sources and fit-set sampling."""

from __future__ import annotations

import ast
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError, ParamError, StoreIOError

NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
MAX_RANK = 4


class FeatureTensor:
    """Dense float32 feature values with shape metadata.

    Values are stored flat (row-major) in a read-only array. Equality is
    bit-exact on values and shape; ``source_tag`` is a label only.
    """

    __slots__ = ("shape", "values", "source_tag")

    def __init__(self, shape: Sequence[int], values: Any, source_tag: str = ""):
        shape = tuple(int(d) for d in shape)
        if not shape or any(d < 1 for d in shape):
            raise ParamError(f"shape must be non-empty with dims >= 1, got {shape}")
        arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32).reshape(-1))
        if arr.size != math.prod(shape):
            raise ParamError(f"shape {shape} needs {math.prod(shape)} values, got {arr.size}")
        if not np.isfinite(arr).all():
            raise DataError("feature values must be finite")
        arr.flags.writeable = False
        self.shape = shape
        self.values = arr
        self.source_tag = source_tag

    @classmethod
    def from_array(cls, array: Any, source_tag: str = "") -> "FeatureTensor":
        arr = np.asarray(array, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        return cls(arr.shape, arr, source_tag)

    @property
    def size(self) -> int:
        return self.values.size

    def array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureTensor):
            return NotImplemented
        return self.shape == other.shape and self.values.tobytes() == other.values.tobytes()

    def __hash__(self) -> int:
        return hash((self.shape, self.values.tobytes()))

    def __repr__(self) -> str:
        return f"FeatureTensor(shape={self.shape}, source_tag={self.source_tag!r})"


def pool(tensors: Sequence[FeatureTensor], source_tag: str | None = None) -> FeatureTensor:
    """Concatenate the scalar values of several tensors into one 1-D tensor."""
    if not tensors:
        raise ParamError("cannot pool an empty list of tensors")
    values = np.concatenate([t.values for t in tensors])
    tag = tensors[0].source_tag if source_tag is None else source_tag
    return FeatureTensor((values.size,), values, tag)


# -- NPY v1.0 ------------------------------------------------------------------


def _npy_header(shape: tuple[int, ...]) -> bytes:
    shape_repr = "(" + ", ".join(str(d) for d in shape) + ("," if len(shape) == 1 else "") + ")"
    text = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_repr + ", }"
    preamble = len(NPY_MAGIC) + 2 + 2
    pad = -(preamble + len(text) + 1) % NPY_ALIGN
    text = text + " " * pad + "\n"
    if len(text) > 0xFFFF:
        raise ParamError("NPY header too long")
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(text)) + text.encode("latin1")


def npy_bytes(tensor: FeatureTensor) -> bytes:
    return _npy_header(tensor.shape) + tensor.values.astype("<f4", copy=False).tobytes()


def parse_npy(data: bytes, source_tag: str = "") -> FeatureTensor:
    """Parse an in-memory NPY v1.0 ``<f4`` C-order file."""
    if len(data) < 10 or data[:6] != NPY_MAGIC:
        raise FormatError("bad NPY magic")
    if data[6:8] != b"\x01\x00":
        raise FormatError(f"unsupported NPY version {data[6]}.{data[7]}")
    (hlen,) = struct.unpack("<H", data[8:10])
    if len(data) < 10 + hlen:
        raise FormatError("truncated NPY header")
    try:
        header = ast.literal_eval(data[10 : 10 + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError("NPY header must hold exactly descr/fortran_order/shape")
    if header["descr"] != "<f4":
        raise FormatError(f"unsupported dtype {header['descr']!r}, expected '<f4'")
    if header["fortran_order"] is not False:
        raise FormatError("fortran-order arrays are not supported")
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= MAX_RANK
        or not all(isinstance(d, int) and d >= 1 for d in shape)
    ):
        raise FormatError(f"unsupported shape {shape!r}")
    body = data[10 + hlen :]
    expected = 4 * math.prod(shape)
    if len(body) != expected:
        raise FormatError(f"NPY body holds {len(body)} bytes, shape needs {expected}")
    values = np.frombuffer(body, dtype="<f4")
    if not np.isfinite(values).all():
        raise DataError("NPY file contains non-finite values")
    return FeatureTensor(shape, values, source_tag)


def load_npy(path: str | Path) -> FeatureTensor:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StoreIOError(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_npy(data, source_tag=path.stem)


def save_npy(tensor: FeatureTensor, path: str | Path) -> None:
    path = Path(path)
    if not 1 <= len(tensor.shape) <= MAX_RANK:
        raise ParamError(f"NPY output supports 1-{MAX_RANK} dims, got {len(tensor.shape)}")
    try:
        path.write_bytes(npy_bytes(tensor))
    except OSError as exc:
        raise StoreIOError(f"cannot write {path}: {exc.strerror or exc}") from None


# -- synthetic sources ------------------------------------------------------------

SOURCE_KINDS = ("peaky-mixture", "heavy-tail", "near-uniform")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    # narrow dominant core plus a wide, slightly offset shoulder
    "peaky-mixture": {"weights": (0.92, 0.08), "means": (0.0, 0.25), "scales": (0.05, 1.0)},
    # Student-t with 3 degrees of freedom, scaled
    "heavy-tail": {"scale": 0.5},
    "near-uniform": {"low": -1.0, "high": 1.0},
}

HEAVY_TAIL_DOF = 3.0


@dataclass(frozen=True)
class SyntheticSourceSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def resolved_params(self) -> dict[str, Any]:
        if self.kind not in SOURCE_KINDS:
            raise ParamError(f"unknown source kind {self.kind!r}; expected one of {SOURCE_KINDS}")
        params = dict(DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(params)
        if unknown:
            raise ParamError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        params.update(self.params)
        return params

    def validate(self) -> dict[str, Any]:
        if not 0 <= int(self.seed) < 2**64:
            raise ParamError("seed must be a 64-bit unsigned integer")
        p = self.resolved_params()
        if self.kind == "peaky-mixture":
            w = np.asarray(p["weights"], dtype=np.float64)
            m = np.asarray(p["means"], dtype=np.float64)
            s = np.asarray(p["scales"], dtype=np.float64)
            if not (w.ndim == m.ndim == s.ndim == 1 and w.size == m.size == s.size >= 1):
                raise ParamError("weights, means and scales must be equal-length sequences")
            if (w <= 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ParamError("mixture weights must be positive and sum to 1")
            if (s <= 0).any() or not np.isfinite(m).all():
                raise ParamError("mixture scales must be positive and means finite")
        elif self.kind == "heavy-tail":
            if not float(p["scale"]) > 0:
                raise ParamError("heavy-tail scale must be positive")
        elif not float(p["low"]) < float(p["high"]):
            raise ParamError("near-uniform requires low < high")
        return p


def generate(spec: SyntheticSourceSpec, count: int) -> FeatureTensor:
    """Draw ``count`` float32 samples from a seeded synthetic source."""
    if int(count) < 1:
        raise ParamError("count must be >= 1")
    p = spec.validate()
    rng = np.random.default_rng(int(spec.seed))
    if spec.kind == "peaky-mixture":
        w = np.asarray(p["weights"], dtype=np.float64)
        comp = rng.choice(w.size, size=count, p=w / w.sum())
        z = rng.standard_normal(count)
        values = np.asarray(p["means"], dtype=np.float64)[comp] + np.asarray(p["scales"])[comp] * z
    elif spec.kind == "heavy-tail":
        values = float(p["scale"]) * rng.standard_t(HEAVY_TAIL_DOF, size=count)
    else:
        lo, hi = float(p["low"]), float(p["high"])
        values = np.clip(rng.uniform(lo, hi, size=count).astype(np.float32), lo, hi)
    return FeatureTensor((count,), values, spec.kind)


def sample_fit_set(
    tensors: Sequence[FeatureTensor], k: int = 10, seed: int = 0
) -> list[FeatureTensor]:
    """Choose ``k`` distinct tensors uniformly without replacement."""
    if not tensors:
        raise ParamError("need at least one tensor to sample from")
    return [tensors[i] for i in sample_fit_indices(len(tensors), k, seed)]


def sample_fit_indices(n: int, k: int = 10, seed: int = 0) -> list[int]:
    if not 1 <= k <= n:
        raise ParamError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(int(seed))
    return [int(i) for i in rng.choice(n, size=k, replace=False)]
