"""Distribution-transform feature coding: codebook fitting, entropy coding and
rate-distortion analysis for scalar feature tensors."""

from .codec import Bitstream, bpfp, decode, encode
from .errors import (
    CorruptPayloadError,
    DataError,
    DegenerateInputError,
    EdgeMismatchError,
    EmptyHistogramError,
    FeatcodecError,
    FormatError,
    LevelMismatchError,
    ParamError,
    SizeError,
    StoreIOError,
    TooFewLevelsError,
)
from .features import (
    FeatureTensor,
    SyntheticSourceSpec,
    generate,
    load_npy,
    pool,
    sample_fit_set,
    save_npy,
)
from .lloyd import fit_lloyd_max
from .optimal import fit_optimal_dp
from .transform import (
    FitReport,
    SymbolPlane,
    TransformCodebook,
    deserialize_codebook,
    fit,
    fit_equal_frequency,
    fit_uniform,
    forward_transform,
    inverse_transform,
    serialize_codebook,
    transform_distortion,
)

__version__ = "0.1.0"

__all__ = [
    "Bitstream",
    "bpfp",
    "CorruptPayloadError",
    "DataError",
    "decode",
    "DegenerateInputError",
    "deserialize_codebook",
    "EdgeMismatchError",
    "EmptyHistogramError",
    "encode",
    "FeatcodecError",
    "FeatureTensor",
    "fit",
    "fit_equal_frequency",
    "fit_lloyd_max",
    "fit_optimal_dp",
    "fit_uniform",
    "FitReport",
    "FormatError",
    "forward_transform",
    "generate",
    "inverse_transform",
    "LevelMismatchError",
    "load_npy",
    "ParamError",
    "pool",
    "sample_fit_set",
    "save_npy",
    "serialize_codebook",
    "SizeError",
    "StoreIOError",
    "SymbolPlane",
    "SyntheticSourceSpec",
    "TooFewLevelsError",
    "transform_distortion",
    "TransformCodebook",
]
