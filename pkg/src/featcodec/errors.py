"""Exception hierarchy shared by every featcodec module.

Each class carries a short ``kind`` tag. The CLI prints that tag on stderr so
scripts can tell failure classes apart without parsing messages.
"""


class FeatcodecError(Exception):
    kind = "error"

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.kind}: {msg}" if msg else self.kind


class StoreIOError(FeatcodecError, OSError):
    kind = "io-error"


class FormatError(FeatcodecError, ValueError):
    kind = "format-error"


class DataError(FeatcodecError, ValueError):
    kind = "data-error"


class ParamError(FeatcodecError, ValueError):
    kind = "param-error"


class DegenerateInputError(FeatcodecError, ValueError):
    kind = "degenerate-input"


class LevelMismatchError(FeatcodecError, ValueError):
    kind = "level-mismatch"


class SizeError(FeatcodecError, ValueError):
    kind = "size-error"


class EdgeMismatchError(FeatcodecError, ValueError):
    kind = "edge-mismatch"


class EmptyHistogramError(FeatcodecError, ValueError):
    kind = "empty-histogram"


class TooFewLevelsError(FeatcodecError, ValueError):
    kind = "too-few-levels"


class CorruptPayloadError(FeatcodecError, ValueError):
    kind = "corrupt-payload"
