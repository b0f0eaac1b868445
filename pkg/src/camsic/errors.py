"""Exception taxonomy shared across the codec.

Every error that can cross the service/CLI boundary carries a stable
``code`` string; the CLI maps codes to its documented exit codes.
"""


class CamsicError(Exception):
    """Base class for all codec errors."""

    code = "internal"


class DimensionError(CamsicError):
    """Array extents do not satisfy an operation's contract."""

    code = "io_format"


class ParameterError(CamsicError):
    """Invalid scalar parameter (e.g. non-positive stride)."""

    code = "io_format"


class FormatError(CamsicError):
    """Malformed external input (PPM image, JSON point file, ...)."""

    code = "io_format"


# --- weight container -------------------------------------------------------

class WeightsError(CamsicError):
    code = "io_format"


class BadMagicError(WeightsError):
    pass


class UnsupportedVersionError(WeightsError):
    pass


class ChecksumError(WeightsError):
    pass


class TruncatedError(WeightsError):
    pass


class SchemaError(WeightsError):
    """Weight set is missing required entries or has wrong shapes."""

    code = "weights_manifest"


# --- bitstream container / coding ------------------------------------------

class ContainerError(CamsicError):
    code = "corrupt"


class DigestMismatchError(ContainerError):
    """Bitstream was produced with different weights/config."""

    code = "digest_mismatch"


class CorruptContainerError(ContainerError):
    """CRC failure or structurally invalid container."""

    code = "corrupt"


class CoderError(CamsicError):
    """Entropy-coder payload truncated or inconsistent."""

    code = "corrupt"


class ProtocolError(CamsicError):
    """Encoder/decoder iteration state diverged (guard, should not happen)."""

    code = "corrupt"


class ScheduleError(CamsicError):
    """Token selection request inconsistent with the mask state."""

    code = "corrupt"


# --- metrics ----------------------------------------------------------------

class CurveError(CamsicError):
    """Rate-distortion curve unusable (too few points, no overlap)."""

    code = "insufficient_points"
