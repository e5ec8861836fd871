"""Exception types shared across the toolkit."""


class GenreClfError(Exception):
    """Base class for all toolkit errors."""


# -- audio decoding -----------------------------------------------------------

class MalformedHeader(GenreClfError):
    """RIFF/WAVE container structure is invalid."""


class UnsupportedFormat(GenreClfError):
    """Codec or sample layout outside PCM 8/16/24-bit and float32."""


class TruncatedData(GenreClfError):
    """Data chunk shorter than its declared size."""


# -- DSP / features -----------------------------------------------------------

class InvalidParams(GenreClfError):
    """Parameter values violate an operation's preconditions."""


class NoPeaksFound(GenreClfError):
    """Envelope has no local maxima to threshold."""


class DegenerateInput(GenreClfError):
    """Input carries no usable signal (e.g. all-zero spectrum)."""


class Unvoiced(GenreClfError):
    """Frame has no autocorrelation peak strong enough to be a pitch."""


class TooShort(GenreClfError):
    """Buffer yields zero analysis frames."""


# -- dataset / serialization --------------------------------------------------

class EmptyDataset(GenreClfError):
    """No audio files found under the dataset root."""


class SchemaMismatch(GenreClfError):
    """Serialized artifact has wrong columns, keys, or shapes."""


class ParseError(GenreClfError):
    """Serialized artifact could not be parsed at all."""


# -- model / evaluation -------------------------------------------------------

class DimensionMismatch(GenreClfError):
    """Feature vector length differs from the model's input width."""


class VersionMismatch(GenreClfError):
    """On-disk model format version is not supported."""


class LabelOutOfRange(GenreClfError):
    """A label index falls outside [0, num_classes)."""


class EmptyMatrix(GenreClfError):
    """Confusion matrix contains no observations."""
