"""Exception types shared across the package."""


class BearingEdgeError(Exception):
    """Base class for all domain errors; the CLI maps these to exit code 1."""


class DegenerateSignal(BearingEdgeError):
    """Constant recording: min-max normalization is undefined."""


class OutOfRange(BearingEdgeError):
    """A window or index reaches past the end of a sample sequence."""


class InsufficientData(BearingEdgeError):
    """Not enough samples or distinct window offsets to satisfy a request."""


class InvalidClass(BearingEdgeError):
    """Class id outside the ten known fault classes."""


class NotMatFile(BearingEdgeError):
    """Input bytes do not start with a Level-5 MAT container header."""


class CompressedUnsupported(BearingEdgeError):
    """Container holds a compressed element this parser does not inflate."""


class MalformedElement(BearingEdgeError):
    """Element tag and payload disagree, or an element is truncated."""


class ChannelNotFound(BearingEdgeError):
    """No array name ends with the requested channel suffix."""


class AmbiguousChannel(BearingEdgeError):
    """More than one array name ends with the requested channel suffix."""


class ShapeMismatch(BearingEdgeError):
    """Tensor or weight dimensions are inconsistent with the operation."""


class CorruptModel(BearingEdgeError):
    """Model file failed magic, version, length, or checksum validation."""


class EmptySplit(BearingEdgeError):
    """A dataset split holds no frames."""


class DivergedLoss(BearingEdgeError):
    """Training loss became non-finite; the run was aborted."""


class BufferNotFull(BearingEdgeError):
    """Shift buffer has not yet received rows*cols samples."""


class ParseError(BearingEdgeError):
    """A wire line does not match the protocol grammar."""


class HandshakeFailed(BearingEdgeError):
    """Peer did not answer the session handshake."""


class PeerError(BearingEdgeError):
    """Peer replied with an ERR message."""

    def __init__(self, code: str, text: str = ""):
        super().__init__(f"peer error [{code}] {text}".rstrip())
        self.code = code
        self.text = text
