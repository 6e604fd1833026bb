"""Exception types raised across the package."""


class DTwinError(Exception):
    """Base class for all package errors."""


# core_model
class KindMismatch(DTwinError, ValueError):
    pass


class ZeroVectorCosine(DTwinError, ValueError):
    pass


class ZeroVector(DTwinError, ValueError):
    pass


# media_io
class MediaNotFound(DTwinError, FileNotFoundError):
    pass


class DecodeFailure(DTwinError):
    pass


class EmptyMedia(DTwinError):
    pass


class WriteFailure(DTwinError, OSError):
    pass


class ParseFailure(DTwinError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateClipId(DTwinError, ValueError):
    pass


class StorageFailure(DTwinError, OSError):
    pass


# source_prep
class NoDetectableFace(DTwinError):
    pass


class NoFaceDetected(DTwinError):
    pass


class DegenerateContour(DTwinError, ValueError):
    pass


class InvalidContour(DTwinError, ValueError):
    pass


# generation / backends
class BackendFailure(DTwinError, RuntimeError):
    pass


class UnknownBackend(DTwinError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown backend"


class EmptyCaption(DTwinError):
    pass


class MaskMismatch(DTwinError, ValueError):
    pass


class EmptyDriving(DTwinError, ValueError):
    pass


class DimsTooSmall(DTwinError, ValueError):
    pass


# evaluation
class LengthMismatch(DTwinError, ValueError):
    pass


class AllFramesSkipped(DTwinError):
    pass


class NoEvaluableFrames(DTwinError):
    pass


class EmptyInput(DTwinError, ValueError):
    pass


class MissingOutput(DTwinError):
    pass


class ConfigError(DTwinError, ValueError):
    pass
