"""Exception hierarchy shared by every hyperdf module."""


class HyperDFError(Exception):
    """Base class; the CLI turns any of these into exit code 1."""


class ConfigError(HyperDFError, ValueError):
    pass


class ZeroVector(HyperDFError, ValueError):
    """A feature vector had (near) zero norm and cannot be projected."""


class NoPositivePairs(HyperDFError, ValueError):
    """Alignment needs at least one same-class pair in the batch."""


class ClassMissing(HyperDFError, ValueError):
    pass


class ShapeMismatch(HyperDFError, ValueError):
    pass


class UnsupportedPolicy(HyperDFError, ValueError):
    pass


class WeightsUnavailable(HyperDFError, RuntimeError):
    pass


class DetectorUnavailable(HyperDFError, RuntimeError):
    pass


class NoFaceFound(HyperDFError, RuntimeError):
    """No sampled frame of a video produced a face crop."""


class MissingSourceLinks(HyperDFError, ValueError):
    pass


class CorruptCheckpoint(HyperDFError, RuntimeError):
    pass


class NonFiniteLoss(HyperDFError, RuntimeError):
    pass


class EmptyVideo(HyperDFError, ValueError):
    pass


class SingleClass(HyperDFError, ValueError):
    """AUROC is undefined when only one class is present."""


class FingerprintMismatch(HyperDFError, RuntimeError):
    pass


__all__ = [
    "HyperDFError",
    "ConfigError",
    "ZeroVector",
    "NoPositivePairs",
    "ClassMissing",
    "ShapeMismatch",
    "UnsupportedPolicy",
    "WeightsUnavailable",
    "DetectorUnavailable",
    "NoFaceFound",
    "MissingSourceLinks",
    "CorruptCheckpoint",
    "NonFiniteLoss",
    "EmptyVideo",
    "SingleClass",
    "FingerprintMismatch",
]
