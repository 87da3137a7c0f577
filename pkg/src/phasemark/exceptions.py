"""Exception hierarchy shared by the measurement pipeline.

Every error carries an ``exit_code`` used by the command-line tool, so the
mapping from failure to process status lives next to the failure itself.
"""


class PhasemarkError(Exception):
    exit_code = 1


class ConfigError(PhasemarkError, ValueError):
    exit_code = 2


class ImageIOError(PhasemarkError, OSError):
    exit_code = 5


class SequenceError(PhasemarkError, ValueError):
    """Raised for non-primitive taps or inputs that are not m-sequences."""

    exit_code = 2


class DetectionError(PhasemarkError):
    exit_code = 3


class NoLatticeFound(DetectionError):
    pass


class NonOrthogonalLattice(DetectionError):
    pass


class FitDegenerate(DetectionError):
    pass


class DecodeError(PhasemarkError):
    exit_code = 4


class FewerThanMinimumCells(DecodeError):
    pass


class DegenerateClustering(DecodeError):
    pass


class AmbiguousCodingPhase(DecodeError):
    pass


class DecodeFailed(DecodeError):
    pass


class AmbiguousDecode(DecodeError):
    pass


class GlyphAmbiguous(DecodeError):
    pass
