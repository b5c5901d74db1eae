"""Exception hierarchy.

Everything raised on purpose by the pipeline derives from :class:`PipelineError`
so callers (and the CLI) can separate expected pipeline failures from bugs.
Argument-validation errors additionally derive from :class:`ValueError`.
"""


class PipelineError(Exception):
    """Base class for expected pipeline failures."""


class ConfigError(PipelineError, ValueError):
    """Invalid configuration value or unknown key."""


# geometry
class EmptyCloud(PipelineError, ValueError):
    pass


class NonPositiveRadius(PipelineError, ValueError):
    pass


class TooFewPoints(PipelineError, ValueError):
    pass


# color model
class TooFewPixels(PipelineError, ValueError):
    pass


# detection
class NoTargets(PipelineError):
    pass


# peduncle segmentation
class DegenerateRoi(PipelineError):
    pass


class ScorerFailure(PipelineError):
    pass


class NoPositives(PipelineError, ValueError):
    pass


class NoNegatives(PipelineError, ValueError):
    pass


class NoPeduncle(PipelineError):
    pass


# grasp selection
class NoCandidates(PipelineError):
    pass


class AttemptsExhausted(PipelineError):
    pass


# simulation
class UnknownPepper(PipelineError, KeyError):
    pass


# metrics
class LengthMismatch(PipelineError, ValueError):
    pass


class DegenerateCurve(PipelineError, ValueError):
    pass


class ThresholdNotFound(PipelineError, KeyError):
    pass
