"""Exception hierarchy.  ``NumericalFailure`` subclasses map to CLI exit code 2."""


class GphitError(Exception):
    pass


class InvalidArgument(GphitError, ValueError):
    pass


class DiagonalUndefined(GphitError, ValueError):
    pass


class NumericalFailure(GphitError):
    pass


class NotPositiveDefinite(NumericalFailure):
    pass


class EmbeddingFailed(NumericalFailure):
    pass


class KernelH1Violated(NumericalFailure):
    pass


class CensoringExcess(NumericalFailure):
    pass


class NodesMissing(NumericalFailure):
    pass


class TooFewProbes(NumericalFailure):
    pass


class DivergenceRegime(GphitError, ValueError):
    pass
