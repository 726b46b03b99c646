"""Exception and warning types shared across the package."""


class AdBenchError(Exception):
    """Base class for all errors raised by adbench."""


# dataset
class MissingTarget(AdBenchError):
    pass


class EmptyFile(AdBenchError):
    pass


class RaggedRows(AdBenchError):
    pass


class SchemaMismatch(AdBenchError):
    pass


class DegenerateSplit(AdBenchError):
    pass


# models
class NotFittedError(AdBenchError):
    pass


class SingularDesign(AdBenchError):
    pass


class CholeskyFailure(AdBenchError):
    pass


class DivergedTraining(AdBenchError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class VersionMismatch(AdBenchError):
    pass


# measures / validation
class MissingModelContext(AdBenchError):
    pass


class SingularGram(AdBenchError):
    pass


class ZeroVector(AdBenchError):
    pass


class DegenerateInput(AdBenchError):
    pass


class LengthMismatch(AdBenchError):
    pass


class EvenWindow(AdBenchError):
    pass


class WindowTooLarge(AdBenchError):
    pass


class ConfigError(AdBenchError):
    pass


class NonConvergence(UserWarning):
    pass


class ZeroVarianceTarget(UserWarning):
    pass


class DegenerateScale(UserWarning):
    pass
