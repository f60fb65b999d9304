"""Exception hierarchy.

Every error carries a short upper-case ``code`` so that command-line
failures can be grepped for reliably.
"""


class PlantCaptureError(Exception):
    code = "PLANTCAP_ERROR"


class ValidationError(PlantCaptureError, ValueError):
    code = "INVALID_DATA"


class NegativeCount(ValidationError):
    code = "NEGATIVE_COUNT"


class CensusBelowCertainCaptures(ValidationError):
    code = "CENSUS_BELOW_CERTAIN_CAPTURES"


class EmptyClassList(ValidationError):
    code = "EMPTY_CLASS_LIST"


class ParseError(PlantCaptureError, ValueError):
    code = "PARSE_ERROR"


class InfeasibleData(PlantCaptureError, ValueError):
    code = "INFEASIBLE_DATA"


class NoCertainCaptures(PlantCaptureError, ValueError):
    code = "NO_CERTAIN_CAPTURES"


class NoCertainPlants(PlantCaptureError, ValueError):
    code = "NO_CERTAIN_PLANTS"


class NonFiniteStart(PlantCaptureError, ValueError):
    code = "NON_FINITE_START"


class NonFiniteEvaluation(PlantCaptureError, ArithmeticError):
    code = "NON_FINITE_EVALUATION"


class NegativeVariance(PlantCaptureError, ArithmeticError):
    code = "NEGATIVE_VARIANCE"


class OptimizerFailure(PlantCaptureError, RuntimeError):
    code = "OPTIMIZER_FAILURE"


class NoFeasibleInit(PlantCaptureError, ValueError):
    code = "NO_FEASIBLE_INIT"


class InsufficientDraws(PlantCaptureError, ValueError):
    code = "INSUFFICIENT_DRAWS"


class AllReplicatesFailed(PlantCaptureError, RuntimeError):
    code = "ALL_REPLICATES_FAILED"


class UnknownPreset(PlantCaptureError, KeyError):
    code = "UNKNOWN_PRESET"

    def __str__(self):
        return str(self.args[0]) if self.args else self.code


class NotFittedError(PlantCaptureError, AttributeError):
    code = "NOT_FITTED"
