"""Exception hierarchy.

Input/validation problems derive from ``InputError`` (CLI exit code 2),
estimation-time failures from ``EstimationError`` (CLI exit code 3).
"""


class TiltDidError(Exception):
    pass


class InputError(TiltDidError):
    pass


class EstimationError(TiltDidError):
    pass


class MissingColumn(InputError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column missing: {column!r}")


class NonNumericValue(InputError):
    def __init__(self, row, column):
        self.row = row
        self.column = column
        super().__init__(f"non-numeric or missing value in row {row}, column {column!r}")


class TreatmentOutOfRange(InputError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"treatment outside [0, 1] in row {row}")


class AllTreatedOrAllUntreated(InputError):
    pass


class TooFewUnitsPerStratum(InputError):
    pass


class InvalidParameter(InputError):
    pass


class BandwidthNonPositive(InputError):
    pass


class SingularDesign(EstimationError):
    pass


class NonConvergence(EstimationError):
    pass


class NoMassAboveThreshold(EstimationError):
    pass


class NoUntreatedUnits(EstimationError):
    pass


class DoseOutsideGrid(EstimationError):
    pass


class UnsupportedInterventionForOneStep(EstimationError):
    pass
