"""Exception hierarchy shared by all oolib modules.

Each error carries a process exit code so the command line front end can
map failures onto its documented codes without a lookup table.
"""


class OolibError(Exception):
    exit_code = 1


class ConfigError(OolibError, ValueError):
    exit_code = 2


class DataError(OolibError):
    exit_code = 3


class NumericError(OolibError, ArithmeticError):
    exit_code = 4


class VerificationError(OolibError, AssertionError):
    exit_code = 5


# environment
class AbsentObject(ConfigError):
    pass


class InvalidAction(ConfigError):
    pass


class GridTooSmall(ConfigError):
    pass


class UnsupportedGrid(ConfigError):
    pass


# permutations
class MalformedCycles(ConfigError):
    pass


class RepeatedLabel(ConfigError):
    pass


class LabelOutOfRange(ConfigError):
    pass


class DegreeMismatch(ConfigError):
    pass


class DegreeTooLarge(ConfigError):
    pass


class OutOfRange(ConfigError):
    pass


# tabular verification
class TooLarge(ConfigError):
    pass


class NotAHomomorphism(VerificationError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ScalingViolation(VerificationError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class NotIsomorphic(VerificationError):
    pass


class ActionOnAbsentObject(ConfigError):
    pass


# numerics
class ShapeMismatch(NumericError, ValueError):
    pass


class NonFinite(NumericError):
    pass


class NotScalarLoss(NumericError, ValueError):
    pass


class SingularSystem(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


# data and evaluation
class Infeasible(ConfigError):
    pass


class ParseError(DataError):
    def __init__(self, msg, line=None):
        super().__init__(msg)
        self.line = line


class IoError(DataError, OSError):
    pass


class TargetMissing(DataError):
    pass


class NotABindingModel(ConfigError, TypeError):
    pass
