"""Exception types raised across the package."""


class VpmpccError(Exception):
    """Base class for all package errors."""


# track
class TrackError(VpmpccError):
    pass


class TooFewPoints(TrackError):
    pass


class SelfIntersecting(TrackError):
    pass


class DuplicatePoints(TrackError):
    pass


class ParseError(TrackError):
    pass


class NonClosedRaceline(TrackError):
    pass


class NonPositiveLimit(TrackError, ValueError):
    pass


# vehicle
class SteeringOutOfRange(VpmpccError, ValueError):
    pass


# planner
class LengthMismatch(VpmpccError, ValueError):
    pass


class DimensionMismatch(VpmpccError, ValueError):
    pass


class Infeasible(VpmpccError):
    pass


class SolverFailure(VpmpccError):
    pass


# solver
class InconsistentDerivatives(VpmpccError):
    pass


class NonFiniteObjective(VpmpccError, FloatingPointError):
    pass


# tuner
class SingularCovariance(VpmpccError, ArithmeticError):
    pass


# cli / report
class ConfigError(VpmpccError, ValueError):
    pass


class MismatchedTracks(VpmpccError):
    pass
