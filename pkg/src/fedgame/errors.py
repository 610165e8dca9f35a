"""Exception and warning types raised by the solvers."""


class FedGameError(Exception):
    """Base class for every solver error."""


class InvalidConfigError(FedGameError, ValueError):
    """A client profile or game configuration violates its invariants."""


class EmptyRosterError(InvalidConfigError):
    pass


class NonUniformCapsError(FedGameError):
    """The closed-form equilibrium needs every client to share one data cap."""


class NoConvergenceError(FedGameError):
    """Best-response dynamics ran out of rounds.

    The last profile reached is kept on the exception so callers can inspect it.
    """

    def __init__(self, message, profile=None, rounds=0):
        super().__init__(message)
        self.profile = profile
        self.rounds = rounds


class NoRootError(FedGameError):
    pass


class LevelAboveCapError(FedGameError, ValueError):
    pass


class DegenerateDenominatorError(FedGameError):
    pass


class NonUniqueEquilibriumWarning(UserWarning):
    """Ratios tie, so the reported equilibrium is one of several."""
