"""Exception hierarchy shared by every pruw module."""


class PRUWError(ValueError):
    """Base class for all library errors."""


# ffmath
class NotPrime(PRUWError):
    pass


class DivisionByZero(PRUWError, ZeroDivisionError):
    pass


class Singular(PRUWError):
    pass


class DegenerateConstants(PRUWError):
    pass


# planner
class InfeasibleParams(PRUWError):
    pass


class TooFewDatabases(PRUWError):
    pass


class StorageOutOfRange(PRUWError):
    pass


# codec / sim
class FieldTooSmall(PRUWError):
    pass


class ShapeError(PRUWError):
    pass


class BadIndex(PRUWError):
    pass


class Incomplete(PRUWError):
    pass


class SessionError(PRUWError):
    pass


class Corrupt(PRUWError):
    pass


class VersionMismatch(Corrupt):
    pass


# privacy oracle
class TooLarge(PRUWError):
    def __init__(self, enumerations, limit):
        super().__init__(
            f"exhaustive enumeration needs {enumerations} realizations (limit {limit})"
        )
        self.enumerations = enumerations
        self.limit = limit
