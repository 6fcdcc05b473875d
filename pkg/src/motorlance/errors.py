"""Exception hierarchy shared across the package.

Every error that crosses the API boundary carries a stable ``code`` string
so the gateway can map it onto an HTTP status without string matching.
"""


class MotorlanceError(Exception):
    """Base class; ``code`` is a stable machine-readable tag."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__doc__)
        self.message = message or (self.__doc__ or self.code)


class ConfigError(MotorlanceError):
    """Malformed configuration or scenario input."""

    code = "config_error"


class ValidationError(MotorlanceError):
    """A value violates a domain invariant."""

    code = "validation_error"


class ParseError(MotorlanceError):
    """Malformed input file (bad CSV row, wrong header, unreadable cell)."""

    code = "parse_error"


class ConflictError(MotorlanceError):
    """Attempt to create an entity under an id that is already taken."""

    code = "conflict"


class UnknownEntityError(MotorlanceError):
    """Referenced rider/driver/dispatcher/facility/request does not exist."""

    code = "unknown_entity"


class UnreachableError(MotorlanceError):
    """No path exists between two graph nodes."""

    code = "unreachable"

    def __init__(self, from_node: str, to_node: str):
        super().__init__(f"no route from {from_node!r} to {to_node!r}")
        self.from_node = from_node
        self.to_node = to_node


class IllegalTransition(MotorlanceError):
    """State transition is not in the legal transition table."""

    code = "illegal_transition"


class ScreeningIncomplete(MotorlanceError):
    """Driver cannot go Available before passing screening and training."""

    code = "screening_incomplete"


class WrongState(MotorlanceError):
    """Operation not permitted in the request's current state."""

    code = "wrong_state"


class WindowExpired(MotorlanceError):
    """Confirmation arrived after the delay period already auto-dispatched."""

    code = "window_expired"


class WrongDriver(MotorlanceError):
    """Caller is not the driver assigned to this request."""

    code = "wrong_driver"


class DriverUnavailable(MotorlanceError):
    """Target driver is not in Available status."""

    code = "driver_unavailable"


class NoAvailableDriver(MotorlanceError):
    """No driver in Available status anywhere in the fleet."""

    code = "no_available_driver"


class NoFacility(MotorlanceError):
    """Scenario has no registered medical facility."""

    code = "no_facility"


class UnknownFacility(MotorlanceError):
    """Referenced facility id is not registered."""

    code = "unknown_facility"


class PersistenceError(MotorlanceError):
    """Event log or snapshot is corrupt or unwritable."""

    code = "persistence_error"
