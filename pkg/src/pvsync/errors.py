"""Exception hierarchy shared by every layer of the package."""


class PvsyncError(Exception):
    """Base class for all package errors."""


class ConfigError(PvsyncError, ValueError):
    """Invalid configuration: bad distribution bounds, counts, or schema."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class DomainError(PvsyncError, ValueError):
    """A formula was evaluated outside its domain (e.g. non-positive noise)."""


class InfeasibleLinkError(PvsyncError):
    """A zero-rate link makes a task unschedulable on this RSU."""


class NoMarketError(PvsyncError):
    """An auction was asked to clear with no bidders."""


class DegenerateMarketError(PvsyncError):
    """The virtual submarket lacks the infotainment bidders the rule needs."""


class MechanismFailure(PvsyncError):
    """A mechanism run failed inside an experiment; carries the offending seed."""

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed
