"""Exception types shared across the simulator."""


class LedgerSimError(Exception):
    """Base class for all simulator errors."""


class MalformedConfig(LedgerSimError):
    pass


class MissingField(MalformedConfig):
    pass


class InvalidRange(MalformedConfig):
    pass


class MalformedScenario(LedgerSimError):
    pass


class UnknownPublicId(LedgerSimError):
    pass


class NotDeployed(LedgerSimError):
    pass


class EmptyQueue(LedgerSimError):
    pass


class DeployTimeout(LedgerSimError):
    pass


class AlreadyDeployedByOther(LedgerSimError):
    pass


class CorruptDump(LedgerSimError):
    pass


class InternalInvariantViolation(LedgerSimError):
    """An honest-node invariant broke mid-run; exit code 4 territory."""
