"""Exception types shared across pipeline stages."""


class SinktriageError(Exception):
    """Base class for all pipeline errors."""


class RootNotFound(SinktriageError):
    pass


class CatalogParseError(SinktriageError):
    pass


class EmptyCatalog(SinktriageError):
    pass


class DuplicateEntry(CatalogParseError):
    pass


class ProviderTimeout(SinktriageError):
    pass


class ProviderRejected(SinktriageError):
    """Authentication / quota rejection; not retried."""


class CassetteMiss(SinktriageError):
    """Replay mode was asked for a prompt absent from the cassette."""


class NoCodeFound(SinktriageError):
    """A test-generation response contained no extractable code."""


class UnfixableTest(SinktriageError):
    """No mechanizable fix applies; the case is classified Invalid."""


class RunnerNotFound(SinktriageError):
    pass


class WorkspaceError(SinktriageError):
    pass


class InconsistentInput(SinktriageError):
    """Inputs violate a classification precondition (e.g. an execution
    outcome supplied for a 'No' verdict)."""


class DuplicateModelName(SinktriageError):
    pass
