"""Exception hierarchy shared across the pipeline."""


class SmfError(Exception):
    """Base class for all errors raised by this package."""


# -- registry ---------------------------------------------------------------

class DuplicateKey(SmfError):
    pass


class InvalidRecord(SmfError):
    pass


class StorageError(SmfError):
    pass


# -- vcs --------------------------------------------------------------------

class CloneFailed(SmfError):
    pass


class NotAGitRepo(SmfError):
    pass


class DirtyWorkspace(SmfError):
    pass


class UnknownRef(SmfError):
    pass


class AmbiguousPrefix(SmfError):
    pass


# -- trackers ---------------------------------------------------------------

class TrackerUnreachable(SmfError):
    pass


class MalformedResponse(SmfError):
    pass


class AuthRequired(SmfError):
    pass


# -- builder / runner -------------------------------------------------------

class CheckoutFailed(SmfError):
    pass


class ScriptNotExecutable(SmfError):
    pass


class InvalidName(SmfError):
    pass


# -- store ------------------------------------------------------------------

class RunClosed(SmfError):
    pass


class SchemaVersionMismatch(SmfError):
    pass


class MalformedDump(SmfError):
    pass


# -- analysis ---------------------------------------------------------------

class InsufficientData(SmfError):
    pass


class ConstantInput(SmfError):
    pass
