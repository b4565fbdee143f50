"""Exception hierarchy.

Everything raised on purpose derives from DuetError so callers can catch the
library's failures without catching programming mistakes.  The harness maps
ConfigError to exit code 1 and every other DuetError to exit code 2.
"""


class DuetError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DuetError):
    """A value violates a documented precondition or type invariant."""


class SpecMismatchError(DuetError):
    """A sequence, scorer or guidance set is bound to the wrong text spec."""


class MappingError(DuetError):
    """Detokenization or cross-spec mapping failed (e.g. dangling marker)."""


class CapabilityError(DuetError):
    """A scorer was asked for an optional capability it does not provide."""


class DecodeFailure(DuetError):
    """Decoding produced no finished hypothesis.

    When raised from the orchestrated methods the partial trace collected so
    far is attached as the ``trace`` attribute (may be None).
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class EnumerationLimitError(DuetError):
    """exact_topk refused to enumerate a search space above its guard."""


class ConfigError(DuetError):
    """An experiment configuration is malformed or inconsistent."""


class ModelFileError(DuetError):
    """A persisted model file is unreadable, wrong version, or corrupt."""


class ProtocolError(DuetError):
    """The remote scoring wire protocol was violated."""
