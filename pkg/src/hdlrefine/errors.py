"""Exception hierarchy shared across the package."""


class HdlRefineError(Exception):
    """Base class for all package errors."""


class ValidationError(HdlRefineError, ValueError):
    """An argument violates an operation's precondition."""


class RevisionNotFound(HdlRefineError, LookupError):
    pass


class ExtractionError(HdlRefineError):
    """No usable source code could be pulled out of an LLM reply."""


class LlmFailure(HdlRefineError):
    """The LLM backend could not produce a completion."""


class TransientLlmError(HdlRefineError):
    """A retryable transport-level failure raised by a backend."""


class ToolFailure(HdlRefineError):
    """An external EDA tool could not be launched."""


class InvariantViolation(HdlRefineError):
    """A run-level invariant (e.g. the pinned testbench hash) was broken."""


class ContractViolation(HdlRefineError):
    """An operation was called in a state its contract forbids."""
