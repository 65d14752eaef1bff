"""Exception types shared across the package."""

from __future__ import annotations


class FaqPilotError(Exception):
    """Base class for all package errors."""


class DeadlineExceeded(FaqPilotError):
    """An operation ran out of its latency budget.

    Carries the budget time already spent so callers can account for the
    burned latency without re-measuring.
    """

    def __init__(self, message: str = "deadline exceeded", *, elapsed: float = 0.0):
        super().__init__(message)
        self.elapsed = elapsed


class ProviderError(FaqPilotError):
    """A backing provider (LLM, embedder, RAG) failed."""


class ProviderUnavailable(ProviderError):
    """Provider could not be reached at all."""


class RateLimited(ProviderError):
    """Provider rejected the call for quota reasons; retried per policy."""


class UnparseableOutput(ProviderError):
    """Model output could not be parsed even after a reprompt."""


# conversation ------------------------------------------------------------

class TranscriptError(FaqPilotError):
    pass


class MalformedDocument(TranscriptError):
    pass


class SchemaViolation(TranscriptError):
    pass


class EmptyTranscript(TranscriptError):
    pass


class EmptyText(FaqPilotError):
    """Text argument was empty after trimming."""


class ZeroWindow(FaqPilotError):
    """Window size below 1."""


# embedding ---------------------------------------------------------------

class DimMismatch(FaqPilotError):
    pass


class ZeroVector(FaqPilotError):
    pass


# faq store ---------------------------------------------------------------

class NotFound(FaqPilotError):
    pass


class StorageIO(FaqPilotError):
    pass


class VersionMismatch(StorageIO):
    pass


class CorruptSnapshot(StorageIO):
    pass


# suggestion engine -------------------------------------------------------

class UnknownSuggestion(FaqPilotError):
    pass


class NotGenerated(FaqPilotError):
    pass


class NotYetAnswered(FaqPilotError):
    pass


class EmptyConversation(FaqPilotError):
    pass


# rag ----------------------------------------------------------------------

class RagUnavailable(ProviderError):
    pass


# mining ----------------------------------------------------------------------

class PipelineAbort(FaqPilotError):
    """A mining stage hit its abort condition."""


# config / cli ---------------------------------------------------------------

class ConfigError(FaqPilotError):
    pass


class InfeasibleSpec(FaqPilotError):
    """Synthetic corpus request cannot be satisfied."""
