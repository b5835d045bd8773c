"""
Base classes for errors and issue handling shared across prprank.
"""

import logging
import warnings
from enum import Enum
from typing import List, Optional

from exceptiongroup import ExceptionGroup

from prprank.utils import setup_logger

_logger = setup_logger(__name__)


class IssueAction(str, Enum):
    """Actions to take when a recoverable issue is detected."""

    WARN = "warn"
    LOG = "log"
    RAISE = "raise"


class RerankError(Exception):
    """Base exception for reranking errors."""


class IngestError(RerankError):
    """Raised when an input file cannot be ingested."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line_number: Optional[int] = None,
    ):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}:{line_number}: " if line_number else f"{path}: "
        super().__init__(f"{location}{message}")


class DuplicateIdError(IngestError):
    """Raised when an identifier appears twice in one file."""


class UnresolvedReferenceError(IngestError):
    """Raised when a document reference cannot be resolved against the corpus."""


class ComparatorError(RerankError):
    """Base exception for pairwise comparator failures."""


class ComparatorTransportError(ComparatorError):
    """Raised when the remote backend could not be reached after all retries."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ComparatorTimeoutError(ComparatorTransportError):
    """Raised when the last attempt against the remote backend timed out."""


class IdenticalDocumentError(ComparatorError):
    """Raised when a document is compared against itself."""


class MissingRelevanceError(ComparatorError):
    """Raised when the simulated comparator has no relevance for a document."""


class SelectionError(RerankError):
    """Raised when a selection strategy cannot run or is configured to fail on degradation."""


class PromptTemplateError(RerankError):
    """Raised when a prompt template is malformed or unknown."""


class EvaluationError(RerankError):
    """Raised when evaluation inputs are inconsistent."""


class QuerySetMismatchError(EvaluationError):
    """Raised when report inputs cover different query sets."""


class CalibrationError(RerankError):
    """Raised when cost-model calibration has no usable records."""


class ConfigError(RerankError):
    """Raised for invalid run configuration."""


class QueryFailedError(RerankError):
    """Raised when reranking a single query fails."""

    def __init__(self, query_id: str, cause: BaseException):
        super().__init__(f"query {query_id!r} failed: {cause}")
        self.query_id = query_id
        self.cause = cause


class RerankExceptionGroup(ExceptionGroup, RerankError):
    """Combined exception for per-query failures collected from a worker pool."""

    def __init__(self, message: str, errors: List[QueryFailedError]):
        super().__init__(message, errors)


class LongDocumentWarning(UserWarning):
    """Issued when a document exceeds the configured token budget."""


class DegradedSelectionWarning(UserWarning):
    """Issued when a selection strategy stopped before completing."""


def handle_issue(
    action: IssueAction,
    message: str,
    *,
    category: type = UserWarning,
    error_class: type = RerankError,
    logger: Optional[logging.Logger] = _logger,
) -> None:
    """Surface a recoverable issue according to the configured action."""
    if action == "warn":
        warnings.warn(message, category, stacklevel=3)
    elif action == "log":
        (logger or _logger).warning(message)
    elif action == "raise":
        raise error_class(message)
