"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, validation
problems exit 2, runtime failures exit 3.
"""

from __future__ import annotations


class CmgError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CmgError):
    """Bad input: wrong shapes, out-of-range values, malformed documents."""


class SchemaError(ValidationError):
    """A structured document failed schema validation.

    Carries the JSON path of the offending node, e.g. ``$.groups[0].members``.
    """

    def __init__(self, message: str, json_path: str = "$"):
        super().__init__(f"{json_path}: {message}")
        self.json_path = json_path


class MotionFileError(ValidationError):
    """Base class for motion file format problems."""


class MagicError(MotionFileError):
    """File does not start with the expected magic bytes."""


class TruncatedPayloadError(MotionFileError):
    """Payload is shorter than the header demands."""


class HeaderMismatchError(MotionFileError):
    """Header fields disagree with each other or with the payload length."""


class TrainingDivergedError(CmgError):
    """Training produced a non-finite loss; carries the failing step."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step


class LLMError(CmgError):
    """Base class for language-model backend failures.

    ``raw`` holds the raw response text (if any) for diagnostics.
    """

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class LLMTimeoutError(LLMError):
    """The endpoint did not answer within the configured timeout."""


class LLMHTTPError(LLMError):
    """The endpoint answered with a non-2xx status."""

    def __init__(self, message: str, status_code: int, raw: str | None = None):
        super().__init__(message, raw)
        self.status_code = status_code


class LLMSchemaError(LLMError):
    """The endpoint answered 2xx but the body failed schema validation."""
