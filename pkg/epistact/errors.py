"""Exceptions raised by epistact."""

from __future__ import annotations


class EpistactError(Exception):
    """Base class for all toolkit errors."""


class CorpusFormatError(EpistactError, ValueError):
    """A corpus record is malformed or violates a document invariant."""

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        line: int | None = None,
        doc_id: str | None = None,
        field: str | None = None,
    ) -> None:
        self.message = message
        self.path = path
        self.line = line
        self.doc_id = doc_id
        self.field = field
        super().__init__(self.__str__())

    def with_path(self, path: str) -> "CorpusFormatError":
        """Return a copy that also names the file."""
        return CorpusFormatError(
            self.message, path=path, line=self.line, doc_id=self.doc_id, field=self.field
        )

    def __str__(self) -> str:
        location = ""
        if self.path is not None:
            location = self.path
        if self.line is not None:
            location = f"{location}:{self.line}" if location else f"line {self.line}"
        parts = [p for p in (location, self.field) if p]
        prefix = ": ".join(parts)
        doc = f" (doc_id={self.doc_id})" if self.doc_id is not None else ""
        return f"{prefix}: {self.message}{doc}" if prefix else f"{self.message}{doc}"


class SequenceRepairError(EpistactError, ValueError):
    """An I tag continues nothing under the strict policy."""

    def __init__(self, index: int, activity: str) -> None:
        self.index = index
        self.activity = activity
        super().__init__(f"invalid I-{activity} at token {index}: no open {activity} segment")


class MisalignedError(EpistactError, ValueError):
    """Gold and prediction do not cover the same documents and tokens."""


class AgreementError(EpistactError, ValueError):
    """An annotation study cannot be scored."""


class ModelFormatError(EpistactError, ValueError):
    """A model file has the wrong format or version."""


class ConfigError(EpistactError, ValueError):
    """Invalid run configuration."""
