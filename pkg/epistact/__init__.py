"""Epistemic activity annotation toolkit.

Corpus model, label encodings, challenge metrics, unitizing agreement and a
structured perceptron tagger for overlapping epistemic-activity segments.
"""

from .corpus import Activity, BioTag, Corpus, Document, Label, Segment, read_corpus, write_corpus
from .errors import (
    AgreementError,
    ConfigError,
    CorpusFormatError,
    EpistactError,
    MisalignedError,
    ModelFormatError,
    SequenceRepairError,
)

__all__ = [
    "Activity",
    "AgreementError",
    "BioTag",
    "ConfigError",
    "Corpus",
    "CorpusFormatError",
    "Document",
    "EpistactError",
    "Label",
    "MisalignedError",
    "ModelFormatError",
    "Segment",
    "SequenceRepairError",
    "read_corpus",
    "write_corpus",
]
