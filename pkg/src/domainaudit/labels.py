"""Domain label vocabulary and the per-sample embedding record."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError


class DomainLabel(enum.IntEnum):
    """Domain of a sample. Integer values match the on-disk i8 encoding."""

    UNKNOWN = -1
    NATURAL = 0
    AMBIGUOUS = 1
    RENDITION = 2

    @property
    def token(self) -> str:
        return _TOKENS[self]

    @classmethod
    def from_token(cls, token: str) -> "DomainLabel":
        try:
            return _FROM_TOKEN[token.lower()]
        except KeyError:
            raise UsageError(f"unknown domain label token {token!r}") from None


_TOKENS = {
    DomainLabel.UNKNOWN: "unk",
    DomainLabel.NATURAL: "nat",
    DomainLabel.AMBIGUOUS: "amb",
    DomainLabel.RENDITION: "rend",
}
_FROM_TOKEN = {v: k for k, v in _TOKENS.items()}
# Long-form names used in JSON payloads.
_NAMES = {
    DomainLabel.UNKNOWN: "unknown",
    DomainLabel.NATURAL: "natural",
    DomainLabel.AMBIGUOUS: "ambiguous",
    DomainLabel.RENDITION: "rendition",
}
_FROM_NAME = {v: k for k, v in _NAMES.items()}
_FROM_NAME.update(_FROM_TOKEN)


def label_name(label: DomainLabel) -> str:
    return _NAMES[DomainLabel(label)]


def label_from_name(name: str) -> DomainLabel:
    try:
        return _FROM_NAME[name.lower()]
    except KeyError:
        raise UsageError(f"unknown domain label {name!r}") from None


@dataclass(eq=False)
class EmbeddingRecord:
    """One sample: id, unit-norm float32 vector, optional labels.

    ``class_label`` of -1 means unknown; ids are unique within one store.
    """

    id: int
    vector: np.ndarray
    domain_label: DomainLabel = DomainLabel.UNKNOWN
    class_label: int = -1

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.domain_label == other.domain_label
            and self.class_label == other.class_label
            and np.array_equal(self.vector, other.vector)
        )
