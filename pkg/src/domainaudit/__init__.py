"""Domain-composition auditing and dataset curation for embedding corpora."""

__version__ = "0.1.0"
