"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class VislinkError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(VislinkError):
    """Invalid or inconsistent configuration (bad flag values, dim mismatches)."""


class DataContractError(VislinkError):
    """Input data violates a documented invariant."""


class EmptyIndexError(DataContractError):
    """No entity in the knowledge base carries the requested modality."""


class MissingModalityError(VislinkError):
    """The requested modality is absent on this entity or encoder."""


class DegenerateEmbeddingError(VislinkError):
    """A zero (or near-zero) vector reached a normalization step."""


class ContainerFormatError(VislinkError):
    """An embedding/checkpoint file is corrupt or has an unsupported version."""
