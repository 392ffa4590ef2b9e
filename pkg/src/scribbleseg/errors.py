"""Exception hierarchy shared across the package."""


class ScribblesegError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ScribblesegError):
    """Invalid or inconsistent configuration (unknown provider, bad field values)."""


class InputError(ScribblesegError):
    """Input data violates a precondition (undecodable image, too small, bad dtype)."""


class ContractError(ScribblesegError):
    """Shape or value mismatch between cooperating components."""


class SupervisionError(ScribblesegError):
    """Scribbles provide no usable supervision (all ignored, single class)."""


class CheckpointError(ScribblesegError):
    """Corrupt, truncated, or incompatible checkpoint file."""
