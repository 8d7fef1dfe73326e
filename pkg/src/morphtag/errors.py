"""Common exception base so the CLI can map failures to exit codes."""


class MorphtagError(Exception):
    """Base class for all validation and usage errors raised by this package."""
