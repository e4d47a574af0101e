class ResourceLimitError(RuntimeError):
    """Requested construction exceeds the configured size budget."""


class InvariantError(RuntimeError):
    """A structural invariant of a constructed object failed."""
