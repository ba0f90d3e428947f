"""Exception hierarchy shared by every module in the package."""


class LabelConfError(Exception):
    """Base class for all errors raised by labelconf."""


class InputError(LabelConfError, ValueError):
    """A caller-supplied value violates an operation's preconditions."""


class FormatError(LabelConfError):
    """A file does not conform to its declared on-disk layout.

    Messages name the offending byte offset or line number so malformed
    artifacts can be diagnosed without a hex editor.
    """


class DegenerateGraphError(LabelConfError):
    """A graph node ended up with zero degree, so normalization is undefined."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConvergenceError(LabelConfError):
    """An iterative solver failed to reach its tolerance within the cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateFitError(LabelConfError):
    """A mixture fit is undefined for the given data (e.g. constant losses)."""
