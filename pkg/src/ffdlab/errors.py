"""Shared exception base for ffdlab.

Every module defines its own error types next to the code that raises them;
they all derive from :class:`FfdlabError` so callers (and the CLI) can catch
library failures with a single except clause.
"""


class FfdlabError(Exception):
    """Base class for all ffdlab errors."""
