from __future__ import annotations


class PyramidError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(PyramidError, ValueError):
    pass


class ContextOverflow(PyramidError):
    pass


class TraceMiss(PyramidError, KeyError):
    def __init__(self, ctx, path=None):
        self.ctx = tuple(ctx)
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"no recorded distribution for context {list(self.ctx)}{where}")

    def __str__(self):
        return self.args[0]


class RemoteBackendError(PyramidError):
    pass


class UndefinedRate(PyramidError, ZeroDivisionError):
    pass
