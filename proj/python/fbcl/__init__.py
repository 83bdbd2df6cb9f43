"""Conservation laws on (0, 1) closed by nonlocal boundary feedback."""

from ._core import *  # noqa: F401,F403
from ._core import oracle  # noqa: F401

__version__ = "0.1.0"
