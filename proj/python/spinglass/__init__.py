"""Parisi functional, Ruelle cascades, and Monte Carlo for multi-species spherical spin glasses."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
