"""Continual-learning MIL laboratory (python surface of the C++ core)."""

from ._pagmil import *  # noqa: F401,F403
from ._pagmil import __version__  # noqa: F401
