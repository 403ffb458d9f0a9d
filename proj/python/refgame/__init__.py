"""Speakers, listeners and reference-game evaluation for attribute phrases."""

from ._core import *  # noqa: F401,F403
from ._core import RefgameError, __doc__  # noqa: F401
