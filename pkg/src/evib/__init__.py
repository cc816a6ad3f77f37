"""Electrovibration friction modelling, identification and compensation."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
