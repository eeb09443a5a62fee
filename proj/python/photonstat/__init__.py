"""Photon-statistics analysis of time-tagged single-emitter data.

Thin wrapper over the C++ core; see the README for the command-line tool.
"""

from ._photonstat import *  # noqa: F401,F403
from ._photonstat import PhotonstatError, __doc__  # noqa: F401

__version__ = "0.1.0"
