"""PPG/rPPG blood-pressure pipeline bindings."""

from ._pulsebp import *  # noqa: F401,F403
from ._pulsebp import __version__  # noqa: F401
