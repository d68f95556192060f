"""Feedback cold damping and sideband thermometry of an optomechanical mode.

All rates are angular (rad/s); use ``from_hz`` / ``to_hz`` at the boundary.
"""

from ._coldamp import *  # noqa: F401,F403
from ._coldamp import Error, InstabilityError, InvalidArgument  # noqa: F401
