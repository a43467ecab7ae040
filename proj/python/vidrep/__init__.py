from ._core import *  # noqa: F401,F403
from ._core import VidrepError, __doc__  # noqa: F401
