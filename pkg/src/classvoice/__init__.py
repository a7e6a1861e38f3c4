"""Classroom voice detection (development stub init)."""
from .autodiff import *  # noqa: F401,F403
from .model import *  # noqa: F401,F403
from .simulate import *  # noqa: F401,F403
from .streaming import *  # noqa: F401,F403
from .training import *  # noqa: F401,F403
from .wavio import *  # noqa: F401,F403
