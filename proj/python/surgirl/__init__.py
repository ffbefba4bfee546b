"""Knowledge-grounded RL: mixture policy, SAC learner, desk-scale tasks,
and incremental transfer pipelines."""

from ._surgirl import *  # noqa: F401,F403
from ._surgirl import __doc__  # noqa: F401
