"""Configuration, orchestration and the invariant suite."""

from .config import *  # noqa: F401,F403
from .config import __all__ as _config_all
from .runner import *  # noqa: F401,F403
from .runner import __all__ as _runner_all
from .suite import CheckResult, run_suite

__all__ = [*_config_all, *_runner_all, "CheckResult", "run_suite"]
