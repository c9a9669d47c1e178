from .model import *  # noqa: F401,F403
from .model import __all__ as _model_all
from .training import *  # noqa: F401,F403
from .training import __all__ as _training_all

__all__ = [*_model_all, *_training_all]
