"""Budgeted quantization/early-exit routing.

Thin Python surface over the C++ core: path algebra and BitOPS costs,
synthetic per-path probability datasets, clustered error targets, gate
predictors, routing policies, and the experiment harness.
"""

from quee._core import *  # noqa: F401,F403
from quee._core import __doc__ as _core_doc

__all__ = [name for name in dir() if not name.startswith("_")]
__doc__ = __doc__ + "\n\n" + (_core_doc or "")
