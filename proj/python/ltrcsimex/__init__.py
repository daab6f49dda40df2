"""Additive hazards variable selection under left truncation, right
censoring, and covariate measurement error."""

try:
    from ._core import *  # noqa: F401,F403
    from . import _core as _core  # noqa: F401
except ImportError:  # in-tree builds put _core next to the build dir
    from _core import *  # noqa: F401,F403
    import _core as _core  # noqa: F401

__all__ = [name for name in dir(_core) if not name.startswith("_")]
