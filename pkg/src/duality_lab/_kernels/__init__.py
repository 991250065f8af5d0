"""Hot grid kernels: compiled extension when built, numpy fallback otherwise."""

try:
    from . import _grid as _impl

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on the build
    from . import _fallback as _impl

    HAVE_COMPILED = False

from . import _fallback as fallback

grid_search_max = _impl.grid_search_max
maximin_value = _impl.maximin_value

__all__ = ["grid_search_max", "maximin_value", "fallback", "HAVE_COMPILED"]
