"""Hot-loop kernels with a compiled fast path.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
pure-Python module is used. Set ``PARETO_FORGE_PURE=1`` to force the
fallback (handy for benchmarking and for checking both paths agree).
"""

import os

from . import _kernels_py

try:
    if os.environ.get("PARETO_FORGE_PURE", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as _impl
    COMPILED = True
except ImportError:
    _impl = _kernels_py
    COMPILED = False

pava_nonincreasing_clip = _impl.pava_nonincreasing_clip
nondominated_mask = _impl.nondominated_mask
eps_archive = _impl.eps_archive

__all__ = [
    "COMPILED",
    "pava_nonincreasing_clip",
    "nondominated_mask",
    "eps_archive",
]
