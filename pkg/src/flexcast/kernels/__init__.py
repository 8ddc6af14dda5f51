"""Hot-kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set FLEXCAST_PURE_PY=1 to force the numpy backend even when the extension is
available (used by the kernel equivalence tests and the benchmark).
"""

import os

from . import _numpy

_impl = _numpy
BACKEND = "numpy"

if os.environ.get("FLEXCAST_PURE_PY") != "1":
    try:
        from . import _core

        _impl = _core
        BACKEND = "compiled"
    except ImportError:
        pass

conv1d_causal_fwd = _impl.conv1d_causal_fwd
conv1d_causal_bwd = _impl.conv1d_causal_bwd
edge_scatter_add = _impl.edge_scatter_add
scatter_add_rows = _impl.scatter_add_rows


def available_backends():
    """Name -> module for every importable backend (numpy is always present)."""
    found = {"numpy": _numpy}
    try:
        from . import _core

        found["compiled"] = _core
    except ImportError:
        pass
    return found
