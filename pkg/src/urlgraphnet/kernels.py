"""Kernel backend selection.

Imports the compiled extension when it is built, otherwise the numpy
fallback.  Set ``URLGRAPHNET_PURE_PYTHON=1`` to force the fallback (used
by the benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

if os.environ.get("URLGRAPHNET_PURE_PYTHON"):
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"

lstm_layer_forward = _impl.lstm_layer_forward
lstm_layer_backward = _impl.lstm_layer_backward


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND
