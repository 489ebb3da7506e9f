"""Kernel backend selection: compiled extension when available, numpy otherwise.

Set ``SPIKEFLAG_NO_EXT=1`` to force the pure-numpy fallback (used by the
benchmark and the backend-parity tests).
"""

import os

from . import _lifnumpy

if os.environ.get("SPIKEFLAG_NO_EXT") == "1":
    _impl = _lifnumpy
    BACKEND = "numpy"
else:
    try:
        from . import _lifkernel as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _lifnumpy
        BACKEND = "numpy"

forward_seq = _impl.forward_seq
backward_seq = _impl.backward_seq
surrogate_grad = _lifnumpy.surrogate_grad
relaxed_spike = _lifnumpy.relaxed_spike


def backend():
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return BACKEND
