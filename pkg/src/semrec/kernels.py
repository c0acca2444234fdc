"""Kernel backend selection.

The compiled extension is used when it imports; setting ``SEMREC_PURE_PYTHON=1``
forces the numpy fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _pykernels

if os.environ.get("SEMREC_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

conv_pool_forward = _impl.conv_pool_forward
conv_pool_backward = _impl.conv_pool_backward
fnv1a64 = _impl.fnv1a64
