"""Backend selection for the trellis kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation. Set ``HARQERR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("HARQERR_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

encode_batch = _impl.encode_batch
viterbi_batch = _impl.viterbi_batch

__all__ = ["BACKEND", "encode_batch", "viterbi_batch"]
