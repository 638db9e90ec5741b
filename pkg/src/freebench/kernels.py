"""Backend selection for the continuum kernels.

The compiled module is used when it imports; set ``FREEBENCH_BACKEND=python``
to force the pure-Python implementation.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("FREEBENCH_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass

residual = _impl.residual
continuum_batch = _impl.continuum_batch

OK = _pykernels.OK
NO_BRACKET = _pykernels.NO_BRACKET
NOT_CONVERGED = _pykernels.NOT_CONVERGED
BAD_STRETCH = _pykernels.BAD_STRETCH
