"""Backend selection for the rollout kernels.

The compiled extension is used when it was built and imports cleanly;
otherwise the NumPy implementation is used. Set ``COMPGRAD_PURE_PYTHON=1``
to force the fallback.
"""

import os

from compgrad import _pykernels

python_backend = _pykernels

if os.environ.get("COMPGRAD_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from compgrad import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

pushing_rollout = backend.pushing_rollout
friction_rollout = backend.friction_rollout

__all__ = ["BACKEND", "backend", "compiled_backend", "python_backend", "pushing_rollout", "friction_rollout"]
