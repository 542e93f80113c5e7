"""Batched PARAFAC kernels with a compiled backend and a NumPy fallback.

The compiled module is used when it was built and ``TLRL_PURE_PYTHON`` is not
set. Both backends expose ``row_products``, ``accumulate`` and ``jvp`` with
identical signatures; see ``_pykernels`` for their definitions.
"""

import os

from . import _pykernels

BACKEND = "python"

if not os.environ.get("TLRL_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

row_products = _impl.row_products
accumulate = _impl.accumulate
jvp = _impl.jvp


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
