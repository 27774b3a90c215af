"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise
the numpy fallback. ``RYDSPS_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("RYDSPS_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels
BACKEND = "cython" if _ckernels is not None else "python"


def _impl(backend):
    name = backend or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable (have {sorted(BACKENDS)})") from None


def contaminant_chain(u, survive, p_c, train_len, backend=None):
    """uint8 contaminant-presence indicator per pulse (see ``_pykernels``)."""
    u = np.ascontiguousarray(u, dtype=np.float64)
    train_len = int(train_len)
    if train_len < 1:
        raise ValueError("train_len must be >= 1")
    return _impl(backend).contaminant_chain(u, float(survive), float(p_c), train_len)


def coincidence_histogram(t1, t2, bin_width, tau_max, backend=None):
    """int64 counts of pairs with ``t2 - t1`` in uniform bins over ``[-tau_max, tau_max)``.

    Both inputs must be sorted integer nanoseconds. ``2 * tau_max`` must be a
    multiple of ``bin_width``.
    """
    bin_width = int(bin_width)
    tau_max = int(tau_max)
    if bin_width <= 0 or tau_max <= 0:
        raise ValueError("bin_width and tau_max must be positive")
    if (2 * tau_max) % bin_width:
        raise ValueError("2 * tau_max must be a multiple of bin_width")
    t1 = np.ascontiguousarray(t1, dtype=np.int64)
    t2 = np.ascontiguousarray(t2, dtype=np.int64)
    return _impl(backend).coincidence_histogram(t1, t2, bin_width, tau_max)
