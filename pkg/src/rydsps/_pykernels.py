"""Pure numpy implementations of the hot loops.

These define the reference semantics; the Cython module must return
bit-identical arrays for identical inputs.
"""
import numpy as np

_PAIR_CHUNK = 4_000_000


def contaminant_chain(u, survive, p_c, train_len):
    """Presence indicator of a long-lived contaminant, pulse by pulse.

    Each train starts contaminant-free. With uniform draw ``u[i]``, a present
    contaminant survives when ``u[i] < survive`` and an absent one is created
    when ``u[i] < p_c``.

    Vectorized by classifying every pulse as set-to-1, set-to-0, copy or
    flip (which depends only on ``u[i]``), then forward-filling the last set
    value and applying the flip parity accumulated since.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.size
    if n == 0:
        return np.empty(0, np.uint8)
    n_rows = -(-n // train_len)
    pad = n_rows * train_len - n
    uu = np.concatenate([u, np.ones(pad)]).reshape(n_rows, train_len)
    if_present = uu < survive
    if_absent = uu < p_c
    is_set = if_present == if_absent
    flip = ~if_present & if_absent
    idx = np.broadcast_to(np.arange(train_len), uu.shape)
    last = np.maximum.accumulate(np.where(is_set, idx, -1), axis=1)
    parity = np.cumsum(flip, axis=1, dtype=np.int64)
    rows = np.arange(n_rows)[:, None]
    safe = np.maximum(last, 0)
    base = np.where(last >= 0, if_present[rows, safe], False)
    parity_at_set = np.where(last >= 0, parity[rows, safe], 0)
    x = base ^ (((parity - parity_at_set) & 1) == 1)
    return x.ravel()[:n].astype(np.uint8)


def coincidence_histogram(t1, t2, bin_width, tau_max):
    """All-pairs histogram of ``t2 - t1`` over ``[-tau_max, tau_max)``."""
    t1 = np.asarray(t1, dtype=np.int64)
    t2 = np.asarray(t2, dtype=np.int64)
    nbins = (2 * tau_max) // bin_width
    counts = np.zeros(nbins, dtype=np.int64)
    if t1.size == 0 or t2.size == 0:
        return counts
    lo = np.searchsorted(t2, t1 - tau_max, side="left")
    hi = np.searchsorted(t2, t1 + tau_max, side="left")
    n_pairs = hi - lo
    cum = np.cumsum(n_pairs)
    start = 0
    while start < t1.size:
        # chunk so the expanded pair arrays stay bounded
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _PAIR_CHUNK, side="right"))
        stop = max(stop, start + 1)
        k = n_pairs[start:stop]
        total = int(k.sum())
        if total:
            i = np.repeat(np.arange(start, stop), k)
            first = np.repeat(np.cumsum(k) - k, k)
            j = np.arange(total) - first + np.repeat(lo[start:stop], k)
            b = (t2[j] - t1[i] + tau_max) // bin_width
            counts += np.bincount(b, minlength=nbins)
        start = stop
    return counts
