"""NumPy implementations of the batched PARAFAC kernels.

Every kernel works on the *state modes* of a factor model: a list of ``D``
matrices ``F[d]`` of shape ``(N_d, K)`` and an integer index array ``idx`` of
shape ``(n, D)``. Row products are taken over the selected rows only, so the
cost is ``O(n D K)`` regardless of the tensor size.
"""

import numpy as np


def _gather(factors, idx):
    # (n, D, K) stack of the selected rows
    return np.stack([f[idx[:, d]] for d, f in enumerate(factors)], axis=1)


def _leave_one_out(rows):
    n, D, K = rows.shape
    prefix = np.ones((n, D, K))
    suffix = np.ones((n, D, K))
    for d in range(1, D):
        prefix[:, d] = prefix[:, d - 1] * rows[:, d - 1]
    for d in range(D - 2, -1, -1):
        suffix[:, d] = suffix[:, d + 1] * rows[:, d + 1]
    return prefix * suffix


def row_products(factors, idx):
    """Return ``P[n, k] = prod_d F[d][idx[n, d], k]``."""
    idx = np.asarray(idx, dtype=np.int64)
    return np.prod(_gather(factors, idx), axis=1)


def accumulate(factors, idx, weights, grads):
    """Scatter ``weights[n, k] * prod_{j != d} F[j][idx[n, j], k]`` into ``grads[d]``.

    ``grads`` is a list of arrays shaped like ``factors``; it is updated in place.
    """
    idx = np.asarray(idx, dtype=np.int64)
    loo = _leave_one_out(_gather(factors, idx))
    for d, g in enumerate(grads):
        np.add.at(g, idx[:, d], weights * loo[:, d])


def jvp(factors, tangents, idx):
    """Directional derivative of the row products along ``tangents``.

    Returns ``J[n, k] = sum_d T[d][idx[n, d], k] * prod_{j != d} F[j][idx[n, j], k]``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    loo = _leave_one_out(_gather(factors, idx))
    return np.sum(_gather(tangents, idx) * loo, axis=1)
