"""Pure NumPy implementations of the hot kernels.

These are the reference versions; ``_ckernels`` must agree with them to
round-off.  All functions take and return float64 arrays and never mutate
their inputs.
"""

import numpy as np


def sign_sum_sorted(x, w):
    """Return ``s_i = sum_j w_j sign(x_i - x_j)`` for nondecreasing ``x``.

    Ties contribute zero, so ``sign(0) = 0`` is used throughout.
    """
    csum = np.concatenate(([0.0], np.cumsum(w)))
    below = csum[np.searchsorted(x, x, side="left")]
    above = csum[-1] - csum[np.searchsorted(x, x, side="right")]
    return below - above


def pressure_gradient(chi, m):
    """Discrete ``d/d eta`` of the face pressure ``(n * dchi)^(-m)``.

    Returns ``n * (P[i+1/2] - P[i-1/2])`` with vacuum faces at both ends, or
    ``None`` if two adjacent nodes are not strictly increasing.
    """
    n = chi.size
    d = np.diff(chi)
    if not np.all(d > 0.0):
        return None
    p = np.zeros(n + 1)
    p[1:-1] = (n * d) ** (-m)
    return n * (p[1:] - p[:-1])


def merge_cascade(x, v, s, tol):
    """Merge adjacent clusters until positions are strictly ordered.

    Clusters are processed left to right with a stack; whenever the top two
    are closer than ``tol`` (or inverted) they fuse into their mass-weighted
    mean with momentum-conserving velocity.  ``s`` holds integer cell counts
    stored as floats, so masses stay exact.

    Returns ``(x, v, s, events)``; each row of ``events`` is
    ``(s_left, s_right, v_left, v_right)`` for one binary merge.
    """
    xs, vs, ss = [], [], []
    events = []
    for xi, vi, si in zip(x.tolist(), v.tolist(), s.tolist()):
        xs.append(xi)
        vs.append(vi)
        ss.append(si)
        while len(xs) > 1 and xs[-1] - xs[-2] <= tol:
            x2, v2, s2 = xs.pop(), vs.pop(), ss.pop()
            x1, v1, s1 = xs[-1], vs[-1], ss[-1]
            total = s1 + s2
            events.append((s1, s2, v1, v2))
            xs[-1] = (s1 * x1 + s2 * x2) / total
            vs[-1] = (s1 * v1 + s2 * v2) / total
            ss[-1] = total
    return (
        np.array(xs, dtype=float),
        np.array(vs, dtype=float),
        np.array(ss, dtype=float),
        np.array(events, dtype=float).reshape(-1, 4),
    )


def pairwise_sum(x, w, dfun, chunk=512):
    """``sum_j w_j dfun(x_i - x_j)`` for an arbitrary odd callable.

    Evaluated in row blocks to bound memory at ``chunk * n`` doubles.
    """
    out = np.empty_like(x)
    for start in range(0, x.size, chunk):
        block = x[start:start + chunk, None] - x[None, :]
        vals = dfun(block)
        vals[block == 0.0] = 0.0
        out[start:start + chunk] = vals @ w
    return out
