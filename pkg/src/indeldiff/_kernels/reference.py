"""Pure-numpy implementation of the hot chain-step kernels.

These three functions dominate the runtime of forward corruption and of the
reverse sampling chain; the compiled backend in ``_fast`` implements the same
contracts.  All category work here is over the *proper* index range 0..P-1,
with ``delstar_index`` marking freshly reinserted transient nodes.
"""

from __future__ import annotations

import numpy as np


class KernelError(ValueError):
    pass


def corrupt_categories(x0, abar, m, u_keep, u_cat):
    """Evolve categories through a keep-or-jump kernel.

    Item ``i`` keeps ``x0[i]`` with probability ``abar[i]`` and otherwise jumps
    to a draw from the marginal ``m``; ``u_keep``/``u_cat`` are uniforms.
    """
    x0 = np.asarray(x0, dtype=np.int64)
    abar = np.asarray(abar, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    u_keep = np.asarray(u_keep, dtype=np.float64)
    u_cat = np.asarray(u_cat, dtype=np.float64)
    cs = np.cumsum(m)
    jump = np.searchsorted(cs, u_cat, side="right")
    last_nonzero = int(np.max(np.nonzero(m)[0])) if np.any(m > 0) else 0
    jump = np.minimum(jump, last_nonzero)
    return np.where(u_keep < abar, x0, jump).astype(np.int64)


def reverse_step_probs(cats, p_theta, abar_t, abar_tm1, alpha_t, m, delstar_index):
    """Posterior over proper categories at t-1 for a batch of tracks.

    ``cats[i]`` is the current category (proper index, or ``delstar_index``
    for a transient node that must rematerialize); ``p_theta[i]`` is the
    predicted origin distribution; ``abar_t``/``abar_tm1`` are the cumulative
    keep probabilities over the windows (s_i, t] and (s_i, t-1]; ``alpha_t``
    is the single-step keep probability at t.  Origin categories with zero
    forward probability of the observation contribute nothing.
    """
    cats = np.asarray(cats, dtype=np.int64)
    p_theta = np.asarray(p_theta, dtype=np.float64)
    abar_t = np.asarray(abar_t, dtype=np.float64)
    abar_tm1 = np.asarray(abar_tm1, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    n, p = p_theta.shape
    out = np.empty((n, p), dtype=np.float64)

    is_star = cats == delstar_index
    if np.any(is_star):
        a1 = abar_tm1[is_star, None]
        out[is_star] = a1 * p_theta[is_star] + (1.0 - a1) * m[None, :]

    prop = ~is_star
    if np.any(prop):
        c = cats[prop]
        if np.any(c >= p) or np.any(c < 0):
            raise KernelError("current category outside the proper range")
        pt = p_theta[prop]
        at = abar_t[prop]
        a1 = abar_tm1[prop]
        m_c = m[c]
        d = np.repeat(((1.0 - at) * m_c)[:, None], p, axis=1)
        rows = np.arange(c.shape[0])
        d[rows, c] += at
        w = np.divide(pt, d, out=np.zeros_like(pt), where=d > 0)
        s_w = w.sum(axis=1)
        g = a1[:, None] * w + ((1.0 - a1) * s_w)[:, None] * m[None, :]
        post = ((1.0 - alpha_t) * m_c)[:, None] * g
        post[rows, c] += alpha_t * g[rows, c]
        out[prop] = post

    totals = out.sum(axis=1)
    if np.any(totals <= 0):
        raise KernelError("posterior has empty support")
    return out / totals[:, None]


def sample_categorical(probs, u):
    """Inverse-CDF draw per row; rows must be normalized."""
    probs = np.asarray(probs, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    cs = np.cumsum(probs, axis=1)
    pick = (u[:, None] >= cs).sum(axis=1)
    nz = probs > 0
    last_nonzero = probs.shape[1] - 1 - np.argmax(nz[:, ::-1], axis=1)
    return np.minimum(pick, last_nonzero).astype(np.int64)
