"""Product-trapezoid rule for ``int g(t) exp(-i w t) dt``.

``g`` is interpolated linearly between samples and the oscillatory factor is
integrated exactly, so the error is ``O(h**2 g'')`` whatever the size of
``w * h``.  For ``w = 0`` it reduces to the ordinary trapezoid rule.
"""

from __future__ import annotations

import numpy as np

_SERIES = 1e-2


def filon_weights(theta):
    """Weights ``(I0 - I1, I1)`` with ``I0 = int_0^1 e^{-i theta s} ds`` and
    ``I1 = int_0^1 s e^{-i theta s} ds``."""
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < _SERIES
    safe = np.where(small, 1.0, th)
    e = np.exp(-1j * safe)
    i0 = (1.0 - e) / (1j * safe)
    i1 = e / (-1j * safe) + i0 / (1j * safe)
    # Taylor series: sum_k (-i th)^k / (k! (k+1)) and sum_k (-i th)^k / (k! (k+2))
    x = -1j * th
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(8):
        s0 = s0 + term / (k + 1)
        s1 = s1 + term / (k + 2)
        term = term * x / (k + 1)
    i0 = np.where(small, s0, i0)
    i1 = np.where(small, s1, i1)
    return i0 - i1, i1


def oscillatory_cumulative(g, t, omega) -> np.ndarray:
    """Running integrals ``int_{t_0}^{t_j} g(s) exp(-i w s) ds``.

    Parameters
    ----------
    g : array_like, shape (n_t,) or (n_t, n_w)
        Samples at the uniform times ``t``.
    t : array_like, shape (n_t,)
    omega : array_like, shape (n_w,)

    Returns
    -------
    numpy.ndarray, shape (n_t, n_w)
        First row is zero.
    """
    t = np.asarray(t, dtype=float)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g = np.asarray(g, dtype=complex)
    if g.ndim == 1:
        g = g[:, None]
    h = t[1] - t[0]
    wa, wb = filon_weights(w * h)
    phase = np.exp(-1j * np.outer(t[:-1], w))
    inc = h * phase * (wa[None, :] * g[:-1] + wb[None, :] * g[1:])
    out = np.zeros((t.size, w.size), dtype=complex)
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def oscillatory_integral(g, t, omega) -> np.ndarray:
    """``int g(s) exp(-i w s) ds`` over the whole sample range."""
    t = np.asarray(t, dtype=float)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g = np.asarray(g, dtype=complex)
    h = t[1] - t[0]
    wa, wb = filon_weights(w * h)
    phase = np.exp(-1j * np.outer(w, t[:-1]))
    return h * (phase * (wa[:, None] * g[None, :-1] + wb[:, None] * g[None, 1:])).sum(axis=1)
