"""Approximate controllability of the linearised transverse dynamics.

Around ``Z = 0, z = 1`` the transverse component obeys
``dZ/dt = i w Z - w_ctl(t)``, so

    Z(T, w) = (Z0(w) - int_0^T w_ctl(t) exp(-i w t) dt) * exp(i w T).

To steer ``0`` to a target ``Zf`` the target is written as
``Zf(w) = exp(i w T/2) * P(i w)`` up to ``eta/2`` with a polynomial ``P``,
and the control is ``-P(d/dt)`` applied to a narrow bump centred at
``T/2``.  Its endpoint is ``P(i w) * ghat_eps(w) * exp(i w T)``, which tends
to ``Zf`` as the bump width ``eps`` goes to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .bloch import OmegaGrid
from .errors import CrossCheckFailed, DegreeInsufficient, EpsUnderflow, PreconditionError
from .quadrature import oscillatory_integral

MAX_BUMP_DERIVATIVE = 20
CSV_COLUMNS = ("t", "re_w", "im_w")


@dataclass(frozen=True, eq=False)
class SampledControl:
    """Complex control ``w = -v + i u`` sampled uniformly on ``[t0, t1]``."""

    t0: float
    t1: float
    samples: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.samples, dtype=complex)
        if w.ndim != 1 or w.size < 2:
            raise PreconditionError("a sampled control needs at least two samples")
        if not self.t1 > self.t0:
            raise PreconditionError("t1 must exceed t0")
        object.__setattr__(self, "samples", w)

    @classmethod
    def constant(cls, value: complex, t0: float, t1: float, n: int = 1025) -> "SampledControl":
        return cls(t0, t1, np.full(n, value, dtype=complex))

    @classmethod
    def from_function(cls, func, t0: float, t1: float, n: int = 1025) -> "SampledControl":
        t = np.linspace(t0, t1, n)
        return cls(t0, t1, np.asarray(func(t), dtype=complex))

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.samples.size)

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.samples.size - 1)

    def l2_norm(self) -> float:
        return math.sqrt(float(np.trapezoid(np.abs(self.samples) ** 2, self.times)))

    def l1_norm(self) -> float:
        return float(np.trapezoid(np.abs(self.samples), self.times))

    def scaled(self, factor: complex) -> "SampledControl":
        return SampledControl(self.t0, self.t1, factor * self.samples)

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation, zero outside ``[t0, t1]``."""
        t = np.asarray(t, dtype=float)
        tt = self.times
        re = np.interp(t, tt, self.samples.real, left=0.0, right=0.0)
        im = np.interp(t, tt, self.samples.imag, left=0.0, right=0.0)
        return re + 1j * im


@dataclass(frozen=True, eq=False)
class MollifierSpec:
    center: float
    eps: float
    poly: Polynomial


@dataclass(frozen=True)
class ReachReport:
    degree: int
    eps: float
    achieved_error: float
    crosscheck_error: float
    n_samples: int


def _omega(grid) -> np.ndarray:
    return grid.nodes if isinstance(grid, OmegaGrid) else np.atleast_1d(np.asarray(grid, dtype=float))


def lin_endpoint(z0, grid, control: SampledControl, T: float) -> np.ndarray:
    """Endpoint of the linearised transverse dynamics at time ``T``.

    The time integral uses the product trapezoid rule (linear interpolation
    of the control, exact oscillatory factor).

    Parameters
    ----------
    z0 : array_like or scalar
        Initial transverse values at the frequency nodes.
    grid : OmegaGrid or array_like
        Frequencies.
    control : SampledControl
        Must lie inside ``[0, T]``.
    """
    w = _omega(grid)
    if control.t0 < -1e-12 or control.t1 > T + 1e-12:
        raise PreconditionError("control must be supported inside [0, T]")
    forced = oscillatory_integral(control.samples, control.times, w)
    z0 = np.broadcast_to(np.asarray(z0, dtype=complex), w.shape)
    return (z0 - forced) * np.exp(1j * w * T)


# ---------------------------------------------------------------------------
# polynomial fit
# ---------------------------------------------------------------------------

def weierstrass_fit(zf, grid, T: float, eta: float, deg_max: int = 20) -> Polynomial:
    """Lowest-degree ``P`` with ``sup |Zf(w) exp(-i w T/2) - P(i w)| < eta/2``.

    Least squares in the scaled monomials ``(i w / w_max)**j``; degrees are
    tried in increasing order.

    Raises
    ------
    DegreeInsufficient
        If no degree up to ``deg_max`` reaches the tolerance.
    """
    w = _omega(grid)
    target = np.asarray(zf, dtype=complex) * np.exp(-0.5j * w * T)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    s = 1j * w / scale
    best = np.inf
    for deg in range(deg_max + 1):
        basis = s[:, None] ** np.arange(deg + 1)[None, :]
        coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
        resid = float(np.max(np.abs(basis @ coef - target)))
        best = min(best, resid)
        if resid < eta / 2:
            return Polynomial(coef / scale ** np.arange(deg + 1))
    raise DegreeInsufficient(f"best residual {best:.3e} with degree <= {deg_max} is not below {eta / 2:.3e}")


# ---------------------------------------------------------------------------
# bump and its derivatives
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _bump_normaliser() -> float:
    val, _ = integrate.quad(lambda y: math.exp(-1.0 / (1.0 - y * y)), -1.0, 1.0,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return 1.0 / val


@lru_cache(maxsize=None)
def _bump_numerators() -> tuple:
    """Polynomials ``p_n`` with ``g^(n)(y) = p_n(y) g(y) / (1 - y^2)**(2n)``."""
    y = Polynomial([0.0, 1.0])
    one_minus = Polynomial([1.0, 0.0, -1.0])
    polys = [Polynomial([1.0])]
    for n in range(MAX_BUMP_DERIVATIVE):
        p = polys[-1]
        polys.append(one_minus ** 2 * p.deriv() + (4 * n * y * one_minus - 2 * y) * p)
    return tuple(polys)


def bump_derivative(n: int, y) -> np.ndarray:
    """``n``-th derivative of the unit-mass bump ``C exp(-1/(1 - y^2))``."""
    if not 0 <= n <= MAX_BUMP_DERIVATIVE:
        raise PreconditionError(f"derivative order must be in [0, {MAX_BUMP_DERIVATIVE}]")
    y = np.asarray(y, dtype=float)
    u = 1.0 - y * y
    inside = u > 0
    safe = np.where(inside, u, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        weight = np.exp(-1.0 / safe - 2 * n * np.log(safe))
    val = _bump_normaliser() * _bump_numerators()[n](y) * weight
    return np.where(inside, val, 0.0)


_BUMP_Y = np.linspace(-1.0, 1.0, 4001)


def bump_transform(omega, eps: float, center: float) -> np.ndarray:
    """``ghat_eps(w) = int g_eps(t) exp(-i w t) dt`` for the bump centred at ``center``."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    g = bump_derivative(0, _BUMP_Y)
    # the bump is flat to all orders at +-1, so the trapezoid rule is spectrally accurate
    kernel = np.trapezoid(g[None, :] * np.cos(np.outer(w * eps, _BUMP_Y)), _BUMP_Y, axis=1)
    return kernel * np.exp(-1j * w * center)


def mollified_control(spec: MollifierSpec, T: float, n_samples: int = 4097) -> SampledControl:
    """Samples of ``-P(d/dt) g_eps`` on ``[0, T]``."""
    if spec.poly.degree() > MAX_BUMP_DERIVATIVE:
        raise PreconditionError(f"polynomial degree above {MAX_BUMP_DERIVATIVE}")
    if not (spec.center - spec.eps >= 0 and spec.center + spec.eps <= T):
        raise PreconditionError("bump support must lie inside [0, T]")
    t = np.linspace(0.0, T, n_samples)
    y = (t - spec.center) / spec.eps
    w = np.zeros(n_samples, dtype=complex)
    for j, c in enumerate(spec.poly.coef):
        if c != 0:
            w -= c * bump_derivative(j, y) / spec.eps ** (j + 1)
    return SampledControl(0.0, T, w)


def closed_form_endpoint(spec: MollifierSpec, grid, T: float) -> np.ndarray:
    """``P(i w) ghat_eps(w) exp(i w T)``."""
    w = _omega(grid)
    return spec.poly(1j * w) * bump_transform(w, spec.eps, spec.center) * np.exp(1j * w * T)


def approx_reach(zf, grid, T: float, eta: float, deg_max: int = 20, crosscheck_tol: float = 2e-3):
    """Control steering ``Z0 = 0`` to within ``eta`` of ``Zf`` at time ``T``.

    Returns
    -------
    (SampledControl, ReachReport)

    Raises
    ------
    DegreeInsufficient
        From the polynomial fit.
    EpsUnderflow
        If the bump would have to be narrower than ``1e-6 * T``.
    CrossCheckFailed
        If the sampled control's endpoint disagrees with the closed form.
    """
    w = _omega(grid)
    if not T > 0:
        raise PreconditionError("T must be positive")
    zf = np.broadcast_to(np.asarray(zf, dtype=complex), w.shape)
    if not np.any(zf):
        control = SampledControl(0.0, T, np.zeros(2, dtype=complex))
        return control, ReachReport(0, 0.0, 0.0, 0.0, 2)
    poly = weierstrass_fit(zf, w, T, eta, deg_max)
    eps = T / 4
    while True:
        if eps < 1e-6 * T:
            raise EpsUnderflow(f"eps fell below {1e-6 * T:.3e}")
        spec = MollifierSpec(T / 2, eps, poly)
        err = float(np.max(np.abs(closed_form_endpoint(spec, w, T) - zf)))
        if err < eta:
            break
        eps /= 2
    n = max(4097, int(2 ** math.ceil(math.log2(400 * T / eps))) + 1)
    control = mollified_control(spec, T, n)
    check = float(np.max(np.abs(lin_endpoint(0.0, w, control, T) - closed_form_endpoint(spec, w, T))))
    if check > crosscheck_tol:
        raise CrossCheckFailed(f"sampled and closed-form endpoints differ by {check:.3e}")
    return control, ReachReport(poly.degree(), eps, err, check, n)
