"""Fourier coefficients of even extensions and the absolute-sum norm.

A function ``f`` sampled on ``[0, pi]`` is extended evenly to ``(-pi, pi)``
and expanded as ``sum_n c_n exp(i n w)``.  The norm used throughout the
package is ``N(f) = sum_n |c_n|``, which dominates the sup norm and is
submultiplicative.

Samples on a grid spanning the whole of ``[-pi, pi]`` are expanded
directly (:func:`full_spectrum`); for an even function both routes agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bloch import EnsembleState, OmegaGrid
from .errors import PreconditionError

DEFAULT_N_MAX = 256


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Coefficients ``c_n`` for ``n = -n_max..n_max``.

    ``coefficients[n + n_max]`` holds ``c_n``.  ``tail_estimate`` is a
    heuristic bound on the mass beyond ``n_max`` (``|c_{n_max}| * n_max``).
    """

    coefficients: np.ndarray
    tail_estimate: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise PreconditionError("coefficient array must have odd length 2*n_max+1")
        object.__setattr__(self, "coefficients", c)

    @property
    def n_max(self) -> int:
        return (self.coefficients.size - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def __getitem__(self, n: int) -> complex:
        if abs(n) > self.n_max:
            return 0j
        return complex(self.coefficients[n + self.n_max])

    @classmethod
    def from_dict(cls, coeffs: dict, n_max: int | None = None) -> "Spectrum":
        """Build from a sparse mapping ``{n: c_n}``."""
        top = max((abs(int(n)) for n in coeffs), default=0)
        n_max = top if n_max is None else int(n_max)
        if top > n_max:
            raise PreconditionError("index beyond n_max")
        c = np.zeros(2 * n_max + 1, dtype=complex)
        for n, v in coeffs.items():
            c[int(n) + n_max] = v
        return cls(c)

    def norm(self) -> float:
        return n_norm(self)

    def tail_mass(self, k: int) -> float:
        """``sum_{|n| >= k} |c_n|``."""
        mags = np.abs(self.coefficients)
        idx = np.abs(self.indices)
        return math.fsum(mags[idx >= k])


def is_full_period(grid: OmegaGrid, tol: float = 1e-12) -> bool:
    """True if the grid spans ``[-pi, pi]``."""
    return abs(grid.omega_min + np.pi) <= tol and abs(grid.omega_max - np.pi) <= tol


@lru_cache(maxsize=16)
def _exp_table(nodes_key: bytes, n_max: int) -> np.ndarray:
    nodes = np.frombuffer(nodes_key, dtype=float)
    return np.exp(-1j * np.outer(np.arange(-n_max, n_max + 1), nodes))


@lru_cache(maxsize=16)
def _cosine_table(nodes_key: bytes, n_max: int) -> np.ndarray:
    nodes = np.frombuffer(nodes_key, dtype=float)
    return np.cos(np.outer(np.arange(n_max + 1), nodes))


def even_extension_spectrum(samples, grid: OmegaGrid, n_max: int = DEFAULT_N_MAX) -> Spectrum:
    """Fourier coefficients of the even extension of ``samples``.

    ``c_n = (1/pi) * int f(w) cos(n w) dw`` over the grid span, evaluated by
    the composite trapezoid rule, so ``c_{-n} = c_n``.

    Parameters
    ----------
    samples : array_like
        Real or complex values at the grid nodes.
    grid : OmegaGrid
        Nodes inside ``[0, pi]``.
    n_max : int
        Highest retained index.
    """
    w = grid.nodes
    if w[0] < -1e-12 or w[-1] > np.pi + 1e-12:
        raise PreconditionError("even-extension spectra need a grid inside [0, pi]")
    f = np.asarray(samples)
    if f.shape != w.shape:
        raise PreconditionError("samples must match the grid")
    if n_max < 0:
        raise PreconditionError("n_max must be non-negative")
    table = _cosine_table(w.tobytes(), int(n_max))
    half = np.trapezoid(table * f[None, :], w, axis=1) / np.pi
    coeffs = np.concatenate([half[:0:-1], half])
    tail = abs(half[-1]) * n_max
    return Spectrum(coeffs, float(tail))


def full_spectrum(samples, grid: OmegaGrid, n_max: int = DEFAULT_N_MAX) -> Spectrum:
    """Coefficients ``(1/2pi) int f(w) exp(-i n w) dw`` on a grid spanning ``[-pi, pi]``.

    Trapezoid rule; the tail estimate is ``max(|c_{-n_max}|, |c_{n_max}|) * n_max``.
    """
    if not is_full_period(grid):
        raise PreconditionError("full spectra need a grid spanning [-pi, pi]")
    f = np.asarray(samples)
    if f.shape != grid.nodes.shape:
        raise PreconditionError("samples must match the grid")
    table = _exp_table(grid.nodes.tobytes(), int(n_max))
    c = np.trapezoid(table * f[None, :], grid.nodes, axis=1) / (2.0 * np.pi)
    return Spectrum(c, float(max(abs(c[0]), abs(c[-1])) * n_max))


def spectrum_of(samples, grid: OmegaGrid, n_max: int = DEFAULT_N_MAX) -> Spectrum:
    """Full spectrum on ``[-pi, pi]`` grids, even-extension spectrum otherwise."""
    if is_full_period(grid):
        return full_spectrum(samples, grid, n_max)
    return even_extension_spectrum(samples, grid, n_max)


def n_norm(spectrum: Spectrum) -> float:
    """Absolute sum of the coefficients."""
    return math.fsum(np.abs(spectrum.coefficients))


def synthesize(spectrum: Spectrum, omega) -> np.ndarray:
    """Evaluate ``sum_n c_n exp(i n w)`` at ``omega``."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    basis = np.exp(1j * np.outer(w, spectrum.indices))
    out = basis @ spectrum.coefficients
    return out if np.ndim(omega) else out[0]


def convolve(a: Spectrum, b: Spectrum) -> Spectrum:
    """Spectrum of the product; indices run to ``n_max(a) + n_max(b)``."""
    return Spectrum(np.convolve(a.coefficients, b.coefficients),
                    a.tail_estimate + b.tail_estimate)


def conjugate(s: Spectrum) -> Spectrum:
    """Spectrum of ``conj(f)`` (``c_n -> conj(c_{-n})``)."""
    return Spectrum(np.conj(s.coefficients[::-1]), s.tail_estimate)


@dataclass(frozen=True)
class PoleDistance:
    n_x: float
    n_y: float
    n_z_shift: float
    n_Z: float
    pole: int

    @property
    def total(self) -> float:
        """``N(x) + N(y) + N(z - pole)``."""
        return self.n_x + self.n_y + self.n_z_shift


def pole_distance(state: EnsembleState, pole: int = 1, n_max: int = DEFAULT_N_MAX) -> PoleDistance:
    """Norms of ``x``, ``y``, ``z - pole`` and ``Z = x + i y``.

    Parameters
    ----------
    pole : {+1, -1}
        Which pole of the sphere to measure against.
    """
    if pole not in (1, -1):
        raise PreconditionError("pole must be +1 or -1")
    g = state.grid
    nx = n_norm(spectrum_of(state.x, g, n_max))
    ny = n_norm(spectrum_of(state.y, g, n_max))
    nz = n_norm(spectrum_of(state.z - pole, g, n_max))
    nZ = n_norm(spectrum_of(state.transverse, g, n_max))
    return PoleDistance(nx, ny, nz, nZ, pole)


def nearest_pole(state: EnsembleState) -> int:
    return 1 if float(np.mean(state.z)) >= 0 else -1


def n_distance(a: EnsembleState, b: EnsembleState, n_max: int = DEFAULT_N_MAX) -> float:
    """``N(x_a - x_b) + N(y_a - y_b) + N(z_a - z_b)`` on a shared grid."""
    if len(a.grid) != len(b.grid) or not np.array_equal(a.omega, b.omega):
        raise PreconditionError("states live on different grids")
    d = a.m - b.m
    return math.fsum(n_norm(spectrum_of(d[:, j], a.grid, n_max)) for j in range(3))
