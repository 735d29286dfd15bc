"""Ensemble of Bloch equations driven by a common control.

Every frequency node ``omega`` carries a unit vector ``M = (x, y, z)`` that
obeys ``dM/dt = (omega * OMEGA_Z + u * OMEGA_X + v * OMEGA_Y) M``.  The
generators are the infinitesimal rotations about the coordinate axes, so an
axis vector ``(a, b, c)`` corresponds to the matrix
``a*OMEGA_X + b*OMEGA_Y + c*OMEGA_Z`` and its exponential is the rotation by
``|(a, b, c)|`` about that axis.

Controls are sequences of impulses (:class:`Dirac`) and constant segments
(:class:`Constant`) collected in a :class:`ControlSchedule`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import PreconditionError, ScheduleError

OMEGA_X = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
OMEGA_Y = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
OMEGA_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

DEFAULT_NODES = 1025
NORM_TOL = 1e-9
_SERIES_CUTOFF = 1e-8


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def hat(axis) -> np.ndarray:
    """Map axis vectors ``(..., 3)`` to generator matrices ``(..., 3, 3)``."""
    a = np.asarray(axis)
    out = np.zeros(a.shape[:-1] + (3, 3), dtype=a.dtype if np.iscomplexobj(a) else float)
    out[..., 0, 1] = -a[..., 2]
    out[..., 0, 2] = a[..., 1]
    out[..., 1, 0] = a[..., 2]
    out[..., 1, 2] = -a[..., 0]
    out[..., 2, 0] = -a[..., 1]
    out[..., 2, 1] = a[..., 0]
    return out


def _rodrigues_coefficients(theta: np.ndarray):
    """Return ``sin(t)/t`` and ``(1 - cos t)/t**2`` with a series near zero."""
    small = theta < _SERIES_CUTOFF
    safe = np.where(small, 1.0, theta)
    th2 = theta * theta
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    # 2 sin^2(t/2) avoids the cancellation in 1 - cos t
    b = np.where(small, 0.5 - th2 / 24.0, 2.0 * np.sin(0.5 * safe) ** 2 / (safe * safe))
    return a, b


def so3_exp(axis) -> np.ndarray:
    """Matrix exponential of ``a*OMEGA_X + b*OMEGA_Y + c*OMEGA_Z``.

    Parameters
    ----------
    axis : array_like, shape (3,) or (..., 3)
        Rotation vectors; batches are supported.

    Returns
    -------
    numpy.ndarray
        Orthogonal matrices of shape ``(..., 3, 3)``.
    """
    a = np.asarray(axis, dtype=float)
    if a.shape[-1] != 3:
        raise ValueError("axis must have trailing dimension 3")
    theta = np.linalg.norm(a, axis=-1)
    c1, c2 = _rodrigues_coefficients(theta)
    k = hat(a)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + c1[..., None, None] * k + c2[..., None, None] * (k @ k)


def rotate_vectors(axes: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Apply ``so3_exp(axes[i])`` to ``vectors[i]`` without forming matrices."""
    axes = np.asarray(axes, dtype=float)
    theta = np.linalg.norm(axes, axis=-1)
    c1, c2 = _rodrigues_coefficients(theta)
    kv = np.cross(axes, vectors)
    kkv = np.cross(axes, kv)
    return vectors + c1[..., None] * kv + c2[..., None] * kkv


# ---------------------------------------------------------------------------
# grids and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OmegaGrid:
    """Strictly increasing frequency nodes."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise PreconditionError("an OmegaGrid needs at least two nodes")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0):
            raise PreconditionError("grid nodes must be finite and strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, omega_min: float, omega_max: float, n: int = DEFAULT_NODES) -> "OmegaGrid":
        if not omega_max > omega_min:
            raise PreconditionError("omega_max must exceed omega_min")
        return cls(np.linspace(omega_min, omega_max, int(n)))

    @property
    def omega_min(self) -> float:
        return float(self.nodes[0])

    @property
    def omega_max(self) -> float:
        return float(self.nodes[-1])

    def __len__(self) -> int:
        return self.nodes.size

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        d = np.diff(self.nodes)
        return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Unit vectors ``m[i] = (x, y, z)`` at each grid node."""

    grid: OmegaGrid
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (len(self.grid), 3):
            raise PreconditionError(f"state must have shape ({len(self.grid)}, 3), got {m.shape}")
        dev = np.max(np.abs(np.linalg.norm(m, axis=1) - 1.0))
        if not dev <= NORM_TOL:
            raise PreconditionError(f"state vectors must have unit norm (max deviation {dev:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def constant(cls, grid: OmegaGrid, vector=E3) -> "EnsembleState":
        v = np.asarray(vector, dtype=float)
        return cls(grid, np.tile(v / np.linalg.norm(v), (len(grid), 1)))

    @classmethod
    def from_transverse(cls, grid: OmegaGrid, transverse, hemisphere: int = 1) -> "EnsembleState":
        """Build a state from ``Z = x + i y`` with ``z = hemisphere*sqrt(1-|Z|^2)``."""
        zc = np.broadcast_to(np.asarray(transverse, dtype=complex), grid.nodes.shape)
        r2 = np.abs(zc) ** 2
        if np.any(r2 > 1.0):
            raise PreconditionError("|Z| must not exceed 1")
        z = np.sign(hemisphere) * np.sqrt(1.0 - r2)
        return cls(grid, np.column_stack([zc.real, zc.imag, z]))

    @property
    def omega(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def x(self) -> np.ndarray:
        return self.m[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.m[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.m[:, 2]

    @property
    def transverse(self) -> np.ndarray:
        """Complex transverse component ``Z = x + i y``."""
        return self.m[:, 0] + 1j * self.m[:, 1]

    def with_vectors(self, m: np.ndarray) -> "EnsembleState":
        return EnsembleState(self.grid, m)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dirac:
    """Impulse ``exp(beta*OMEGA_X + gamma*OMEGA_Y)`` applied at ``time``."""

    time: float
    beta: float
    gamma: float = 0.0

    @property
    def start(self) -> float:
        return self.time

    @property
    def end(self) -> float:
        return self.time

    @property
    def amplitude(self) -> float:
        return abs(self.beta) + abs(self.gamma)

    def shifted(self, dt: float) -> "Dirac":
        return Dirac(self.time + dt, self.beta, self.gamma)


@dataclass(frozen=True)
class Constant:
    """Constant controls ``(u, v)`` on ``[t0, t1]``."""

    t0: float
    t1: float
    u: float
    v: float = 0.0

    @property
    def start(self) -> float:
        return self.t0

    @property
    def end(self) -> float:
        return self.t1

    def shifted(self, dt: float) -> "Constant":
        return Constant(self.t0 + dt, self.t1 + dt, self.u, self.v)


PulseEvent = Union[Dirac, Constant]


@dataclass(frozen=True)
class ControlSchedule:
    """Time-ordered pulse events on ``[0, horizon]``.

    Coincident impulses are allowed and act in list order.  Constant
    segments may not overlap each other, and an impulse may not fall strictly
    inside a segment.
    """

    events: tuple = field(default_factory=tuple)
    horizon: float = 0.0

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        _validate(events, float(self.horizon))
        object.__setattr__(self, "horizon", float(self.horizon))

    # -- construction helpers ------------------------------------------------
    @classmethod
    def empty(cls, horizon: float = 0.0) -> "ControlSchedule":
        return cls((), horizon)

    def shifted(self, dt: float) -> "ControlSchedule":
        return ControlSchedule(tuple(e.shifted(dt) for e in self.events), self.horizon + dt)

    def then(self, other: "ControlSchedule") -> "ControlSchedule":
        """Run ``self`` followed by ``other``."""
        moved = tuple(e.shifted(self.horizon) for e in other.events)
        return ControlSchedule(self.events + moved, self.horizon + other.horizon)

    def split(self, s: float):
        """Cut at time ``s``; the second part is shifted to start at zero."""
        if not 0.0 <= s <= self.horizon:
            raise PreconditionError("split time outside [0, horizon]")
        first, second = [], []
        for e in self.events:
            if isinstance(e, Dirac):
                (first if e.time <= s else second).append(e)
            elif e.t1 <= s:
                first.append(e)
            elif e.t0 >= s:
                second.append(e)
            else:
                first.append(Constant(e.t0, s, e.u, e.v))
                second.append(Constant(s, e.t1, e.u, e.v))
        return (ControlSchedule(tuple(first), s),
                ControlSchedule(tuple(e.shifted(-s) for e in second), self.horizon - s))

    # -- summaries -----------------------------------------------------------
    @property
    def diracs(self) -> list:
        return [e for e in self.events if isinstance(e, Dirac)]

    @property
    def pulse_count(self) -> int:
        return len(self.events)

    def trip_count(self, threshold: float = np.pi / 2) -> int:
        """Number of impulses with ``|beta| + |gamma| >= threshold``."""
        return sum(1 for e in self.diracs if e.amplitude >= threshold)


def _describe(e: PulseEvent) -> str:
    if isinstance(e, Dirac):
        return f"Dirac(t={e.time:g}, beta={e.beta:g}, gamma={e.gamma:g})"
    return f"Constant(t0={e.t0:g}, t1={e.t1:g}, u={e.u:g}, v={e.v:g})"


def _validate(events: Sequence[PulseEvent], horizon: float) -> None:
    if not np.isfinite(horizon):
        raise ScheduleError("horizon must be finite")
    last_start = -np.inf
    last_segment = None
    for idx, e in enumerate(events):
        if isinstance(e, Dirac):
            vals = (e.time, e.beta, e.gamma)
        elif isinstance(e, Constant):
            vals = (e.t0, e.t1, e.u, e.v)
            if e.t1 < e.t0:
                raise ScheduleError(f"event {idx} {_describe(e)} ends before it starts")
        else:
            raise ScheduleError(f"event {idx} has unknown type {type(e).__name__}")
        if not all(np.isfinite(vals)):
            raise ScheduleError(f"event {idx} {_describe(e)} has non-finite fields")
        if e.start < 0:
            raise ScheduleError(f"event {idx} {_describe(e)} starts before time 0")
        if e.start < last_start:
            raise ScheduleError(f"event {idx} {_describe(e)} is out of order")
        last_start = e.start
        if last_segment is not None:
            j, seg = last_segment
            if e.start < seg.t1:
                raise ScheduleError(
                    f"event {idx} {_describe(e)} overlaps event {j} {_describe(seg)}")
        if isinstance(e, Constant):
            last_segment = (idx, e)
        if e.end > horizon + 1e-12 * max(1.0, abs(horizon)):
            raise ScheduleError(f"event {idx} {_describe(e)} ends after the horizon {horizon:g}")


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def free_evolve(state: EnsembleState, dt: float) -> EnsembleState:
    """Drift only: ``Z -> Z * exp(i*omega*dt)``, ``z`` unchanged."""
    if dt < 0:
        raise PreconditionError("free evolution needs dt >= 0")
    if dt == 0:
        return state
    phase = state.omega * dt
    c, s = np.cos(phase), np.sin(phase)
    x, y, z = state.x, state.y, state.z
    return state.with_vectors(np.column_stack([c * x - s * y, s * x + c * y, z]))


def apply_dirac(state: EnsembleState, beta: float, gamma: float) -> EnsembleState:
    """Instantaneous rotation ``exp(beta*OMEGA_X + gamma*OMEGA_Y)`` at every node."""
    rot = so3_exp((beta, gamma, 0.0))
    return state.with_vectors(state.m @ rot.T)


def apply_constant(state: EnsembleState, u: float, v: float, dt: float) -> EnsembleState:
    """Exact flow of constant controls over ``dt``."""
    if dt < 0:
        raise PreconditionError("constant segment needs dt >= 0")
    n = len(state.grid)
    axes = np.column_stack([np.full(n, u * dt), np.full(n, v * dt), state.omega * dt])
    return state.with_vectors(rotate_vectors(axes, state.m))


def simulate(state: EnsembleState, schedule: ControlSchedule) -> EnsembleState:
    """Propagate ``state`` through ``schedule`` up to its horizon."""
    if not isinstance(schedule, ControlSchedule):
        raise ScheduleError("schedule must be a ControlSchedule")
    t = 0.0
    for e in schedule.events:
        if e.start > t:
            state = free_evolve(state, e.start - t)
            t = e.start
        if isinstance(e, Dirac):
            state = apply_dirac(state, e.beta, e.gamma)
        else:
            state = apply_constant(state, e.u, e.v, e.t1 - e.t0)
            t = e.t1
    if schedule.horizon > t:
        state = free_evolve(state, schedule.horizon - t)
    return state


def rectangularize(schedule: ControlSchedule, eps: float) -> ControlSchedule:
    """Replace each impulse by a segment of length ``eps`` with the same area.

    The ``p``-th impulse (1-based) at nominal time ``t`` becomes a constant
    segment on ``[t + (p-1)*eps, t + p*eps]``; everything after it is pushed
    back by ``eps`` so that free flights keep their nominal durations.

    Raises
    ------
    PreconditionError
        If ``eps <= 0`` or ``eps`` is not smaller than the smallest positive
        gap between consecutive impulse times.
    """
    if not eps > 0:
        raise PreconditionError("eps must be positive")
    times = np.array([d.time for d in schedule.diracs])
    gaps = np.diff(times)
    gaps = gaps[gaps > 0]
    if gaps.size and eps >= gaps.min():
        raise PreconditionError(f"eps={eps:g} is not below the smallest pulse gap {gaps.min():g}")
    out = []
    shift = 0.0
    for e in schedule.events:
        if isinstance(e, Dirac):
            t0 = e.time + shift
            out.append(Constant(t0, t0 + eps, e.beta / eps, e.gamma / eps))
            shift += eps
        else:
            out.append(e.shifted(shift))
    return ControlSchedule(tuple(out), schedule.horizon + shift)


def lift_even(state: EnsembleState) -> EnsembleState:
    """Mirror a state on ``[0, w_max]`` to ``[-w_max, w_max]`` with ``M(-w) = M(w)``.

    Propagating the lifted ensemble and restricting it back reproduces the
    original ensemble exactly, since every node evolves independently.
    """
    w = state.omega
    if abs(w[0]) > 1e-12:
        raise PreconditionError("lifting needs a grid starting at omega = 0")
    nodes = np.concatenate([-w[:0:-1], w])
    m = np.concatenate([state.m[:0:-1], state.m])
    return EnsembleState(OmegaGrid(nodes), m)


def restrict_nonnegative(state: EnsembleState) -> EnsembleState:
    """Keep the nodes with ``omega >= 0``."""
    keep = state.omega >= 0
    return EnsembleState(OmegaGrid(state.omega[keep]), state.m[keep])


def events_from(items: Iterable[PulseEvent], horizon: float | None = None) -> ControlSchedule:
    """Sort events by start time (stable) and wrap them in a schedule."""
    evs = sorted(items, key=lambda e: e.start)
    if horizon is None:
        horizon = max((e.end for e in evs), default=0.0)
    return ControlSchedule(tuple(evs), horizon)
