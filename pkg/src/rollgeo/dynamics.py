"""Horizontal frame, constant-control closed form, and the path integrator.

The horizontal field for control angle ``theta`` is ``cos(theta) X1 +
sin(theta) X2`` with

    X1 = (a, b/r, -u, -v/r)        X2 = (u x a, -(v x b)/r, 0, 0)

in the ordering ``(du, dv, da, db)``. The ``1/r`` on the ``v`` rows keeps the
second contact point moving at unit speed on the sphere of radius ``r`` and
keeps ``<v, b>`` constant. ``printed_fields=True`` drops those factors, which
only agrees with the corrected fields at ``r = 1``.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from rollgeo.geometry import AxisAngle, cross, rotate
from rollgeo.state import RawState, StateError, act_array, transport_to_base

DRIFT_TOL = 1e-10
SAMPLE_TOL = 1e-9
_TIME_EPS = 1e-12


class IntegrationError(ArithmeticError):
    """The integrator produced a non-finite state."""


def check_radius(r: float) -> float:
    r = float(r)
    if not (math.isfinite(r) and r > 0.0):
        raise ValueError(f"radius ratio must be positive and finite, got {r}")
    return r


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant control: a list of ``(duration, theta)`` segments."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(d), float(th)) for d, th in self.segments)
        for d, th in segs:
            if not (math.isfinite(d) and d > 0.0):
                raise ValueError(f"segment durations must be positive, got {d}")
            if not math.isfinite(th):
                raise ValueError("control angles must be finite")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, theta: float, duration: float) -> ControlSchedule:
        if duration == 0.0:
            return cls(())
        return cls(((duration, theta),))

    @property
    def duration(self) -> float:
        return float(sum(d for d, _ in self.segments))

    def boundaries(self) -> list[float]:
        """Segment start times followed by the final time."""
        out = [0.0]
        for d, _ in self.segments:
            out.append(out[-1] + d)
        return out

    def theta_at(self, t: float) -> float:
        """Control in force on the segment containing ``t`` (right-continuous)."""
        if not self.segments:
            return 0.0
        bounds = self.boundaries()
        i = min(bisect_right(bounds, t + _TIME_EPS) - 1, len(self.segments) - 1)
        return self.segments[max(i, 0)][1]


def frame(s: RawState, r: float, printed_fields: bool = False):
    """The horizontal fields ``X1``, ``X2`` at ``s`` as flat 12-vectors."""
    x = s.as_array()
    return _x1(x, check_radius(r), printed_fields), _x2(x, r, printed_fields)


def _x1(x, r, printed=False):
    rv = 1.0 if printed else r
    return np.concatenate([x[6:9], x[9:12] / rv, -x[0:3], -x[3:6] / r])


def _x2(x, r, printed=False):
    rv = 1.0 if printed else r
    return np.concatenate(
        [cross(x[0:3], x[6:9]), -cross(x[3:6], x[9:12]) / rv, np.zeros(6)]
    )


def horizontal_field(x, c: float, s: float, r: float, printed: bool = False):
    """``c X1 + s X2`` at the flat state ``x``, as a 12-tuple of floats.

    Written on plain floats: this is the integrator's inner loop.
    """
    u1, u2, u3, v1, v2, v3, a1, a2, a3, b1, b2, b3 = x
    ua1 = u2 * a3 - u3 * a2
    ua2 = u3 * a1 - u1 * a3
    ua3 = u1 * a2 - u2 * a1
    vb1 = v2 * b3 - v3 * b2
    vb2 = v3 * b1 - v1 * b3
    vb3 = v1 * b2 - v2 * b1
    iv = 1.0 if printed else 1.0 / r
    cr = c / r
    return (
        c * a1 + s * ua1, c * a2 + s * ua2, c * a3 + s * ua3,
        (c * b1 - s * vb1) * iv, (c * b2 - s * vb2) * iv, (c * b3 - s * vb3) * iv,
        -c * u1, -c * u2, -c * u3,
        -cr * v1, -cr * v2, -cr * v3,
    )


def project_flat(x) -> list[float]:
    """Restore unit norms and tangency of a flat state."""
    u1, u2, u3, v1, v2, v3, a1, a2, a3, b1, b2, b3 = x
    n = 1.0 / math.sqrt(u1 * u1 + u2 * u2 + u3 * u3)
    u1, u2, u3 = u1 * n, u2 * n, u3 * n
    n = 1.0 / math.sqrt(v1 * v1 + v2 * v2 + v3 * v3)
    v1, v2, v3 = v1 * n, v2 * n, v3 * n
    d = a1 * u1 + a2 * u2 + a3 * u3
    a1, a2, a3 = a1 - d * u1, a2 - d * u2, a3 - d * u3
    d = b1 * v1 + b2 * v2 + b3 * v3
    b1, b2, b3 = b1 - d * v1, b2 - d * v2, b3 - d * v3
    n = 1.0 / math.sqrt(a1 * a1 + a2 * a2 + a3 * a3)
    a1, a2, a3 = a1 * n, a2 * n, a3 * n
    n = 1.0 / math.sqrt(b1 * b1 + b2 * b2 + b3 * b3)
    return [u1, u2, u3, v1, v2, v3, a1, a2, a3, b1 * n, b2 * n, b3 * n]


def rk4_step(x, h: float, direction: Callable, r: float, printed: bool = False):
    """One classical Runge-Kutta step followed by projection.

    ``direction(x)`` returns the unit control ``(cos theta, sin theta)``.
    """
    f = horizontal_field
    k1 = f(x, *direction(x), r, printed)
    x2 = [xi + 0.5 * h * ki for xi, ki in zip(x, k1)]
    k2 = f(x2, *direction(x2), r, printed)
    x3 = [xi + 0.5 * h * ki for xi, ki in zip(x, k2)]
    k3 = f(x3, *direction(x3), r, printed)
    x4 = [xi + h * ki for xi, ki in zip(x, k3)]
    k4 = f(x4, *direction(x4), r, printed)
    h6 = h / 6.0
    out = [
        xi + h6 * (p + 2.0 * q + 2.0 * w + z)
        for xi, p, q, w, z in zip(x, k1, k2, k3, k4)
    ]
    if not all(math.isfinite(c) for c in out):
        raise IntegrationError("non-finite state during integration")
    return project_flat(out)


@dataclass(frozen=True, eq=False)
class HorizontalPath:
    """A sampled unit-speed horizontal path.

    ``states`` is an (N, 12) array of flat ``(u, v, a, b)`` samples at
    ``times``; ``thetas`` is the control in force leaving each sample.
    ``evaluate`` (when present) reproduces the path between samples by local
    re-integration from the nearest earlier sample.
    """

    r: float
    times: np.ndarray
    states: np.ndarray
    thetas: np.ndarray
    step: float
    controls: Optional[ControlSchedule] = None
    evaluate: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float).reshape(-1, 12)
        thetas = np.asarray(self.thetas, dtype=float)
        if len(times) == 0 or len(times) != len(states) or len(thetas) != len(times):
            raise ValueError("times, states and thetas must have matching nonzero length")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("sample times must start at 0 and strictly increase")
        for arr in (times, states, thetas):
            arr.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "thetas", thetas)
        check_radius(self.r)

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def state(self, i: int) -> RawState:
        return RawState.from_array(self.states[i])

    @property
    def final(self) -> RawState:
        return self.state(-1)

    def sample_index(self, t: float) -> Optional[int]:
        """Index of the sample at time ``t`` (within 1e-12), else None."""
        i = int(np.searchsorted(self.times, t - _TIME_EPS))
        if i < len(self.times) and abs(self.times[i] - t) <= _TIME_EPS:
            return i
        return None

    def state_at(self, t: float) -> RawState:
        """State at an arbitrary time in ``[0, duration]``."""
        return RawState.from_array(self.flat_at(t))

    def flat_at(self, t: float) -> np.ndarray:
        t = float(t)
        if t < -_TIME_EPS or t > self.duration + _TIME_EPS:
            raise ValueError(f"time {t} outside path domain [0, {self.duration}]")
        i = self.sample_index(t)
        if i is not None:
            return self.states[i].copy()
        if self.evaluate is None:
            raise ValueError(f"time {t} is not a sample and the path has no evaluator")
        return self.evaluate(t)

    def max_drift(self) -> float:
        """Largest invariant violation over the samples."""
        x = self.states
        u, v, a, b = x[:, 0:3], x[:, 3:6], x[:, 6:9], x[:, 9:12]
        return float(
            max(
                np.max(np.abs(np.linalg.norm(u, axis=1) - 1.0)),
                np.max(np.abs(np.linalg.norm(v, axis=1) - 1.0)),
                np.max(np.abs(np.linalg.norm(a, axis=1) - 1.0)),
                np.max(np.abs(np.linalg.norm(b, axis=1) - 1.0)),
                np.max(np.abs(np.einsum("ij,ij->i", u, a))),
                np.max(np.abs(np.einsum("ij,ij->i", v, b))),
            )
        )

    def transformed(self, g1, g2) -> HorizontalPath:
        """The path acted on by ``(g1, g2)``; controls are unchanged."""
        parent = self

        def evaluate(t):
            return act_array(g1, g2, parent.flat_at(t))

        return HorizontalPath(
            self.r,
            self.times,
            act_array(g1, g2, self.states),
            self.thetas,
            self.step,
            self.controls,
            evaluate,
        )


def _grid(bounds: Sequence[float], step: float) -> list[float]:
    """Sample times: every ``step`` inside each segment plus every boundary."""
    times = [0.0]
    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        n = max(1, math.ceil((t1 - t0) / step - 1e-9))
        for k in range(1, n):
            times.append(t0 + k * step)
        times.append(t1)
    return times


def roll(
    s0: RawState,
    r: float,
    controls: ControlSchedule,
    step: float,
    printed_fields: bool = False,
) -> HorizontalPath:
    """Integrate the horizontal system under a piecewise-constant control."""
    r = check_radius(r)
    step = float(step)
    if not (math.isfinite(step) and step > 0.0):
        raise ValueError(f"integration step must be positive, got {step}")
    bounds = controls.boundaries()
    times = _grid(bounds, step) if controls.segments else [0.0]
    thetas = [controls.theta_at(t) for t in times]
    x = s0.as_array().tolist()
    states = [x]
    for t0, t1, th in zip(times[:-1], times[1:], thetas):
        cs = (math.cos(th), math.sin(th))
        x = rk4_step(x, t1 - t0, lambda _x: cs, r, printed_fields)
        states.append(x)

    times_arr = np.array(times)
    states_arr = np.array(states)

    def evaluate(t):
        i = int(np.searchsorted(times_arr, t, side="right")) - 1
        th = controls.theta_at(times_arr[i])
        cs = (math.cos(th), math.sin(th))
        x = rk4_step(states_arr[i].tolist(), t - times_arr[i], lambda _x: cs, r, printed_fields)
        return np.array(x)

    return HorizontalPath(r, times_arr, states_arr, np.array(thetas), step, controls, evaluate)


def great_circle_roll(s0: RawState, r: float, theta: float, t: float) -> RawState:
    """Closed-form state after rolling for time ``t`` at constant control ``theta``.

    The first sphere turns about ``u x d`` with ``d = a cos + (u x a) sin`` at
    unit rate; the second turns about ``v x e`` with ``e = b cos - (v x b) sin``
    at rate ``1/r``. The markers ride along, which is parallel transport here.
    """
    r = check_radius(r)
    c, s = math.cos(theta), math.sin(theta)
    u, v, a, b = s0.u, s0.v, s0.a, s0.b
    d1 = c * a + s * cross(u, a)
    d2 = c * b - s * cross(v, b)
    rot1 = AxisAngle.normalized(cross(u, d1), t)
    rot2 = AxisAngle.normalized(cross(v, d2), t / r)
    return RawState(rotate(rot1, u), rotate(rot2, v), rotate(rot1, a), rotate(rot2, b))


def arc_length(p: HorizontalPath) -> float:
    """Length of a unit-speed path, i.e. its final time."""
    return p.duration


def check_path_invariants(p: HorizontalPath, tol: float = SAMPLE_TOL) -> None:
    err = p.max_drift()
    if err > tol:
        raise StateError(f"path samples violate state invariants by {err:.3e}")


def random_schedule(
    rng: np.random.Generator, segments: int, duration: float
) -> ControlSchedule:
    """Random piecewise-constant control with ``segments`` pieces of total ``duration``."""
    weights = rng.uniform(0.5, 1.5, size=segments)
    durations = duration * weights / weights.sum()
    thetas = rng.uniform(-math.pi, math.pi, size=segments)
    return ControlSchedule(tuple(zip(durations.tolist(), thetas.tolist())))


def anchor_at_base(p: HorizontalPath, T: Optional[float] = None) -> HorizontalPath:
    """Act on ``p`` by the rotations that carry ``p(T)`` onto the base state."""
    T = p.duration if T is None else T
    return p.transformed(*transport_to_base(p.state_at(T)))
