"""Rolling configurations, gauge equivalence, the SO(3) x SO(3) action and the
coordinate chart centred at the north-pole state.

A configuration is represented by a 4-tuple ``(u, v, a, b)``: ``u`` is the
contact point on the unit sphere, ``r * v`` the contact point on the sphere of
radius ``r``, and ``a``, ``b`` are unit tangent markers at ``u`` and ``v``.
Two tuples over the same contact point describe the same configuration when
they differ by a gauge shift ``(a, b) -> (R_u^t a, R_v^-t b)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rollgeo.geometry import E1, E3, AxisAngle, align_frame, apply_all, cross, rotate, vec3

STATE_TOL = 1e-10
EQUIV_TOL = 1e-9
CHART_BOUNDARY_TOL = 1e-8


class StateError(ValueError):
    """A configuration violates its invariants or lies outside a chart."""


@dataclass(frozen=True, eq=False)
class RawState:
    """One representative ``(u, v, a, b)`` of a rolling configuration."""

    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "a", "b"):
            vec = vec3(getattr(self, name))
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)
        err = invariant_violation(self.u, self.v, self.a, self.b)
        if err > STATE_TOL:
            raise StateError(f"state invariants violated by {err:.3e}")

    def as_array(self) -> np.ndarray:
        """Flat 12-vector ``(u, v, a, b)``."""
        return np.concatenate([self.u, self.v, self.a, self.b])

    @classmethod
    def from_array(cls, x) -> RawState:
        x = np.asarray(x, dtype=float).reshape(12)
        return cls(x[0:3], x[3:6], x[6:9], x[9:12])

    def __eq__(self, other):
        if not isinstance(other, RawState):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    def __hash__(self):
        return hash(self.as_array().tobytes())

    def __repr__(self):
        fmt = lambda x: "(" + ", ".join(f"{c:.6g}" for c in x) + ")"
        return f"RawState(u={fmt(self.u)}, v={fmt(self.v)}, a={fmt(self.a)}, b={fmt(self.b)})"


def invariant_violation(u, v, a, b) -> float:
    """Largest deviation among the unit-norm and tangency conditions."""
    return max(
        abs(np.linalg.norm(u) - 1.0),
        abs(np.linalg.norm(v) - 1.0),
        abs(np.linalg.norm(a) - 1.0),
        abs(np.linalg.norm(b) - 1.0),
        abs(float(np.dot(u, a))),
        abs(float(np.dot(v, b))),
    )


BASE_STATE = RawState(E3, E3, E1, E1)


def make_state(u, v, a, b, tol: float = 1e-8) -> RawState:
    """Validate and clean up a raw 4-tuple.

    ``u`` and ``v`` are renormalized, ``a`` and ``b`` are projected onto the
    tangent planes and renormalized. Inputs whose violation exceeds ``tol``
    are rejected: that is corrupted data, not roundoff.
    """
    u, v, a, b = (vec3(x) for x in (u, v, a, b))
    err = invariant_violation(u, v, a, b)
    if err > tol:
        raise StateError(
            f"state invariants violated by {err:.3e} (tolerance {tol:.1e})"
        )
    return RawState(*project(u, v, a, b))


def project(u, v, a, b):
    """Renormalize contacts, re-orthogonalize and renormalize the markers."""
    u = u / np.linalg.norm(u)
    v = v / np.linalg.norm(v)
    a = a - np.dot(a, u) * u
    b = b - np.dot(b, v) * v
    return u, v, a / np.linalg.norm(a), b / np.linalg.norm(b)


def gauge_shift(s: RawState, theta: float) -> RawState:
    """Move to another representative of the same configuration."""
    a = rotate(AxisAngle(s.u, theta), s.a)
    b = rotate(AxisAngle(s.v, -theta), s.b)
    return RawState(s.u, s.v, a, b)


def equivalent(s1: RawState, s2: RawState, tol: float = EQUIV_TOL) -> bool:
    """Whether two representatives describe the same configuration."""
    if np.max(np.abs(s1.u - s2.u)) > tol or np.max(np.abs(s1.v - s2.v)) > tol:
        return False
    cos_a = float(np.dot(s1.a, s2.a))
    cos_b = float(np.dot(s1.b, s2.b))
    sin_a = float(np.dot(s1.a, cross(s1.u, s2.a)))
    sin_b = -float(np.dot(s1.b, cross(s1.v, s2.b)))
    return abs(cos_a - cos_b) <= tol and abs(sin_a - sin_b) <= tol


def gauge_angle(s1: RawState, s2: RawState) -> float:
    """Angle ``t`` with ``gauge_shift(s1, t)`` closest to ``s2`` (same contact)."""
    return math.atan2(
        float(np.dot(cross(s1.u, s1.a), s2.a)), float(np.dot(s1.a, s2.a))
    )


def act(g1: Sequence[AxisAngle], g2: Sequence[AxisAngle], s: RawState) -> RawState:
    """Apply ``g1`` to the first sphere's data and ``g2`` to the second's."""
    return RawState(
        apply_all(g1, s.u), apply_all(g2, s.v), apply_all(g1, s.a), apply_all(g2, s.b)
    )


def act_array(g1, g2, x: np.ndarray) -> np.ndarray:
    """``act`` on an (N, 12) stack of flat states."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[..., 0:3] = apply_all(g1, x[..., 0:3])
    out[..., 3:6] = apply_all(g2, x[..., 3:6])
    out[..., 6:9] = apply_all(g1, x[..., 6:9])
    out[..., 9:12] = apply_all(g2, x[..., 9:12])
    return out


def canonical_gauge(s: RawState) -> RawState:
    """The representative whose ``a`` points along the tangential part of ``E1``.

    Raises:
        StateError: when ``u`` is (numerically) parallel to ``E1``, where the
            tangential projection of ``E1`` vanishes.
    """
    p = E1 - s.u[0] * s.u
    norm = np.linalg.norm(p)
    if norm <= CHART_BOUNDARY_TOL:
        raise StateError("canonical gauge undefined: contact point u is parallel to e1")
    p = p / norm
    theta = math.atan2(float(np.dot(cross(s.u, s.a), p)), float(np.dot(s.a, p)))
    return gauge_shift(s, theta)


def w5_verbatim(s: RawState) -> float:
    """Fifth chart coordinate, evaluated exactly as printed on a representative."""
    u, a, b = s.u, s.a, s.b
    return (a[0] * u[2] - a[2] * u[0]) * b[1] + (b[0] * u[2] - b[2] * u[1]) * a[1]


def chart_coords(s: RawState) -> np.ndarray:
    """Coordinates ``(w1..w5)`` of a configuration near the base state.

    ``w1..w4`` are ``(u1, u2, v1, v2)``; ``w5`` is evaluated on the canonical
    representative so the result does not depend on which tuple is passed.
    """
    if s.u[2] <= 0.0 or s.v[2] <= 0.0:
        raise StateError(
            f"state outside chart neighborhood (u3={s.u[2]:.3g}, v3={s.v[2]:.3g})"
        )
    c = canonical_gauge(s)
    return np.array([s.u[0], s.u[1], s.v[0], s.v[1], w5_verbatim(c)])


def w5_gauge_defect(s: RawState, thetas) -> float:
    """Max change of the verbatim ``w5`` over gauge shifts of ``s``.

    Zero would mean the printed formula is already representative independent.
    """
    base = w5_verbatim(s)
    return max(abs(w5_verbatim(gauge_shift(s, t)) - base) for t in thetas)


def random_state(rng: np.random.Generator) -> RawState:
    """A uniformly oriented random configuration."""
    u, v, a, b = rng.standard_normal((4, 3))
    return RawState(*project(u, v, a, b))


def random_rotation(rng: np.random.Generator) -> list[AxisAngle]:
    """A random rotation as a single ``AxisAngle``."""
    return [AxisAngle.normalized(rng.standard_normal(3), rng.uniform(-math.pi, math.pi))]


def transport_to_base(s: RawState) -> tuple[list[AxisAngle], list[AxisAngle]]:
    """Rotations ``(g1, g2)`` with ``act(g1, g2, s) == BASE_STATE``."""
    return align_frame(s.u, s.a), align_frame(s.v, s.b)
