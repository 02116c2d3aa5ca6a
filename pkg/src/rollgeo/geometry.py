"""Vector and rotation primitives.

Rotations are never stored as matrices. A rotation is an ``AxisAngle`` and a
composite rotation is an ordered list of them, read like a matrix product:
``[r1, r2, r3]`` means ``r1 @ r2 @ r3``, so ``r3`` acts first.

Orientation convention: a positive angle turns counterclockwise when the axis
points toward the viewer, so ``rotate(AxisAngle(E3, pi/2), E1) == E2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

UNIT_TOL = 1e-12


def cross(a, b):
    """Cross product of two 3-vectors (or stacks of them along the last axis)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def vec3(x) -> np.ndarray:
    """Coerce to a finite float 3-vector."""
    v = np.array(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector has non-finite components: {v}")
    return v


def unit_vec3(x, tol: float = UNIT_TOL) -> np.ndarray:
    """Coerce to a 3-vector and check that it is unit length within ``tol``."""
    v = vec3(x)
    err = abs(np.linalg.norm(v) - 1.0)
    if err > tol:
        raise ValueError(f"expected a unit vector, |norm - 1| = {err:.3e}")
    return v


@dataclass(frozen=True)
class AxisAngle:
    """Rotation by ``angle`` radians about the unit vector ``axis``."""

    axis: np.ndarray
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis", unit_vec3(self.axis))
        angle = float(self.angle)
        if not math.isfinite(angle):
            raise ValueError("rotation angle must be finite")
        object.__setattr__(self, "angle", angle)

    def inverse(self) -> AxisAngle:
        return AxisAngle(self.axis, -self.angle)

    @classmethod
    def normalized(cls, axis, angle: float) -> AxisAngle:
        """Build from a non-unit axis by normalizing it first."""
        axis = vec3(axis)
        n = np.linalg.norm(axis)
        if n == 0.0:
            raise ValueError("rotation axis has zero length")
        return cls(axis / n, angle)


def rotate(r: AxisAngle, x) -> np.ndarray:
    """Apply Rodrigues' formula to ``x`` (a 3-vector or an (N, 3) stack)."""
    x = np.asarray(x, dtype=float)
    if r.angle == 0.0:
        return x.copy()
    k = r.axis
    c = math.cos(r.angle)
    s = math.sin(r.angle)
    kx = np.tensordot(x, k, axes=([-1], [0]))[..., None]
    return x * c + cross(k, x) * s + k * kx * (1.0 - c)


def rotation_generator(axis, x) -> np.ndarray:
    """Derivative of ``rotate(AxisAngle(axis, t), x)`` at ``t = 0``, i.e. ``axis x x``."""
    return cross(axis, x)


def apply_all(rotations: Sequence[AxisAngle], x) -> np.ndarray:
    """Apply a composite rotation (rightmost element first)."""
    out = np.asarray(x, dtype=float)
    for r in reversed(rotations):
        out = rotate(r, out)
    return out


def invert_all(rotations: Sequence[AxisAngle]) -> list[AxisAngle]:
    return [r.inverse() for r in reversed(rotations)]


def align_frame(u, a) -> list[AxisAngle]:
    """Rotation list taking the orthonormal pair ``(u, a)`` to ``(E3, E1)``.

    ``u`` goes to the north pole along the shortest arc, then a twist about
    ``E3`` brings the image of ``a`` onto ``E1``.
    """
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    axis = cross(u, E3)
    sin_t = np.linalg.norm(axis)
    cos_t = float(np.dot(u, E3))
    steps: list[AxisAngle] = []
    if sin_t > 1e-15:
        steps.append(AxisAngle(axis / sin_t, math.atan2(sin_t, cos_t)))
    elif cos_t < 0.0:
        # antipodal: any horizontal axis works
        steps.append(AxisAngle(E1, math.pi))
    a1 = apply_all(steps, a)
    twist = AxisAngle(E3, -math.atan2(a1[1], a1[0]))
    return [twist] + steps
