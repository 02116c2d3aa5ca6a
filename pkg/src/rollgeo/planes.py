"""Plane membership of contact points along horizontal paths.

For a path through the base state, the contact features are

    phi = (u1, u2, v1, v2, u3 - v3)

and a unit ``k`` with ``k . phi(t) = 0`` for all ``t`` puts every contact pair
``(u(t), v(t))`` on one hyperplane of ``R^3 x R^3`` through the origin. Minimizers
must have such a ``k``; this module fits it, measures it, traces curves that
stay on a prescribed plane, and combines everything into a verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rollgeo.bending import (
    SINGULAR_TOL,
    EndpointMap,
    ShortcutFailure,
    interior_time_tuples,
    jacobian_report,
    shortcut_search,
    singularity_measure,
)
from rollgeo.dynamics import (
    HorizontalPath,
    anchor_at_base,
    check_radius,
    horizontal_field,
    rk4_step,
)
from rollgeo.geometry import apply_all, invert_all
from rollgeo.state import BASE_STATE, RawState, StateError, transport_to_base, w5_gauge_defect

RESIDUAL_TOL = 1e-8
NULL_TOL = 1e-8
DEGENERATE_TOL = 1e-12
START_TOL = 1e-10

CONSISTENT = "consistent-with-geodesic"
NOT_MINIMIZING = "not-minimizing"
INCONCLUSIVE = "inconclusive"


class DegeneratePlaneError(ArithmeticError):
    """The plane does not pick out a horizontal direction at some state."""


class DegeneratePathError(ArithmeticError):
    """Too few distinct contact points to fit a plane."""


def contact_features(s) -> np.ndarray:
    """``(u1, u2, v1, v2, u3 - v3)`` of a state, or of an (N, 12) stack of flat states."""
    x = s.as_array() if isinstance(s, RawState) else np.asarray(s, dtype=float)
    u = x[..., 0:3]
    v = x[..., 3:6]
    return np.stack(
        [u[..., 0], u[..., 1], v[..., 0], v[..., 1], u[..., 2] - v[..., 2]], axis=-1
    )


@dataclass(frozen=True, eq=False)
class PlaneSpec:
    """Unit plane coefficients in the feature frame adapted to ``base``."""

    k: np.ndarray
    base: RawState = BASE_STATE

    def __post_init__(self):
        k = np.array(self.k, dtype=float).reshape(5)
        if not np.all(np.isfinite(k)):
            raise ValueError("plane coefficients must be finite")
        if abs(np.linalg.norm(k) - 1.0) > 1e-12:
            raise ValueError(f"plane coefficients must have unit norm, got {np.linalg.norm(k)}")
        k.flags.writeable = False
        object.__setattr__(self, "k", k)

    @classmethod
    def from_coefficients(cls, k, base: RawState = BASE_STATE) -> PlaneSpec:
        k = np.asarray(k, dtype=float)
        n = np.linalg.norm(k)
        if n == 0.0:
            raise ValueError("plane coefficients are all zero")
        return cls(k / n, base)

    def normal6(self) -> np.ndarray:
        """The hyperplane normal in ``(u, v)`` ambient coordinates."""
        k1, k2, k3, k4, k5 = self.k
        nu = np.array([k1, k2, k5])
        nv = np.array([k3, k4, -k5])
        if self.base is not BASE_STATE:
            g1, g2 = transport_to_base(self.base)
            # k . phi(g s) = (g1^T nu) . u + (g2^T nv) . v
            nu = apply_all(invert_all(g1), nu)
            nv = apply_all(invert_all(g2), nv)
        return np.concatenate([nu, nv])

    def value(self, s) -> np.ndarray:
        x = s.as_array() if isinstance(s, RawState) else np.asarray(s, dtype=float)
        return x[..., 0:6] @ self.normal6()


def plane_residual(p: HorizontalPath, plane: PlaneSpec, T: Optional[float] = None) -> float:
    """Largest ``|k . phi(t)|`` over the samples with ``t <= T``.

    The path must already be expressed in the frame the plane refers to
    (for the default base, anchored so that it passes through the base state).
    """
    x = _samples_until(p, T)
    return float(np.max(np.abs(plane.value(x))))


def _samples_until(p: HorizontalPath, T: Optional[float]) -> np.ndarray:
    if T is None:
        return p.states
    return p.states[p.times <= T + 1e-12]


@dataclass
class PlaneFit:
    plane: PlaneSpec
    sigma_min: float
    sigma_max: float
    null_dim: int

    @property
    def unique(self) -> bool:
        return self.null_dim == 1

    @property
    def planarity(self) -> float:
        return self.sigma_min / self.sigma_max


def fit_plane(p: HorizontalPath, T: Optional[float] = None) -> PlaneFit:
    """Total-least-squares plane through the sampled features.

    ``k`` is the right singular vector of the smallest singular value of the
    N x 5 feature matrix, signed so its largest component is positive.
    ``null_dim`` counts directions whose RMS residual is below 1e-8; more
    than one means the plane is not unique.

    Raises:
        DegeneratePathError: fewer than five samples, or all features zero.
    """
    x = _samples_until(p, T)
    if len(x) < 5:
        raise DegeneratePathError(f"need at least 5 samples to fit a plane, got {len(x)}")
    F = contact_features(x)
    _, sv, vt = np.linalg.svd(F, full_matrices=False)
    rms = sv / math.sqrt(len(F))
    rank = int(np.sum(rms > NULL_TOL))
    if rank == 0:
        raise DegeneratePathError(f"feature matrix has rank {rank}; no plane is determined")
    k = vt[-1]
    k = k / np.linalg.norm(k)
    if k[np.argmax(np.abs(k))] < 0:
        k = -k
    return PlaneFit(PlaneSpec(k), float(sv[-1]), float(sv[0]), 5 - rank)


def plane_rates(x, r: float, normal: np.ndarray) -> tuple[float, float]:
    """Rates of change of ``normal . (u, v)`` along ``X1`` and ``X2``."""
    x1 = horizontal_field(x, 1.0, 0.0, r)
    x2 = horizontal_field(x, 0.0, 1.0, r)
    A = sum(normal[i] * x1[i] for i in range(6))
    B = sum(normal[i] * x2[i] for i in range(6))
    return A, B


class _PlaneDirection:
    """Unit control keeping ``normal . (u, v)`` constant, oriented by continuity."""

    def __init__(self, r: float, normal: np.ndarray, reference=None):
        self.r = r
        self.normal = normal
        self.reference = reference

    def __call__(self, x):
        A, B = plane_rates(x, self.r, self.normal)
        n = math.hypot(A, B)
        if n <= DEGENERATE_TOL:
            raise DegeneratePlaneError(
                f"plane does not determine a direction here (|(A, B)| = {n:.3e})"
            )
        c, s = B / n, -A / n
        if self.reference is None:
            if c < 0.0 or (c == 0.0 and s < 0.0):
                c, s = -c, -s
        elif c * self.reference[0] + s * self.reference[1] < 0.0:
            c, s = -c, -s
        return c, s


def trace_plane_curve(
    s0: RawState, r: float, plane: PlaneSpec, duration: float, step: float
) -> HorizontalPath:
    """Horizontal curve from ``s0`` whose contact features stay on ``plane``.

    Raises:
        StateError: ``s0`` is not on the plane.
        DegeneratePlaneError: the plane stops determining a direction.
    """
    r = check_radius(r)
    step = float(step)
    if not (math.isfinite(step) and step > 0.0):
        raise ValueError(f"integration step must be positive, got {step}")
    if not (math.isfinite(duration) and duration >= 0.0):
        raise ValueError(f"duration must be non-negative, got {duration}")
    normal = plane.normal6()
    off = abs(float(normal @ s0.as_array()[0:6]))
    if off > START_TOL:
        raise StateError(f"start state is off the plane by {off:.3e}")

    x = s0.as_array().tolist()
    c, s = _PlaneDirection(r, normal)(x)
    times = [0.0]
    states = [x]
    thetas = [math.atan2(s, c)]
    n = math.ceil(duration / step - 1e-9) if duration > 0 else 0
    for i in range(1, n + 1):
        t = min(i * step, duration)
        h = t - times[-1]
        direction = _PlaneDirection(r, normal, (c, s))
        x = rk4_step(x, h, direction, r)
        c, s = direction(x)
        times.append(t)
        states.append(x)
        thetas.append(math.atan2(s, c))

    times_arr = np.array(times)
    states_arr = np.array(states)
    thetas_arr = np.array(thetas)

    def evaluate(t):
        i = int(np.searchsorted(times_arr, t, side="right")) - 1
        ref = (math.cos(thetas_arr[i]), math.sin(thetas_arr[i]))
        direction = _PlaneDirection(r, normal, ref)
        return np.array(rk4_step(states_arr[i].tolist(), t - times_arr[i], direction, r))

    return HorizontalPath(r, times_arr, states_arr, thetas_arr, step, None, evaluate)


@dataclass
class GeodesicReport:
    plane_k: list
    sigma_min: float
    sigma_max: float
    null_dim: int
    max_residual: float
    singularity_max: float
    singularity_min: float
    trials: int
    verdict: str
    deviations: list = field(default_factory=list)
    certificate: Optional[dict] = None
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "plane_k": self.plane_k,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "null_dim": self.null_dim,
            "max_residual": self.max_residual,
            "singularity_max": self.singularity_max,
            "singularity_min": self.singularity_min,
            "trials": self.trials,
            "verdict": self.verdict,
            "deviations": self.deviations,
            "certificate": self.certificate,
            "notes": self.notes,
        }


FIELD_NOTE = {
    "category": "v-row-scaling",
    "note": "horizontal fields use dv = b/r along X1 and -(v x b)/r along X2; "
    "the uncorrected fields break <v, b> = 0 unless r = 1",
}


def verify_geodesic(
    p: HorizontalPath,
    trials: int = 100,
    seed: int = 0,
    T: Optional[float] = None,
    gap: float = 0.01,
) -> GeodesicReport:
    """Check the necessary plane condition and, failing it, look for a shortcut.

    ``p`` is first anchored so that ``p(T)`` is the base state (``T`` defaults
    to the final time). The verdict is ``consistent-with-geodesic`` when the
    fitted plane residual is at most 1e-8 and every sampled Jacobian has
    ``sigma5 / sigma1 <= 1e-7``; ``not-minimizing`` when a shortcut is found;
    ``inconclusive`` otherwise.
    """
    T = p.duration if T is None else float(T)
    q = anchor_at_base(p, T)
    rng = np.random.default_rng(seed)
    notes = []
    deviations = [dict(FIELD_NOTE)]
    try:
        fit = fit_plane(q, T)
    except DegeneratePathError as exc:
        return GeodesicReport([], math.nan, math.nan, 0, math.nan, math.nan, math.nan, 0,
                              INCONCLUSIVE, deviations, None, [str(exc)])
    residual = plane_residual(q, fit.plane, T)

    tuples = interior_time_tuples(q.times, T, 2.0 * q.step, trials, rng)
    ratios = [singularity_measure(EndpointMap(q, times, T).analytic_jacobian()) for times in tuples]
    sing_max = float(max(ratios))
    sing_min = float(min(ratios))

    audit = jacobian_report(q, tuples[0], T)
    cats: dict[str, int] = {}
    for d in audit["deviations"]:
        cats[d["category"]] = cats.get(d["category"], 0) + 1
    for cat in sorted(cats):
        deviations.append({"category": cat, "count": cats[cat],
                           "note": "printed derivative entries differing from finite differences"})
    checks = [q.state(i) for i in np.linspace(0, len(q) - 1, 5).astype(int)]
    defect = max(w5_gauge_defect(s, np.linspace(0.0, 2 * math.pi, 9)) for s in checks)
    deviations.append({"category": "w5-representative-dependence", "value": defect,
                       "note": "max change of the printed w5 under gauge shifts at sampled states; "
                               "the chart evaluates w5 on the canonical representative"})

    if residual <= RESIDUAL_TOL and sing_max <= SINGULAR_TOL:
        verdict = CONSISTENT
        cert = None
    else:
        verdict, cert, msg = _try_shortcut(q, p, T, gap, seed)
        if msg:
            notes.append(msg)
    if fit.null_dim > 1:
        notes.append(f"plane not unique: null space dimension {fit.null_dim}")
    return GeodesicReport(
        [float(c) for c in fit.plane.k], fit.sigma_min, fit.sigma_max, fit.null_dim,
        residual, sing_max, sing_min, len(ratios), verdict, deviations,
        cert.as_dict() if cert is not None else None, notes,
    )


def _try_shortcut(q: HorizontalPath, p: HorizontalPath, T: float, gap: float, seed: int):
    if T + gap <= q.duration + 1e-12:
        path, t_base, t_bar = q, T, T + gap
    else:
        # no room past T: anchor slightly earlier and aim at T itself
        idx = int(np.searchsorted(q.times, T - gap, side="right")) - 1
        t_base = float(q.times[idx])
        path, t_bar = anchor_at_base(p, t_base), T
    try:
        cert = shortcut_search(path, t_bar, T=t_base, seed=seed)
    except (ShortcutFailure, StateError, ValueError) as exc:
        return INCONCLUSIVE, None, f"shortcut search failed: {exc}"
    return NOT_MINIMIZING, cert, None
