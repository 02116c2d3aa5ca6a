"""Five-point bending of a horizontal path and the endpoint map it induces.

Bending at times ``t1 < ... < t5`` with angles ``alpha`` rotates the tail of
the path: past ``t_j`` the first sphere's data ``(u, a)`` is acted on by
``R_{u(t1)}^{alpha1} ... R_{u(tj)}^{alphaj}`` and the second sphere's data
``(v, b)`` by the matching product of ``R_{v(ti)}^{-alpha_i}``. Lengths are
unchanged. The endpoint map sends ``alpha`` to the chart coordinates of the
bent path at the time ``T`` where the original path sits at the base state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from rollgeo.dynamics import HorizontalPath
from rollgeo.geometry import AxisAngle, apply_all, rotate
from rollgeo.state import (
    BASE_STATE,
    RawState,
    StateError,
    act_array,
    chart_coords,
    equivalent,
)

FD_STEP = 1e-5
BASE_TOL = 1e-8
SINGULAR_TOL = 1e-7
JAC_RTOL = 1e-6
JAC_ATOL = 1e-9


@dataclass(frozen=True)
class BendSpec:
    """Break times and bend angles."""

    times: tuple[float, ...]
    alphas: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        alphas = tuple(float(a) for a in self.alphas)
        if len(times) != 5 or len(alphas) != 5:
            raise ValueError("a bend needs exactly five times and five angles")
        if any(t1 >= t2 for t1, t2 in zip(times[:-1], times[1:])):
            raise ValueError(f"bend times must be strictly increasing, got {times}")
        if not all(math.isfinite(x) for x in times + alphas):
            raise ValueError("bend times and angles must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "alphas", alphas)

    def check_inside(self, T: float) -> None:
        if self.times[0] <= 0.0 or self.times[-1] >= T:
            raise ValueError(f"bend times {self.times} must lie strictly inside (0, {T})")


def _tail_rotations(contacts_u, contacts_v, alphas, j):
    """Accumulated rotations in force after the ``j``-th break (``j`` = 0..5)."""
    g1 = [AxisAngle(contacts_u[i], alphas[i]) for i in range(j)]
    g2 = [AxisAngle(contacts_v[i], -alphas[i]) for i in range(j)]
    return g1, g2


def bend(p: HorizontalPath, spec: BendSpec) -> HorizontalPath:
    """The bent path, sampled at the same times as ``p``.

    A sample at exactly ``t_j`` takes the value from the left (the piece
    ``t_{j-1} < t <= t_j``). Use :func:`break_limits` for both one-sided
    values at the breaks.
    """
    spec.check_inside(p.duration)
    breaks = [p.state_at(t) for t in spec.times]
    us = [s.u for s in breaks]
    vs = [s.v for s in breaks]
    bt = np.array(spec.times)

    def piece(t):
        # number of breaks strictly before t
        return int(np.searchsorted(bt, t, side="left"))

    states = np.array(p.states, dtype=float)
    idx = np.searchsorted(bt, p.times, side="left")
    for j in range(1, 6):
        mask = idx == j
        if np.any(mask):
            g1, g2 = _tail_rotations(us, vs, spec.alphas, j)
            states[mask] = act_array(g1, g2, states[mask])

    def evaluate(t):
        g1, g2 = _tail_rotations(us, vs, spec.alphas, piece(t))
        return act_array(g1, g2, p.flat_at(t))

    return HorizontalPath(p.r, p.times, states, p.thetas, p.step, p.controls, evaluate)


def break_limits(p: HorizontalPath, spec: BendSpec) -> list[tuple[RawState, RawState]]:
    """Left and right limits of the bent path at each break time."""
    spec.check_inside(p.duration)
    breaks = [p.state_at(t) for t in spec.times]
    us = [s.u for s in breaks]
    vs = [s.v for s in breaks]
    out = []
    for j, s in enumerate(breaks):
        g1, g2 = _tail_rotations(us, vs, spec.alphas, j)
        left = act_array(g1, g2, s.as_array())
        # the j-th bend turns about the break contacts themselves, so it only
        # moves the markers; applying it to u and v would add roundoff
        turned = s.as_array()
        turned[6:9] = rotate(AxisAngle(s.u, spec.alphas[j]), s.a)
        turned[9:12] = rotate(AxisAngle(s.v, -spec.alphas[j]), s.b)
        right = act_array(g1, g2, turned)
        out.append((RawState.from_array(left), RawState.from_array(right)))
    return out


class EndpointMap:
    """``alpha -> chart coordinates of the bent path at time T``.

    The break contacts and the endpoint are looked up once, so repeated
    evaluation (finite differences, Newton) only costs five rotations.
    """

    def __init__(self, p: HorizontalPath, times: Sequence[float], T: Optional[float] = None):
        self.path = p
        self.T = p.duration if T is None else float(T)
        self.spec = BendSpec(times)
        self.spec.check_inside(self.T)
        self.end = p.state_at(self.T)
        if not (
            np.max(np.abs(self.end.u - BASE_STATE.u)) <= BASE_TOL
            and np.max(np.abs(self.end.v - BASE_STATE.v)) <= BASE_TOL
            and equivalent(self.end, BASE_STATE, BASE_TOL)
        ):
            raise StateError(f"path is not at the base state at T={self.T}: {self.end}")
        self.breaks = [p.state_at(t) for t in self.spec.times]
        self.contacts_u = np.array([s.u for s in self.breaks])
        self.contacts_v = np.array([s.v for s in self.breaks])

    def endpoint(self, alpha) -> RawState:
        """Bent representative at ``T``."""
        alpha = np.asarray(alpha, dtype=float).reshape(5)
        g1, g2 = _tail_rotations(self.contacts_u, self.contacts_v, alpha, 5)
        return RawState(
            apply_all(g1, self.end.u),
            apply_all(g2, self.end.v),
            apply_all(g1, self.end.a),
            apply_all(g2, self.end.b),
        )

    def __call__(self, alpha) -> np.ndarray:
        return chart_coords(self.endpoint(alpha))

    def fd_jacobian(self, alpha=None, h: float = FD_STEP) -> np.ndarray:
        """Central differences, laid out as ``J[i, j] = d omega_j / d alpha_i``."""
        alpha = np.zeros(5) if alpha is None else np.asarray(alpha, dtype=float)
        J = np.empty((5, 5))
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            J[i] = (self(alpha + e) - self(alpha - e)) / (2.0 * h)
        return J

    def analytic_jacobian(self) -> np.ndarray:
        """First-order coefficients at ``alpha = 0``.

        Row ``i`` is ``(u2, -u1, -v2, v1, u3 - v3)`` at ``t_i``: the tail of
        the first sphere turns by ``u(t_i) x`` and the second's by
        ``-v(t_i) x``, evaluated at the north pole.
        """
        u = self.contacts_u
        v = self.contacts_v
        return np.column_stack([u[:, 1], -u[:, 0], -v[:, 1], v[:, 0], u[:, 2] - v[:, 2]])

    def printed_jacobian(self) -> np.ndarray:
        """The matrix with the radius factor on columns 3 and 4, as printed."""
        r = self.path.r
        J = self.analytic_jacobian()
        J[:, 2:4] *= r
        return J

    def fd_endpoint_derivatives(self, h: float = FD_STEP) -> np.ndarray:
        """``d(u, v, a, b)(T) / d alpha_i`` as a (5, 12) array, by central differences."""
        out = np.empty((5, 12))
        for i in range(5):
            e = np.zeros(5)
            e[i] = h
            out[i] = (self.endpoint(e).as_array() - self.endpoint(-e).as_array()) / (2.0 * h)
        return out

    def printed_endpoint_derivatives(self) -> np.ndarray:
        """The printed tangent derivatives of ``u, v, a, b`` at ``T``."""
        r = self.path.r
        u = self.contacts_u
        v = self.contacts_v
        z = np.zeros(5)
        return np.column_stack(
            [
                u[:, 1], -u[:, 0], z,
                -r * v[:, 1], r * v[:, 0], z,
                z, u[:, 2], u[:, 1],
                z, -v[:, 2], -v[:, 1],
            ]
        )


@dataclass
class OmegaJacobian:
    matrix: np.ndarray
    mode: str
    singular_values: np.ndarray = field(init=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if not np.all(np.isfinite(self.matrix)):
            raise ArithmeticError("Jacobian has non-finite entries")
        self.singular_values = np.linalg.svd(self.matrix, compute_uv=False)

    @property
    def singularity(self) -> float:
        return singularity_measure(self)


def omega(p: HorizontalPath, times: Sequence[float], alpha, T: Optional[float] = None) -> np.ndarray:
    """Chart coordinates of the bent endpoint."""
    return EndpointMap(p, times, T)(alpha)


def omega_jacobian(
    p: HorizontalPath, times: Sequence[float], mode: str = "analytic", T: Optional[float] = None
) -> OmegaJacobian:
    """Jacobian of the endpoint map at ``alpha = 0``.

    Args:
        mode: ``"analytic"`` for the closed-form rows or
            ``"finite-difference"`` for central differences with step 1e-5.
    """
    emap = EndpointMap(p, times, T)
    if mode == "analytic":
        return OmegaJacobian(emap.analytic_jacobian(), mode)
    if mode == "finite-difference":
        return OmegaJacobian(emap.fd_jacobian(), mode)
    raise ValueError(f"unknown Jacobian mode {mode!r}")


def singularity_measure(J) -> float:
    """Ratio of smallest to largest singular value (0 for the zero matrix)."""
    if isinstance(J, OmegaJacobian):
        sv = J.singular_values
    else:
        sv = np.linalg.svd(np.asarray(J, dtype=float), compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


def entries_agree(x, y, rtol: float = JAC_RTOL, atol: float = JAC_ATOL) -> np.ndarray:
    """Elementwise ``|x - y| <= max(rtol * |y|, atol)``."""
    x = np.asarray(x)
    y = np.asarray(y)
    return np.abs(x - y) <= np.maximum(rtol * np.abs(y), atol)


_DERIV_NAMES = ["du", "dv", "da", "db"]


def jacobian_report(
    p: HorizontalPath, times: Sequence[float], T: Optional[float] = None
) -> dict:
    """Analytic and finite-difference Jacobians plus the printed-formula audit.

    ``deviations`` lists every printed entry that disagrees with finite
    differences. Each carries a ``category``: ``radius-factor`` (the ``r`` on
    ``dv/dalpha`` and on Jacobian columns 3 and 4) or ``marker-sign`` (the
    sign of the third component of ``da/dalpha`` and ``db/dalpha``).
    The tangent-derivative audit assumes ``p(T)`` is the representative
    ``(e3, e3, e1, e1)`` itself, not merely equivalent to it.
    """
    emap = EndpointMap(p, times, T)
    analytic = OmegaJacobian(emap.analytic_jacobian(), "analytic")
    fd = OmegaJacobian(emap.fd_jacobian(), "finite-difference")
    deviations = []

    printed = emap.printed_jacobian()
    ok = entries_agree(printed, fd.matrix)
    for i, j in zip(*np.nonzero(~ok)):
        deviations.append(
            {
                "quantity": f"d omega_{j + 1} / d alpha_{i + 1}",
                "category": "radius-factor" if j in (2, 3) else "unexplained",
                "printed": float(printed[i, j]),
                "finite_difference": float(fd.matrix[i, j]),
            }
        )

    printed_d = emap.printed_endpoint_derivatives()
    fd_d = emap.fd_endpoint_derivatives()
    ok = entries_agree(printed_d, fd_d)
    for i, k in zip(*np.nonzero(~ok)):
        name = _DERIV_NAMES[k // 3]
        comp = k % 3
        if name == "dv" and comp < 2:
            cat = "radius-factor"
        elif name in ("da", "db") and comp == 2:
            cat = "marker-sign"
        else:
            cat = "unexplained"
        deviations.append(
            {
                "quantity": f"{name}/d alpha_{i + 1}[{comp + 1}]",
                "category": cat,
                "printed": float(printed_d[i, k]),
                "finite_difference": float(fd_d[i, k]),
            }
        )

    agree = entries_agree(analytic.matrix, fd.matrix)
    return {
        "times": list(emap.spec.times),
        "T": emap.T,
        "r": p.r,
        "analytic": _jac_record(analytic),
        "finite_difference": _jac_record(fd),
        "analytic_matches_fd": bool(np.all(agree)),
        "max_abs_difference": float(np.max(np.abs(analytic.matrix - fd.matrix))),
        "deviations": deviations,
    }


def _jac_record(J: OmegaJacobian) -> dict:
    return {
        "mode": J.mode,
        "matrix": J.matrix.tolist(),
        "singular_values": J.singular_values.tolist(),
        "sigma_ratio": singularity_measure(J),
    }


@dataclass
class ShortcutCertificate:
    """A bend of the length-``T`` path that lands on ``p(T_bar)``."""

    alpha: np.ndarray
    times: tuple[float, ...]
    T: float
    T_bar: float
    residual: float
    iterations: int

    def as_dict(self) -> dict:
        return {
            "alpha": [float(a) for a in self.alpha],
            "times": list(self.times),
            "T": self.T,
            "T_bar": self.T_bar,
            "residual": self.residual,
            "iterations": self.iterations,
        }


class ShortcutFailure(ArithmeticError):
    """No shortcut was found.

    ``reason`` is ``"rank-deficient"`` when the endpoint map is singular at
    zero (the path passes the necessary condition for minimality), or
    ``"max-iterations"`` / ``"chart-domain"`` for numerical failure.
    """

    def __init__(self, reason: str, message: str, sigma_ratio: float = float("nan")):
        super().__init__(message)
        self.reason = reason
        self.sigma_ratio = sigma_ratio


def interior_time_tuples(
    times: np.ndarray, T: float, min_sep: float, count: int, rng: np.random.Generator
) -> list[tuple[float, ...]]:
    """Random sorted 5-tuples of sample times in ``(0, T)``, pairwise at least ``min_sep`` apart."""
    pool = np.asarray(times)
    pool = pool[(pool > min_sep) & (pool < T - min_sep)]
    if len(pool) < 5:
        raise ValueError("path has too few interior samples for a five-point bend")
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise ValueError("could not draw well-separated bend times")
        pick = np.sort(rng.choice(pool, size=5, replace=False))
        if np.all(np.diff(pick) >= min_sep):
            out.append(tuple(float(t) for t in pick))
    return out


def shortcut_search(
    p: HorizontalPath,
    T_bar: float,
    tol: float = 1e-8,
    max_iter: int = 20,
    T: Optional[float] = None,
    times: Optional[Sequence[float]] = None,
    seed: int = 0,
    candidates: int = 32,
) -> ShortcutCertificate:
    """Look for bend angles whose endpoint matches ``p(T_bar)``.

    Damped Newton on ``omega(alpha) = w(p(T_bar))`` from ``alpha = 0``, with
    a finite-difference Jacobian at each iterate and step halving (at most 8
    times) whenever the residual grows. When ``times`` is not given, the best
    conditioned of ``candidates`` random interior 5-tuples is used.

    Raises:
        ShortcutFailure: rank deficiency at zero, or no convergence.
    """
    T = p.duration if T is None else float(T)
    if T_bar < T - 1e-12 or T_bar > p.duration + 1e-12:
        raise ValueError(f"T_bar={T_bar} must lie in [T, {p.duration}]")
    target = chart_coords(p.state_at(T_bar))

    if times is None:
        rng = np.random.default_rng(seed)
        pool = interior_time_tuples(p.times, T, 2.0 * p.step, candidates, rng)
        scored = [(singularity_measure(EndpointMap(p, c, T).analytic_jacobian()), c) for c in pool]
        times = max(scored)[1]
    emap = EndpointMap(p, times, T)

    alpha = np.zeros(5)
    resid = emap(alpha) - target
    norm = float(np.linalg.norm(resid))
    if norm <= tol:
        return ShortcutCertificate(alpha, emap.spec.times, T, float(T_bar), norm, 0)

    ratio = singularity_measure(emap.analytic_jacobian())
    if ratio <= SINGULAR_TOL:
        raise ShortcutFailure(
            "rank-deficient",
            f"endpoint map is singular at alpha=0 (sigma5/sigma1 = {ratio:.3e}); "
            "the path satisfies the plane condition on these times",
            ratio,
        )

    for it in range(1, max_iter + 1):
        J = emap.fd_jacobian(alpha)
        delta = -np.linalg.lstsq(J.T, resid, rcond=None)[0]
        lam = 1.0
        for _ in range(9):
            trial = alpha + lam * delta
            try:
                trial_resid = emap(trial) - target
                trial_norm = float(np.linalg.norm(trial_resid))
            except StateError:
                trial_norm = math.inf
            if trial_norm < norm:
                break
            lam *= 0.5
        else:
            raise ShortcutFailure(
                "chart-domain" if not math.isfinite(trial_norm) else "max-iterations",
                f"damped Newton stalled at iteration {it} with residual {norm:.3e}",
                ratio,
            )
        alpha, resid, norm = trial, trial_resid, trial_norm
        if norm <= tol:
            return ShortcutCertificate(alpha, emap.spec.times, T, float(T_bar), norm, it)

    raise ShortcutFailure(
        "max-iterations",
        f"no convergence in {max_iter} iterations (residual {norm:.3e})",
        ratio,
    )
