import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollgeo.bending import EndpointMap, interior_time_tuples, singularity_measure
from rollgeo.dynamics import ControlSchedule, anchor_at_base, great_circle_roll, roll
from rollgeo.planes import (
    CONSISTENT,
    INCONCLUSIVE,
    NOT_MINIMIZING,
    DegeneratePathError,
    DegeneratePlaneError,
    PlaneSpec,
    contact_features,
    fit_plane,
    plane_rates,
    plane_residual,
    trace_plane_curve,
    verify_geodesic,
)
from rollgeo.state import (
    BASE_STATE,
    StateError,
    act,
    gauge_shift,
    random_rotation,
    random_state,
)

from conftest import generic_path, plane_path, seeded_plane


def pure_x1(r=2.0, duration=2.0):
    return roll(BASE_STATE, r, ControlSchedule.constant(0.0, duration), 1e-3)


class TestFeatures:
    def test_base(self):
        np.testing.assert_array_equal(contact_features(BASE_STATE), np.zeros(5))

    @pytest.mark.parametrize("t", [0.4, 1.2, 2.9])
    def test_x2_roll(self, t):
        s = great_circle_roll(BASE_STATE, 2.0, math.pi / 2, t)
        expected = [0.0, math.sin(t), 0.0, -math.sin(t / 2), math.cos(t) - math.cos(t / 2)]
        np.testing.assert_allclose(contact_features(s), expected, atol=1e-15)

    @given(st.integers(0, 10_000), st.floats(-7.0, 7.0))
    def test_gauge_invariant(self, seed, theta):
        s = random_state(np.random.default_rng(seed))
        np.testing.assert_array_equal(contact_features(gauge_shift(s, theta)), contact_features(s))

    def test_stack(self, rng):
        states = [random_state(rng) for _ in range(4)]
        stacked = contact_features(np.array([s.as_array() for s in states]))
        for row, s in zip(stacked, states):
            np.testing.assert_array_equal(row, contact_features(s))


class TestPlaneSpec:
    def test_unit_norm_required(self):
        with pytest.raises(ValueError):
            PlaneSpec([1.0, 1.0, 0.0, 0.0, 0.0])

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            PlaneSpec.from_coefficients(np.zeros(5))

    def test_value_matches_features(self, rng):
        plane = seeded_plane(1)
        s = random_state(rng)
        assert plane.value(s) == pytest.approx(plane.k @ contact_features(s), abs=1e-15)

    def test_transported_base(self, rng):
        # a plane stated relative to another base state is the base-n plane pulled back
        s = random_state(rng)
        g1, g2 = random_rotation(rng), random_rotation(rng)
        base = act(g1, g2, BASE_STATE)
        plane = PlaneSpec(seeded_plane(2).k, base)
        assert plane.value(act(g1, g2, s)) == pytest.approx(seeded_plane(2).value(s), abs=1e-14)


class TestResidual:
    def test_pure_x1(self):
        p = pure_x1()
        assert plane_residual(p, PlaneSpec([0, 1, 0, 0, 0])) <= 1e-12

    def test_refinement(self):
        plane = seeded_plane(3)
        coarse = roll(BASE_STATE, 2.0, ControlSchedule.constant(0.7, 1.0), 1e-2)
        fine = roll(BASE_STATE, 2.0, ControlSchedule.constant(0.7, 1.0), 5e-3)
        # the coarse samples are a subset of the fine ones
        sub = fine.states[::2]
        assert np.max(np.abs(sub - coarse.states)) <= 1e-9
        assert plane_residual(fine, plane) >= plane_residual(coarse, plane) - 1e-9

    def test_generic_path_is_not_planar(self):
        p = generic_path(20, r=0.3, segments=20, duration=20.0)
        fit = fit_plane(p)
        assert plane_residual(p, fit.plane) > 1e-4


class TestFit:
    def test_pure_x1(self):
        fit = fit_plane(pure_x1())
        assert fit.sigma_min <= 1e-10
        assert fit.null_dim == 2
        # any reported k lies in the null space spanned by e2 and e4
        assert plane_residual(pure_x1(), fit.plane) <= 1e-10
        assert np.linalg.norm(fit.plane.k[[0, 2, 4]]) <= 1e-8

    def test_zero_duration(self):
        p = roll(BASE_STATE, 2.0, ControlSchedule(()), 1e-3)
        with pytest.raises(DegeneratePathError):
            fit_plane(p)

    @pytest.mark.parametrize("seed", range(3))
    def test_round_trip(self, seed):
        plane = seeded_plane(seed)
        fit = fit_plane(plane_path(seed))
        assert fit.null_dim == 1
        assert fit.unique
        assert min(np.linalg.norm(fit.plane.k - plane.k), np.linalg.norm(fit.plane.k + plane.k)) <= 1e-8

    def test_sign_convention(self):
        fit = fit_plane(plane_path(4))
        assert fit.plane.k[np.argmax(np.abs(fit.plane.k))] > 0


class TestTrace:
    @pytest.mark.parametrize("r", [0.5, 2.0])
    def test_e2_plane_gives_pure_x1(self, r):
        p = trace_plane_curve(BASE_STATE, r, PlaneSpec([0, 1, 0, 0, 0]), 1.0, 1e-3)
        np.testing.assert_allclose(p.thetas, 0.0, atol=1e-12)
        ref = great_circle_roll(BASE_STATE, r, 0.0, 1.0)
        np.testing.assert_allclose(p.final.as_array(), ref.as_array(), atol=1e-10)

    def test_rates_at_base(self):
        A, B = plane_rates(BASE_STATE.as_array().tolist(), 2.0, PlaneSpec([0, 1, 0, 0, 0]).normal6())
        assert A == 0.0 and B == 1.0

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_e5_plane_is_degenerate(self, r):
        with pytest.raises(DegeneratePlaneError):
            trace_plane_curve(BASE_STATE, r, PlaneSpec([0, 0, 0, 0, 1]), 1.0, 1e-3)

    @pytest.mark.parametrize("seed", range(3))
    def test_stays_on_plane(self, seed):
        p = plane_path(seed)
        assert plane_residual(p, seeded_plane(seed)) <= 1e-9
        assert p.max_drift() <= 1e-10

    def test_rate_along_curve(self):
        plane = seeded_plane(0)
        p = plane_path(0)
        normal = plane.normal6()
        for x, th in zip(p.states[::100], p.thetas[::100]):
            A, B = plane_rates(x.tolist(), p.r, normal)
            assert abs(A * math.cos(th) + B * math.sin(th)) <= 1e-9

    def test_direction_continuity(self):
        p = plane_path(1)
        d = np.abs(np.angle(np.exp(1j * np.diff(p.thetas))))
        assert d.max() < math.pi / 2

    def test_start_off_plane(self):
        s = great_circle_roll(BASE_STATE, 2.0, 0.0, 0.5)
        with pytest.raises(StateError):
            trace_plane_curve(s, 2.0, PlaneSpec([1, 0, 0, 0, 0]), 1.0, 1e-3)

    def test_zero_duration(self):
        p = trace_plane_curve(BASE_STATE, 2.0, seeded_plane(0), 0.0, 1e-3)
        assert len(p) == 1


class TestNecessity:
    @pytest.mark.parametrize("seed", range(2))
    def test_planar_paths_have_singular_jacobians(self, seed):
        p = plane_path(seed)
        q = anchor_at_base(p)
        rng = np.random.default_rng(seed)
        for times in interior_time_tuples(q.times, q.duration, 2e-3, 20, rng):
            assert singularity_measure(EndpointMap(q, times).analytic_jacobian()) <= 1e-7


class TestVerify:
    def test_plane_curve(self):
        rep = verify_geodesic(plane_path(0), trials=30)
        assert rep.verdict == CONSISTENT
        assert rep.max_residual <= 1e-9
        assert rep.singularity_max <= 1e-7
        assert rep.certificate is None

    def test_pure_x1(self):
        rep = verify_geodesic(pure_x1(), trials=30)
        assert rep.verdict == CONSISTENT
        assert any("not unique" in n for n in rep.notes)

    def test_two_segment_roll(self):
        sched = ControlSchedule(((1.3, 0.4), (1.7, -1.9), (0.05, 0.8)))
        p = roll(BASE_STATE, 2.0, sched, 1e-3)
        rep = verify_geodesic(p, trials=30, T=3.0)
        assert rep.verdict == NOT_MINIMIZING
        assert rep.certificate["residual"] <= 1e-8
        assert rep.certificate["T_bar"] > rep.certificate["T"]

    def test_no_room_past_end(self):
        sched = ControlSchedule(((1.3, 0.4), (1.7, -1.9)))
        rep = verify_geodesic(roll(BASE_STATE, 2.0, sched, 1e-3), trials=10)
        assert rep.verdict == NOT_MINIMIZING

    def test_deviation_records(self):
        rep = verify_geodesic(plane_path(0), trials=5)
        cats = {d["category"] for d in rep.deviations}
        assert cats == {"v-row-scaling", "radius-factor", "marker-sign", "w5-representative-dependence"}

    def test_deterministic(self):
        p = plane_path(2)
        assert verify_geodesic(p, trials=10, seed=3).as_dict() == verify_geodesic(p, trials=10, seed=3).as_dict()

    def test_transport_invariance(self):
        p = plane_path(1)
        base = verify_geodesic(p, trials=20)
        rng = np.random.default_rng(99)
        for _ in range(3):
            q = p.transformed(random_rotation(rng), random_rotation(rng))
            rep = verify_geodesic(q, trials=20)
            assert rep.verdict == base.verdict
            floor = 1e-12
            assert max(rep.max_residual, floor) <= 2 * max(base.max_residual, floor)
            assert max(base.max_residual, floor) <= 2 * max(rep.max_residual, floor)

    def test_too_short_is_inconclusive(self):
        p = roll(BASE_STATE, 2.0, ControlSchedule.constant(0.3, 0.002), 1e-3)
        rep = verify_geodesic(p, trials=5)
        assert rep.verdict == INCONCLUSIVE
        assert rep.notes
