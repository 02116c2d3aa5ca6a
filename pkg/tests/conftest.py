import math

import numpy as np
import pytest

from rollgeo.dynamics import ControlSchedule, anchor_at_base, random_schedule, roll
from rollgeo.planes import PlaneSpec, trace_plane_curve
from rollgeo.state import BASE_STATE, random_state


def generic_path(seed, r=2.0, segments=6, duration=3.0, extra=0.0, step=1e-3):
    """Random piecewise control roll, anchored so that p(duration) is the base state."""
    rng = np.random.default_rng(seed)
    sched = random_schedule(rng, segments, duration)
    if extra > 0:
        sched = ControlSchedule(sched.segments + ((extra, float(rng.uniform(-math.pi, math.pi))),))
    p = roll(random_state(rng), r, sched, step)
    return anchor_at_base(p, duration)


def seeded_plane(seed):
    rng = np.random.default_rng(seed)
    return PlaneSpec.from_coefficients(rng.standard_normal(5))


def plane_path(seed, r=2.0, duration=3.0, step=1e-3):
    return trace_plane_curve(BASE_STATE, r, seeded_plane(seed), duration, step)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
