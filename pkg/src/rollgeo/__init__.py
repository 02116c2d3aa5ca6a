"""Sub-Riemannian toolkit for two spheres rolling without slipping or twisting."""
from rollgeo.bending import (
    BendSpec,
    OmegaJacobian,
    ShortcutCertificate,
    ShortcutFailure,
    bend,
    break_limits,
    jacobian_report,
    omega,
    omega_jacobian,
    shortcut_search,
    singularity_measure,
)
from rollgeo.dynamics import (
    ControlSchedule,
    HorizontalPath,
    anchor_at_base,
    arc_length,
    frame,
    great_circle_roll,
    roll,
)
from rollgeo.geometry import AxisAngle, rotate, rotation_generator
from rollgeo.planes import (
    GeodesicReport,
    PlaneSpec,
    contact_features,
    fit_plane,
    plane_residual,
    trace_plane_curve,
    verify_geodesic,
)
from rollgeo.state import (
    BASE_STATE,
    RawState,
    act,
    canonical_gauge,
    chart_coords,
    equivalent,
    gauge_shift,
    make_state,
)

__version__ = "0.1.0"
