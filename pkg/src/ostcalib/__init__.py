"""Viewpoint-shift calibration for optical see-through displays.

Core package layout:

* :mod:`ostcalib.geometry` — rotations, rigid transforms, pixel projection;
* :mod:`ostcalib.display_model` — the homography-corrected off-axis model,
  its viewpoint-shift update matrices and projection updates;
* :mod:`ostcalib.registration` — the rotation-constrained registration
  solver, the rigid baseline and the rotation guard;
* :mod:`ostcalib.simulation` — seeded synthetic clouds, disturbance
  injection, trial sweeps and their statistics;
* :mod:`ostcalib.fileformats` — cloud / profile / sidecar / CSV files;
* :mod:`ostcalib.service` — FastAPI app exposing the above over HTTP;
* :mod:`ostcalib.cli` — command-line client of the service.
"""

__version__ = "0.1.0"

from .display_model import (
    CalibrationProfile,
    HomographyParams,
    OnAxisIntrinsics,
    ViewpointShift,
    build_Q,
    build_U,
    build_UQ,
    homography_matrix,
    misalignment_transform,
    offline_projection,
    pose_overlay_error,
    project_point,
    reprojection_error,
    updated_projection,
)
from .geometry import (
    PointBehindViewpointError,
    RigidTransform,
    homogeneous_direction,
    homogeneous_point,
    nearest_rotation,
    project_to_pixel,
    rotation_angle,
    rotation_from_axis_angle,
    rotation_vector,
    vec3,
)
from .registration import (
    DegenerateGeometryError,
    LinearSystem,
    NearestNeighborIndex,
    RcIcpOptions,
    RegistrationResult,
    assemble_system,
    build_index,
    icp_rigid,
    phi_from_icp,
    rcicp,
    rotation_guard,
    solve_system,
)
from .simulation import (
    NoiseSpec,
    SweepConfig,
    SyntheticCloudSpec,
    TrialRecord,
    generate_hand_cloud,
    make_trial_pair,
    run_sweep,
    run_trial,
    summarize,
)

__all__ = [
    "CalibrationProfile",
    "DegenerateGeometryError",
    "HomographyParams",
    "LinearSystem",
    "NearestNeighborIndex",
    "NoiseSpec",
    "OnAxisIntrinsics",
    "PointBehindViewpointError",
    "RcIcpOptions",
    "RegistrationResult",
    "RigidTransform",
    "SweepConfig",
    "SyntheticCloudSpec",
    "TrialRecord",
    "ViewpointShift",
    "__version__",
    "assemble_system",
    "build_Q",
    "build_U",
    "build_UQ",
    "build_index",
    "generate_hand_cloud",
    "homogeneous_direction",
    "homogeneous_point",
    "homography_matrix",
    "icp_rigid",
    "make_trial_pair",
    "misalignment_transform",
    "nearest_rotation",
    "offline_projection",
    "phi_from_icp",
    "pose_overlay_error",
    "project_point",
    "project_to_pixel",
    "rcicp",
    "reprojection_error",
    "rotation_angle",
    "rotation_from_axis_angle",
    "rotation_guard",
    "rotation_vector",
    "run_sweep",
    "run_trial",
    "solve_system",
    "summarize",
    "updated_projection",
    "vec3",
]
