"""Homography-corrected off-axis model of the eye-display pair.

The see-through display plus the user's eye behaves as an off-axis pinhole
camera. Relative to an ideal on-axis camera-display pair, the actual
viewpoint position is accounted for by a planar-homography correction H
(shift and scale in the screen plane) applied on top of the on-axis
intrinsics. A later shift of the viewpoint by phi = (phi1, phi2, phi3)
updates H and the extrinsic pose through two small matrices, U and Q, whose
product UQ is the online-correction unknown; phi4_tilde = 1 / (viewpoint to
virtual-screen distance) is fixed offline.

Pixel chain, with all factors as 4x4 matrices in the rendering convention:

    zeta * (u, v, 1) ~ K_on @ H0 @ UQ @ E0 @ v_world

where rows 1, 2, 3 of the product carry the projective image coordinates
and row 4 is homogeneous bookkeeping.

The screen normal is fixed to (0, 0, 1) throughout; it is never stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Mat4,
    Pixel,
    RigidTransform,
    Vec3,
    Vec4,
    as_float_array,
    project_to_pixel,
    rotation_vector,
)

# Viewpoint shifts beyond this are outside any plausible display eye-box and
# get flagged (not rejected) at the user-facing boundary.
EYEBOX_SANITY_LIMIT_M = 0.05

# Tolerance for the redundancy between phi4_tilde and the stored screen distance.
_PHI4_CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class OnAxisIntrinsics:
    """Pinhole intrinsics of the ideal on-axis camera-display pair (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("focal lengths must be positive")
        for v in (self.fx, self.fy, self.cx, self.cy):
            if not np.isfinite(v):
                raise ValueError("intrinsics must be finite")

    @property
    def matrix(self) -> Mat4:
        return np.array(
            [
                [self.fx, 0.0, self.cx, 0.0],
                [0.0, self.fy, self.cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class HomographyParams:
    """Parameters of the viewpoint-correction homography.

    x_ce, y_ce: in-plane offset (meters) from the actual viewpoint to the
    ideal on-axis viewpoint, expressed in the screen frame. z_es and z_cs:
    depths (meters) from the on-axis viewpoint and from the actual viewpoint
    to the virtual screen.
    """

    x_ce: float
    y_ce: float
    z_es: float
    z_cs: float

    def __post_init__(self):
        if not (self.z_es > 0.0 and self.z_cs > 0.0):
            raise ValueError("screen distances must be positive")
        for v in (self.x_ce, self.y_ce, self.z_es, self.z_cs):
            if not np.isfinite(v):
                raise ValueError("homography parameters must be finite")

    @classmethod
    def on_axis(cls, z_cs: float) -> "HomographyParams":
        """Degenerate parameters whose homography is the identity."""
        return cls(0.0, 0.0, z_cs, z_cs)


@dataclass(frozen=True)
class ViewpointShift:
    """Unknown translation (meters) from the calibrated viewpoint to the eye."""

    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self):
        for v in (self.phi1, self.phi2, self.phi3):
            if not np.isfinite(v):
                raise ValueError("viewpoint shift must be finite")

    @classmethod
    def zero(cls) -> "ViewpointShift":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values) -> "ViewpointShift":
        values = as_float_array(values, (3,))
        return cls(float(values[0]), float(values[1]), float(values[2]))

    @property
    def as_array(self) -> Vec3:
        return np.array([self.phi1, self.phi2, self.phi3])

    def within_eyebox(self, limit_m: float = EYEBOX_SANITY_LIMIT_M) -> bool:
        """Sanity check: shifts within a physically plausible eye-box."""
        return bool(np.all(np.abs(self.as_array) <= limit_m))


@dataclass(frozen=True)
class CalibrationProfile:
    """Offline calibration state for one eye.

    phi4_tilde is the reciprocal of the viewpoint-to-screen distance (1/m);
    it is redundant with h0.z_cs and must agree with 1/z_cs when given
    explicitly. t_c0v is the fixed translation (meters) from the calibrated
    viewpoint to the rendering camera origin.
    """

    k_on: OnAxisIntrinsics
    h0: HomographyParams
    phi4_tilde: float | None = None
    t_c0v: Vec3 = None  # type: ignore[assignment]

    def __post_init__(self):
        derived = 1.0 / self.h0.z_cs
        phi4 = derived if self.phi4_tilde is None else float(self.phi4_tilde)
        if not phi4 > 0.0:
            raise ValueError("phi4_tilde must be positive")
        if abs(phi4 - derived) > _PHI4_CONSISTENCY_TOL:
            raise ValueError(
                f"phi4_tilde {phi4} disagrees with 1/z_cs = {derived}"
            )
        t = np.zeros(3) if self.t_c0v is None else as_float_array(self.t_c0v, (3,))
        t.setflags(write=False)
        object.__setattr__(self, "phi4_tilde", phi4)
        object.__setattr__(self, "t_c0v", t)


def homography_matrix(params: HomographyParams) -> Mat4:
    """Viewpoint-correction homography, embedded as a 4x4.

    Scales the image plane by z_cs / z_es and shifts the principal point by
    (-x_ce / z_es, -y_ce / z_es); identity for the on-axis viewpoint.
    """
    scale = params.z_cs / params.z_es
    h = np.eye(4)
    h[0, 0] = scale
    h[1, 1] = scale
    h[0, 2] = -params.x_ce / params.z_es
    h[1, 2] = -params.y_ce / params.z_es
    return h


def build_U(phi: ViewpointShift, phi4_tilde: float) -> Mat4:
    """Update of the homography under a viewpoint shift.

    Diagonal (1 - phi3 * phi4~, same, 1, 1) with entries (1,3) = phi1 * phi4~
    and (2,3) = phi2 * phi4~. Identity when phi4_tilde = 0 (screen at
    infinity) or phi = 0.
    """
    u = np.eye(4)
    u[0, 0] = u[1, 1] = 1.0 - phi.phi3 * phi4_tilde
    u[0, 2] = phi.phi1 * phi4_tilde
    u[1, 2] = phi.phi2 * phi4_tilde
    return u


def build_Q(phi: ViewpointShift) -> Mat4:
    """Update of the extrinsic pose under a viewpoint shift: identity rotation
    with translation column (-phi1, -phi2, -phi3)."""
    q = np.eye(4)
    q[0, 3] = -phi.phi1
    q[1, 3] = -phi.phi2
    q[2, 3] = -phi.phi3
    return q


def build_UQ(phi: ViewpointShift, phi4_tilde: float) -> Mat4:
    """Combined online correction, the exact product build_U @ build_Q.

    Its closed form has (1,4)/(2,4) entries equal to -phi1/-phi2: the
    second-order terms of the product cancel algebraically, so the product
    and the closed form agree to rounding.
    """
    return build_U(phi, phi4_tilde) @ build_Q(phi)


def misalignment_transform(
    phi: ViewpointShift, phi4_tilde: float, extrinsic: RigidTransform
) -> Mat4:
    """World-space map between the cursor-generation cloud and the aligned
    cloud: X^-1 @ UQ @ X for device pose X.

    The result is a general 4x4, not a rigid transform; its 3x3 block is
    near-identity because |phi * phi4_tilde| stays small inside the eye-box.
    """
    return extrinsic.inverse().matrix @ build_UQ(phi, phi4_tilde) @ extrinsic.matrix


def projection_chain(
    profile: CalibrationProfile, phi: ViewpointShift, extrinsic: RigidTransform
) -> Mat4:
    """Full world-to-image matrix K_on @ H0 @ UQ @ E0."""
    return (
        profile.k_on.matrix
        @ homography_matrix(profile.h0)
        @ build_UQ(phi, profile.phi4_tilde)
        @ extrinsic.matrix
    )


def project_point(
    profile: CalibrationProfile,
    phi: ViewpointShift,
    extrinsic: RigidTransform,
    v_world: Vec4,
) -> Pixel:
    """Pixel at which a world point must be drawn for the shifted viewpoint.

    v_world must be a homogeneous point (w = 1) at positive viewing depth.
    """
    v_world = as_float_array(v_world, (4,))
    if v_world[3] != 1.0:
        raise ValueError("v_world must be a point with w = 1")
    h = projection_chain(profile, phi, extrinsic) @ v_world
    return project_to_pixel(h[:3])


def offline_projection(profile: CalibrationProfile) -> Mat4:
    """Rendering projection produced by the offline calibration alone."""
    view_offset = np.eye(4)
    view_offset[:3, 3] = profile.t_c0v
    return profile.k_on.matrix @ homography_matrix(profile.h0) @ view_offset


def updated_projection(profile: CalibrationProfile, phi: ViewpointShift) -> Mat4:
    """Rendering projection refined by an optimised viewpoint shift.

    Inserts UQ between the offline homography and the fixed viewpoint-to-
    rendering-camera offset; reproduces the offline projection when phi = 0.
    """
    view_offset = np.eye(4)
    view_offset[:3, 3] = profile.t_c0v
    return (
        profile.k_on.matrix
        @ homography_matrix(profile.h0)
        @ build_UQ(phi, profile.phi4_tilde)
        @ view_offset
    )


def reprojection_error(gt_pixels, reprojected_pixels) -> float:
    """Mean Euclidean distance (pixels) between paired pixel sequences."""
    gt = np.asarray(gt_pixels, dtype=np.float64)
    re = np.asarray(reprojected_pixels, dtype=np.float64)
    if gt.ndim != 2 or gt.shape[1] != 2:
        raise ValueError("pixel sequences must have shape (N, 2)")
    if gt.shape != re.shape or gt.shape[0] == 0:
        raise ValueError("pixel sequences must be non-empty and equally long")
    return float(np.mean(np.linalg.norm(gt - re, axis=1)))


def pose_overlay_error(
    t_real: RigidTransform, t_virtual: RigidTransform
) -> tuple[Vec3, Vec3]:
    """Overlay error between a tracked real pose and its rendered counterpart.

    Returns (rotation vector of R_virtual @ R_real^T in radians, component-wise
    translation difference in meters). The z translation component is the
    along-depth misalignment.
    """
    relative = t_virtual.rotation @ t_real.rotation.T
    return rotation_vector(relative), t_virtual.translation - t_real.translation
