"""Shared 3D primitives: rotations, rigid transforms, homogeneous points, pixels.

All lengths are meters, all angles radians unless a name says otherwise.
Everything here is a plain float64 numpy array or an immutable value type;
all operations are pure functions, safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]    # shape (3,)
Vec4 = NDArray[np.float64]    # shape (4,), homogeneous, w in {0, 1}
Mat3 = NDArray[np.float64]    # shape (3, 3)
Mat4 = NDArray[np.float64]    # shape (4, 4)
Pixel = NDArray[np.float64]   # shape (2,), (u, v) in pixels
Points = NDArray[np.float64]  # shape (N, 3)

# Orthonormality / unit-length tolerance for constructed rotations.
ROTATION_TOL = 1e-9


class PointBehindViewpointError(ValueError):
    """Projection was requested for a point at non-positive viewing depth."""


def as_float_array(values, shape: tuple[int, ...] | None = None) -> NDArray[np.float64]:
    """Coerce to a float64 array, optionally enforcing a shape, always finite."""
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    return arr


def vec3(x: float, y: float, z: float) -> Vec3:
    """Build a finite 3-vector."""
    return as_float_array([x, y, z], (3,))


def homogeneous_point(p) -> Vec4:
    """Lift a Cartesian 3-vector to homogeneous coordinates with w = 1."""
    p = as_float_array(p, (3,))
    return np.append(p, 1.0)


def homogeneous_direction(v) -> Vec4:
    """Lift a Cartesian 3-vector to homogeneous coordinates with w = 0."""
    v = as_float_array(v, (3,))
    return np.append(v, 0.0)


def skew(v: Vec3) -> Mat3:
    """Cross-product matrix [v]x with [v]x p = v x p."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(axis, angle: float) -> Mat3:
    """Rotation matrix for a right-handed turn of `angle` about a unit `axis`.

    Raises ValueError unless |axis| = 1 within ROTATION_TOL.
    """
    axis = as_float_array(axis, (3,))
    norm = float(np.linalg.norm(axis))
    if abs(norm - 1.0) > ROTATION_TOL:
        raise ValueError(f"rotation axis must be unit length, |axis| = {norm}")
    if angle == 0.0:
        return np.eye(3)
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def rotation_angle(rotation: Mat3) -> float:
    """Magnitude of a rotation in [0, pi], from the matrix trace.

    The arccos argument is clamped to [-1, 1] to absorb floating-point
    overshoot in nearly-identity or nearly-half-turn matrices.
    """
    rotation = as_float_array(rotation, (3, 3))
    cos = (float(np.trace(rotation)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, cos)))


def rotation_vector(rotation: Mat3) -> Vec3:
    """Axis-times-angle vector of a rotation matrix."""
    rotation = as_float_array(rotation, (3, 3))
    angle = rotation_angle(rotation)
    if angle < 1e-12:
        return np.zeros(3)
    antisym = np.array(
        [
            rotation[2, 1] - rotation[1, 2],
            rotation[0, 2] - rotation[2, 0],
            rotation[1, 0] - rotation[0, 1],
        ]
    )
    sin = math.sin(angle)
    if sin > 1e-6:
        return (angle / (2.0 * sin)) * antisym
    # Near a half turn the antisymmetric part degenerates; recover the axis
    # from the dominant column of R + I and orient it by the antisym residual.
    sym = rotation + np.eye(3)
    col = sym[:, int(np.argmax(np.diag(sym)))]
    axis = col / np.linalg.norm(col)
    if np.dot(axis, antisym) < 0.0:
        axis = -axis
    return angle * axis


def rotation_defect(rotation: Mat3) -> float:
    """How far a 3x3 matrix is from being a proper rotation.

    Max of entrywise |R^T R - I| and |det R - 1|; 0 for an exact rotation.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    gram = rotation.T @ rotation
    return max(
        float(np.max(np.abs(gram - np.eye(3)))),
        abs(float(np.linalg.det(rotation)) - 1.0),
    )


def nearest_rotation(matrix: Mat3) -> Mat3:
    """Closest proper rotation in the Frobenius sense (polar decomposition)."""
    matrix = as_float_array(matrix, (3, 3))
    u, _, vt = np.linalg.svd(matrix)
    rot = u @ vt
    if np.linalg.det(rot) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
        rot = u @ vt
    return rot


@dataclass(frozen=True)
class RigidTransform:
    """Rotation-plus-translation map between 3D frames.

    Construction validates orthonormality and det = +1 within ROTATION_TOL;
    drift beyond that must be repaired explicitly (see `nearest_rotation`),
    never silently here.
    """

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        rotation = as_float_array(self.rotation, (3, 3))
        translation = as_float_array(self.translation, (3,))
        defect = rotation_defect(rotation)
        if defect > ROTATION_TOL:
            raise ValueError(f"rotation block is not orthonormal (defect {defect:.3g})")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: Mat4) -> "RigidTransform":
        matrix = as_float_array(matrix, (4, 4))
        if not np.array_equal(matrix[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("bottom row of a rigid transform must be (0, 0, 0, 1)")
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def matrix(self) -> Mat4:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p: Vec4) -> Vec4:
        """Apply to a homogeneous 4-vector; w is preserved, directions (w = 0)
        are rotated but never translated."""
        p = as_float_array(p, (4,))
        return self.matrix @ p

    def apply_points(self, points) -> Points:
        """Apply to Cartesian points of shape (N, 3) or (3,)."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self.compose(other)).apply(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)


def project_to_pixel(h) -> Pixel:
    """Divide homogeneous image coordinates (h1, h2, zeta) by their depth.

    Raises PointBehindViewpointError when zeta <= 0.
    """
    h = as_float_array(h, (3,))
    zeta = h[2]
    if zeta <= 0.0:
        raise PointBehindViewpointError(f"non-positive projective depth {zeta}")
    return np.array([h[0] / zeta, h[1] / zeta])


def transform_points(matrix: Mat4, points) -> Points:
    """Apply a general homogeneous 4x4 map to Cartesian (N, 3) points.

    Caller guarantees the bottom row is (0, 0, 0, 1); no perspective divide.
    """
    points = np.asarray(points, dtype=np.float64)
    return points @ matrix[:3, :3].T + matrix[:3, 3]
