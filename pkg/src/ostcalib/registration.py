"""Point-cloud registration: the rotation-constrained solver and its rigid baseline.

A user alignment yields two unpaired clouds sampled in the world frame: the
cursor-generation cloud (target) and the aligned-hand cloud (source). The
transform between them is constrained to the three-parameter family
M = X^-1 @ UQ(phi) @ X, where X is the device pose at sampling time, so
registering the clouds recovers the viewpoint shift phi directly.

Each iteration of the constrained solver:

  1. matches every transformed source point to its exact nearest neighbour
     in the target (kd-tree, built once);
  2. linearises the squared-distance objective around the previous estimate:
     with lam_i the previous residual, the per-pair term becomes
     lam'_i . (UQ s_i - d_i), linear in phi (s, d are the matched pair
     mapped into the device frame, lam' is lam pulled back through X^-1);
  3. solves the stacked least-squares system for phi via SVD;
  4. recomputes the true error e_k = sum ||M_k p_i - q_i||^2 and stops once
     the improvement ratio e_k / e_{k-1} lands in (convergence_ratio, 1).

The unconstrained baseline is classic point-to-point ICP with a per-iteration
Kabsch solve; a thin wrapper turns its relative rotation into the accept or
reject verdict used to gate user alignments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .display_model import ViewpointShift, misalignment_transform
from .geometry import (
    Mat4,
    Points,
    RigidTransform,
    rotation_angle,
    transform_points,
)

DEFAULT_MAX_ITERATIONS = 800
DEFAULT_CONVERGENCE_RATIO = 0.9999
DEFAULT_ROTATION_GUARD_DEG = 9.0


class DegenerateGeometryError(ValueError):
    """Cloud geometry leaves the solve underdetermined (rank-deficient system)."""


def as_cloud(points, min_points: int = 1) -> Points:
    """Validate and coerce an (N, 3) point cloud, N >= min_points, finite."""
    cloud = np.asarray(points, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise ValueError(f"point cloud must have shape (N, 3), got {cloud.shape}")
    if cloud.shape[0] < min_points:
        raise ValueError(
            f"point cloud needs at least {min_points} points, got {cloud.shape[0]}"
        )
    if not np.all(np.isfinite(cloud)):
        raise ValueError("point cloud contains non-finite coordinates")
    return cloud


@dataclass(frozen=True)
class RcIcpOptions:
    """Iteration limits for the constrained solver.

    The iteration stops once 1 > e_k / e_{k-1} > convergence_ratio (error
    still shrinking, but by less than the ratio allows) or at max_iterations.
    rotation_guard_deg is the relative-rotation bound above which an
    alignment is rejected outright.
    """

    max_iterations: int = DEFAULT_MAX_ITERATIONS
    convergence_ratio: float = DEFAULT_CONVERGENCE_RATIO
    rotation_guard_deg: float = DEFAULT_ROTATION_GUARD_DEG

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.convergence_ratio < 1.0:
            raise ValueError("convergence_ratio must lie in (0, 1)")
        if self.rotation_guard_deg < 0.0:
            raise ValueError("rotation_guard_deg must be >= 0")


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of one constrained registration.

    final_error is the true (not linearised) sum of squared residuals in m^2.
    Both the true and the linearised per-iteration error sequences are kept
    for inspection. guard_rotation_deg is filled only when the rotation guard
    was evaluated alongside the solve.
    """

    phi: ViewpointShift
    iterations: int
    final_error: float
    converged: bool
    guard_rotation_deg: float | None = None
    error_sequence: tuple[float, ...] = ()
    surrogate_sequence: tuple[float, ...] = ()


class NearestNeighborIndex:
    """Exact nearest-neighbour lookup over a fixed cloud (kd-tree backed)."""

    def __init__(self, cloud):
        self.points = as_cloud(cloud, min_points=1)
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the nearest indexed point for each query."""
        distances, indices = self._tree.query(np.asarray(queries, dtype=np.float64))
        return np.atleast_1d(distances), np.atleast_1d(indices)

    def nearest(self, queries) -> Points:
        """Nearest indexed points themselves, one row per query."""
        _, indices = self.query(queries)
        return self.points[indices]


def build_index(cloud) -> NearestNeighborIndex:
    """Build an immutable exact nearest-neighbour index over a cloud."""
    return NearestNeighborIndex(cloud)


@dataclass(frozen=True)
class LinearSystem:
    """Stacked per-correspondence rows A (n, 3) and right-hand side b (n,)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 3 or b.shape != (a.shape[0],):
            raise ValueError("system must have A of shape (n, 3) and b of shape (n,)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def assemble_system(
    source_points,
    matched_targets,
    m_prev: Mat4,
    extrinsic: RigidTransform,
    phi4_tilde: float,
) -> LinearSystem:
    """Linearised rows of the constrained objective for matched pairs (p, q).

    lam_i = M_prev p_i - q_i is the previous residual (a direction, so only
    its first three components survive the X^-1 pullback: lam'_i = R_X lam_i).
    With s_i = X p_i and d_i = X q_i the row for pair j is

        A_j = -[ lam'_jx (1 - phi4~ s_jz),
                 lam'_jy (1 - phi4~ s_jz),
                 phi4~ (lam'_jx s_jx + lam'_jy s_jy) + lam'_jz ]
        b_j = (d_j - s_j) . lam'_j
    """
    p = as_cloud(source_points, min_points=1)
    q = as_cloud(matched_targets, min_points=1)
    if p.shape != q.shape:
        raise ValueError("source points and matched targets must pair up")

    lam = transform_points(m_prev, p) - q
    lam_p = lam @ extrinsic.rotation.T
    s = extrinsic.apply_points(p)
    d = extrinsic.apply_points(q)

    depth_factor = 1.0 - phi4_tilde * s[:, 2]
    a = np.empty((p.shape[0], 3))
    a[:, 0] = -lam_p[:, 0] * depth_factor
    a[:, 1] = -lam_p[:, 1] * depth_factor
    a[:, 2] = -(
        phi4_tilde * (lam_p[:, 0] * s[:, 0] + lam_p[:, 1] * s[:, 1]) + lam_p[:, 2]
    )
    b = np.einsum("ij,ij->i", d - s, lam_p)
    return LinearSystem(a, b)


def solve_system(system: LinearSystem) -> ViewpointShift:
    """Least-squares viewpoint shift minimising ||A x - b||^2, solved by SVD.

    Raises DegenerateGeometryError when rank(A) < 3 (residual directions
    collinear or coplanar).
    """
    solution, _, rank, _ = np.linalg.lstsq(system.a, system.b, rcond=None)
    if rank < 3:
        raise DegenerateGeometryError(
            f"linear system has rank {rank} < 3; cloud geometry is degenerate"
        )
    return ViewpointShift.from_array(solution)


def _centroid_alignment(source: Points, target: Points) -> Mat4:
    """Pure translation taking the source centroid onto the target centroid."""
    m = np.eye(4)
    m[:3, 3] = target.mean(axis=0) - source.mean(axis=0)
    return m


def rcicp(
    source,
    target,
    extrinsic: RigidTransform,
    phi4_tilde: float,
    options: RcIcpOptions = RcIcpOptions(),
) -> RegistrationResult:
    """Register source onto target within the constrained family X^-1 UQ X.

    The first correspondence search seeds from a centroid-aligning pure
    translation (no constrained map realises an arbitrary centroid shift, so
    the seed is used for matching only and never reported). The returned phi
    always corresponds to an exactly conjugated update.
    """
    p = as_cloud(source, min_points=4)
    t = as_cloud(target, min_points=4)
    index = build_index(t)

    phi = ViewpointShift.zero()
    m_prev = _centroid_alignment(p, t)
    moved = transform_points(m_prev, p)
    distances, indices = index.query(moved)
    e_prev = float(np.dot(distances, distances))

    errors = [e_prev]
    surrogates: list[float] = []
    iterations = 0
    converged = False
    final_error = e_prev

    for k in range(1, options.max_iterations + 1):
        if e_prev == 0.0:
            # Exact overlap: no residual left to drive a further update.
            converged = True
            break
        q = t[indices]
        system = assemble_system(p, q, m_prev, extrinsic, phi4_tilde)
        phi = solve_system(system)
        m_k = misalignment_transform(phi, phi4_tilde, extrinsic)
        lam = moved - q
        moved = transform_points(m_k, p)
        residual = moved - q
        e_k = float(np.einsum("ij,ij->", residual, residual))
        surrogates.append(float(np.einsum("ij,ij->", residual, lam)))
        errors.append(e_k)
        iterations = k
        final_error = e_k

        ratio = e_k / e_prev
        if options.convergence_ratio < ratio < 1.0:
            converged = True
            break
        m_prev = m_k
        e_prev = e_k
        distances, indices = index.query(moved)

    return RegistrationResult(
        phi=phi,
        iterations=iterations,
        final_error=final_error,
        converged=converged,
        error_sequence=tuple(errors),
        surrogate_sequence=tuple(surrogates),
    )


def _kabsch(source: Points, target: Points) -> RigidTransform:
    """Optimal rigid map source -> target for paired points (SVD of the
    cross-covariance, reflection-corrected)."""
    cs = source.mean(axis=0)
    ct = target.mean(axis=0)
    cross = (source - cs).T @ (target - ct)
    u, singular, vt = np.linalg.svd(cross)
    if singular[1] <= max(singular[0], 1e-300) * 1e-12:
        raise DegenerateGeometryError("cloud is collinear; rigid fit is ambiguous")
    rotation = vt.T @ u.T
    if np.linalg.det(rotation) < 0.0:
        vt = vt.copy()
        vt[-1, :] *= -1.0
        rotation = vt.T @ u.T
    return RigidTransform(rotation, ct - rotation @ cs)


def icp_rigid(
    source,
    target,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    convergence_ratio: float = DEFAULT_CONVERGENCE_RATIO,
) -> RigidTransform:
    """Classic point-to-point ICP; returns M with target ~= M @ source."""
    transform, _, _ = icp_rigid_detailed(
        source, target, max_iterations, convergence_ratio
    )
    return transform


def icp_rigid_detailed(
    source,
    target,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    convergence_ratio: float = DEFAULT_CONVERGENCE_RATIO,
) -> tuple[RigidTransform, int, bool]:
    """ICP with iteration count and convergence flag, for harness reporting.

    Same centroid seeding and termination rule as the constrained solver so
    the two methods are compared on equal footing.
    """
    p = as_cloud(source, min_points=3)
    t = as_cloud(target, min_points=3)
    index = build_index(t)

    transform = RigidTransform(np.eye(3), t.mean(axis=0) - p.mean(axis=0))
    moved = transform.apply_points(p)
    distances, indices = index.query(moved)
    e_prev = float(np.dot(distances, distances))

    iterations = 0
    converged = False
    for k in range(1, max_iterations + 1):
        if e_prev == 0.0:
            converged = True
            break
        q = t[indices]
        transform = _kabsch(p, q)
        moved = transform.apply_points(p)
        residual = moved - q
        e_k = float(np.einsum("ij,ij->", residual, residual))
        iterations = k

        ratio = e_k / e_prev
        if convergence_ratio < ratio < 1.0:
            converged = True
            break
        e_prev = e_k
        distances, indices = index.query(moved)

    return transform, iterations, converged


def phi_from_icp(m_icp: RigidTransform, extrinsic: RigidTransform) -> ViewpointShift:
    """Viewpoint shift implied by an unconstrained rigid registration.

    Conjugates back into the update frame, UQ_icp = X @ M_icp @ X^-1, and
    negates its translation column to match the (-phi1, -phi2, -phi3)
    convention of the constrained update.
    """
    uq_icp = extrinsic.matrix @ m_icp.matrix @ extrinsic.inverse().matrix
    return ViewpointShift.from_array(-uq_icp[:3, 3])


def guard_accepts(rotation_deg: float, threshold_deg: float) -> bool:
    """Accept rule for the rotation guard; the boundary is inclusive."""
    return rotation_deg <= threshold_deg


def rotation_guard(
    source,
    target,
    threshold_deg: float = DEFAULT_ROTATION_GUARD_DEG,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> tuple[float, bool]:
    """Measure the relative rotation between two clouds and gate on it.

    Runs the unconstrained rigid registration and reports (rotation in
    degrees, accepted). Alignments rotated beyond the threshold cannot be
    explained by a viewpoint shift and must be redone.
    """
    m_icp = icp_rigid(source, target, max_iterations)
    rotation_deg = float(np.degrees(rotation_angle(m_icp.rotation)))
    return rotation_deg, guard_accepts(rotation_deg, threshold_deg)


__all__ = [
    "DEFAULT_CONVERGENCE_RATIO",
    "DEFAULT_MAX_ITERATIONS",
    "DEFAULT_ROTATION_GUARD_DEG",
    "DegenerateGeometryError",
    "LinearSystem",
    "NearestNeighborIndex",
    "RcIcpOptions",
    "RegistrationResult",
    "as_cloud",
    "assemble_system",
    "build_index",
    "guard_accepts",
    "icp_rigid",
    "icp_rigid_detailed",
    "phi_from_icp",
    "rcicp",
    "rotation_guard",
    "solve_system",
]
