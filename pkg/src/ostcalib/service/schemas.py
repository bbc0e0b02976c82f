"""Request/response models for the calibration service.

Geometry is exchanged in meters (suffix _m) and degrees; pixel quantities say
so in their names. Device poses travel as 12 row-major reals of the 3x4
rotation-translation block.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, ConfigDict, Field

from ..display_model import (
    CalibrationProfile,
    HomographyParams,
    OnAxisIntrinsics,
    ViewpointShift,
)
from ..registration import RcIcpOptions
from ..simulation import (
    LevelStats,
    SweepSummary,
    SyntheticCloudSpec,
    TrialRecord,
)

Vec3List = list[float]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CloudSpecModel(StrictModel):
    point_count: int = Field(ge=50)
    extent: float = Field(default=0.18, gt=0.0)
    depth_jitter: float = Field(default=0.01, ge=0.0)
    center: Vec3List = Field(default=[0.0, 0.0, 0.5], min_length=3, max_length=3)
    seed: int = 0

    def to_spec(self) -> SyntheticCloudSpec:
        return SyntheticCloudSpec(
            point_count=self.point_count,
            extent=self.extent,
            depth_jitter=self.depth_jitter,
            center=tuple(self.center),
            seed=self.seed,
        )


class CloudGenerateRequest(CloudSpecModel):
    pass


class CloudResponse(StrictModel):
    points: list[Vec3List]


class OptionsModel(StrictModel):
    max_iterations: int = Field(default=800, ge=1)
    convergence_ratio: float = Field(default=0.9999, gt=0.0, lt=1.0)
    rotation_guard_deg: float = Field(default=9.0, ge=0.0)

    def to_options(self) -> RcIcpOptions:
        return RcIcpOptions(
            max_iterations=self.max_iterations,
            convergence_ratio=self.convergence_ratio,
            rotation_guard_deg=self.rotation_guard_deg,
        )


class ProfileModel(StrictModel):
    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    x_ce: float = 0.0
    y_ce: float = 0.0
    z_cs: float = Field(gt=0.0)
    z_es: float = Field(gt=0.0)
    phi4_tilde: float | None = None
    t_c0v: Vec3List = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)

    def to_profile(self) -> CalibrationProfile:
        return CalibrationProfile(
            k_on=OnAxisIntrinsics(self.fx, self.fy, self.cx, self.cy),
            h0=HomographyParams(self.x_ce, self.y_ce, self.z_es, self.z_cs),
            phi4_tilde=self.phi4_tilde,
            t_c0v=self.t_c0v,
        )


class SimulateRequest(StrictModel):
    cloud: CloudSpecModel
    phi4_tilde: float = Field(default=0.5, gt=0.0)
    noise_deg: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    phi_gt_m: Vec3List | None = Field(default=None, min_length=3, max_length=3)
    extrinsic: list[float] | None = Field(default=None, min_length=12, max_length=12)


class SimulateResponse(StrictModel):
    source: list[Vec3List]
    target: list[Vec3List]
    phi_gt_m: Vec3List
    extrinsic: list[float]
    seed: int
    noise_deg: float
    warning: str | None = None


class RegisterRequest(StrictModel):
    source: list[Vec3List]
    target: list[Vec3List]
    extrinsic: list[float] = Field(min_length=12, max_length=12)
    phi4_tilde: float = Field(gt=0.0)
    options: OptionsModel = OptionsModel()


class RegisterResponse(StrictModel):
    status: str  # "ok" | "guard_rejected" | "degenerate"
    guard_rotation_deg: float | None = None
    phi_m: Vec3List | None = None
    iterations: int | None = None
    converged: bool | None = None
    final_error_m2: float | None = None
    detail: str | None = None
    warning: str | None = None


class GuardRequest(StrictModel):
    source: list[Vec3List]
    target: list[Vec3List]
    threshold_deg: float = Field(default=9.0, ge=0.0)


class GuardResponse(StrictModel):
    status: str  # "ok" | "degenerate"
    rotation_deg: float | None = None
    accepted: bool | None = None
    detail: str | None = None


class ProjectionUpdateRequest(StrictModel):
    profile: ProfileModel
    phi_m: Vec3List = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)


class ProjectionUpdateResponse(StrictModel):
    matrix: list[list[float]]
    warning: str | None = None


class SweepRequest(StrictModel):
    rotation_start_deg: float = Field(default=0.0, ge=0.0)
    rotation_stop_deg: float = Field(default=20.0, ge=0.0)
    rotation_step_deg: float = Field(default=1.0, gt=0.0)
    trials_per_level: int = Field(default=20, ge=1)
    phi4_tilde: float = Field(default=0.5, gt=0.0)
    phi_policy: str = Field(default="random", pattern="^(random|fixed)$")
    phi_fixed_m: Vec3List = Field(default=[0.0, 0.0, 0.0], min_length=3, max_length=3)
    x_policy: str = Field(default="random", pattern="^(random|fixed)$")
    x_fixed: list[float] | None = Field(default=None, min_length=12, max_length=12)
    base_seed: int = 0
    cloud: CloudSpecModel
    options: OptionsModel = OptionsModel()


class TrialRecordModel(StrictModel):
    seed: int
    rotation_deg: float
    phi_gt_m: Vec3List
    phi_rcicp_m: Vec3List | None
    phi_icp_m: Vec3List | None
    err_rcicp_m: Vec3List | None
    err_icp_m: Vec3List | None
    iterations_rcicp: int
    iterations_icp: int
    converged_rcicp: bool
    converged_icp: bool
    guard_rotation_deg: float | None
    failure: str | None = None

    @classmethod
    def from_record(cls, record: TrialRecord) -> "TrialRecordModel":
        def shift(value: ViewpointShift | None) -> Vec3List | None:
            return None if value is None else list(value.as_array)

        def errs(values) -> Vec3List | None:
            vals = [float(v) for v in values]
            return None if any(math.isnan(v) for v in vals) else vals

        guard = record.guard_rotation_deg
        return cls(
            seed=record.seed,
            rotation_deg=record.rotation_deg,
            phi_gt_m=list(record.phi_gt.as_array),
            phi_rcicp_m=shift(record.phi_rcicp),
            phi_icp_m=shift(record.phi_icp),
            err_rcicp_m=errs(record.err_rcicp),
            err_icp_m=errs(record.err_icp),
            iterations_rcicp=record.iterations_rcicp,
            iterations_icp=record.iterations_icp,
            converged_rcicp=record.converged_rcicp,
            converged_icp=record.converged_icp,
            guard_rotation_deg=None if math.isnan(guard) else guard,
            failure=record.failure,
        )


class LevelStatsModel(StrictModel):
    level_deg: float
    method: str
    median_mm: Vec3List | None
    mean_mm: Vec3List | None
    std_mm: Vec3List | None
    trial_count: int
    failed_count: int

    @classmethod
    def from_stats(cls, stats: LevelStats) -> "LevelStatsModel":
        def finite(values) -> Vec3List | None:
            vals = [float(v) for v in values]
            return None if any(math.isnan(v) for v in vals) else vals

        return cls(
            level_deg=stats.level_deg,
            method=stats.method,
            median_mm=finite(stats.median_mm),
            mean_mm=finite(stats.mean_mm),
            std_mm=finite(stats.std_mm),
            trial_count=stats.trial_count,
            failed_count=stats.failed_count,
        )


class SweepSummaryModel(StrictModel):
    levels: list[LevelStatsModel]
    tolerance_deg: float | None
    baseline_mm: float

    @classmethod
    def from_summary(cls, summary: SweepSummary) -> "SweepSummaryModel":
        return cls(
            levels=[LevelStatsModel.from_stats(s) for s in summary.levels],
            tolerance_deg=summary.tolerance_deg,
            baseline_mm=summary.baseline_mm,
        )


class SweepResponse(StrictModel):
    records: list[TrialRecordModel]
    summary: SweepSummaryModel
    trials_per_level: int
