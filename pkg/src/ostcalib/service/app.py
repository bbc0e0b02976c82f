"""HTTP face of the calibration toolkit.

Stateless JSON endpoints over the core package; every handler is a pure
function of its request body, so results are reproducible from the payload
alone. Domain verdicts that a caller must branch on (guard rejection,
degenerate geometry) are reported as status fields in a 200 response;
malformed inputs raise 400/422.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..display_model import (
    EYEBOX_SANITY_LIMIT_M,
    ViewpointShift,
    updated_projection,
)
from ..fileformats import FileFormatError, extrinsic_from_values
from ..geometry import RigidTransform
from ..registration import (
    DegenerateGeometryError,
    guard_accepts,
    rcicp,
    rotation_guard,
)
from ..simulation import (
    NoiseSpec,
    SweepConfig,
    generate_hand_cloud,
    make_trial_pair,
    run_sweep,
    seeded_device_pose,
    seeded_viewpoint_shift,
    summarize,
)
from .schemas import (
    CloudGenerateRequest,
    CloudResponse,
    GuardRequest,
    GuardResponse,
    ProjectionUpdateRequest,
    ProjectionUpdateResponse,
    RegisterRequest,
    RegisterResponse,
    SimulateRequest,
    SimulateResponse,
    SweepRequest,
    SweepResponse,
    SweepSummaryModel,
    TrialRecordModel,
)


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _pose(values) -> tuple[RigidTransform, str | None]:
    try:
        return extrinsic_from_values(values)
    except FileFormatError as exc:
        raise _bad_request(exc) from None


def _points(rows) -> np.ndarray:
    return np.asarray(rows, dtype=np.float64)


def _rows(points: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in points]


def _eyebox_warning(phi: ViewpointShift) -> str | None:
    if phi.within_eyebox():
        return None
    return (
        f"viewpoint shift exceeds the {EYEBOX_SANITY_LIMIT_M * 1e3:.0f} mm "
        "eye-box sanity bound"
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="ostcalib",
        version=__version__,
        description="Viewpoint-shift calibration for optical see-through displays.",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/cloud/generate", response_model=CloudResponse)
    def cloud_generate(request: CloudGenerateRequest) -> CloudResponse:
        try:
            cloud = generate_hand_cloud(request.to_spec())
        except ValueError as exc:
            raise _bad_request(exc) from None
        return CloudResponse(points=_rows(cloud))

    @app.post("/trial/simulate", response_model=SimulateResponse)
    def trial_simulate(request: SimulateRequest) -> SimulateResponse:
        try:
            source = generate_hand_cloud(request.cloud.to_spec())
        except ValueError as exc:
            raise _bad_request(exc) from None

        phi_seed, x_seed, noise_seed = (
            int(v)
            for v in np.random.SeedSequence(request.seed).generate_state(3, np.uint64)
        )
        warning = None
        if request.phi_gt_m is not None:
            phi_gt = ViewpointShift.from_array(request.phi_gt_m)
        else:
            phi_gt = seeded_viewpoint_shift(np.random.default_rng(phi_seed))
        if request.extrinsic is not None:
            extrinsic, warning = _pose(request.extrinsic)
        else:
            extrinsic = seeded_device_pose(np.random.default_rng(x_seed))

        source, target = make_trial_pair(
            source,
            phi_gt,
            request.phi4_tilde,
            extrinsic,
            NoiseSpec(request.noise_deg, noise_seed),
        )
        pose_rows = np.hstack(
            [extrinsic.rotation, extrinsic.translation[:, None]]
        ).ravel()
        return SimulateResponse(
            source=_rows(source),
            target=_rows(target),
            phi_gt_m=list(phi_gt.as_array),
            extrinsic=[float(v) for v in pose_rows],
            seed=request.seed,
            noise_deg=request.noise_deg,
            warning=warning,
        )

    @app.post("/registration/run", response_model=RegisterResponse)
    def registration_run(request: RegisterRequest) -> RegisterResponse:
        extrinsic, pose_warning = _pose(request.extrinsic)
        options = request.options.to_options()
        source = _points(request.source)
        target = _points(request.target)

        try:
            guard_deg, accepted = rotation_guard(
                source, target, options.rotation_guard_deg, options.max_iterations
            )
        except DegenerateGeometryError as exc:
            return RegisterResponse(status="degenerate", detail=str(exc))
        except ValueError as exc:
            raise _bad_request(exc) from None

        if not accepted:
            return RegisterResponse(
                status="guard_rejected",
                guard_rotation_deg=guard_deg,
                detail=(
                    f"relative rotation {guard_deg:.2f} deg exceeds the "
                    f"{options.rotation_guard_deg:g} deg guard; redo the alignment"
                ),
                warning=pose_warning,
            )

        try:
            result = rcicp(source, target, extrinsic, request.phi4_tilde, options)
        except DegenerateGeometryError as exc:
            return RegisterResponse(
                status="degenerate", guard_rotation_deg=guard_deg, detail=str(exc)
            )
        except ValueError as exc:
            raise _bad_request(exc) from None

        warnings = [w for w in (pose_warning, _eyebox_warning(result.phi)) if w]
        return RegisterResponse(
            status="ok",
            guard_rotation_deg=guard_deg,
            phi_m=list(result.phi.as_array),
            iterations=result.iterations,
            converged=result.converged,
            final_error_m2=result.final_error,
            warning="; ".join(warnings) if warnings else None,
        )

    @app.post("/registration/guard", response_model=GuardResponse)
    def registration_guard(request: GuardRequest) -> GuardResponse:
        try:
            rotation_deg, accepted = rotation_guard(
                _points(request.source), _points(request.target), request.threshold_deg
            )
        except DegenerateGeometryError as exc:
            return GuardResponse(status="degenerate", detail=str(exc))
        except ValueError as exc:
            raise _bad_request(exc) from None
        return GuardResponse(
            status="ok",
            rotation_deg=rotation_deg,
            accepted=guard_accepts(rotation_deg, request.threshold_deg),
        )

    @app.post("/projection/update", response_model=ProjectionUpdateResponse)
    def projection_update(request: ProjectionUpdateRequest) -> ProjectionUpdateResponse:
        try:
            profile = request.profile.to_profile()
            phi = ViewpointShift.from_array(request.phi_m)
        except ValueError as exc:
            raise _bad_request(exc) from None
        matrix = updated_projection(profile, phi)
        return ProjectionUpdateResponse(
            matrix=[[float(v) for v in row] for row in matrix],
            warning=_eyebox_warning(phi),
        )

    @app.post("/sweep/run", response_model=SweepResponse)
    def sweep_run(request: SweepRequest) -> SweepResponse:
        x_fixed = None
        if request.x_fixed is not None:
            x_fixed, _ = _pose(request.x_fixed)
        try:
            cfg = SweepConfig(
                rotation_range=(
                    request.rotation_start_deg,
                    request.rotation_stop_deg,
                    request.rotation_step_deg,
                ),
                trials_per_level=request.trials_per_level,
                phi4_tilde=request.phi4_tilde,
                phi_policy=request.phi_policy,
                phi_fixed=ViewpointShift.from_array(request.phi_fixed_m),
                x_policy=request.x_policy,
                x_fixed=x_fixed,
                base_seed=request.base_seed,
            )
            records = run_sweep(cfg, request.cloud.to_spec(), request.options.to_options())
        except ValueError as exc:
            raise _bad_request(exc) from None
        summary = summarize(records)
        return SweepResponse(
            records=[TrialRecordModel.from_record(r) for r in records],
            summary=SweepSummaryModel.from_summary(summary),
            trials_per_level=cfg.trials_per_level,
        )

    return app


app = create_app()
