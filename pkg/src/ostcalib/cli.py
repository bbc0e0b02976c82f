"""Command-line client for the calibration service.

Every command builds a JSON request and sends it to the service — an
in-process instance by default, or a remote one when ``--server`` (or
``OSTCALIB_SERVER``) is set — then renders the response and maps domain
verdicts to exit codes:

    0  success
    2  input or parse error
    3  degenerate cloud geometry
    4  rotation-guard rejection

Lengths are meters inside the service; shift values cross this boundary in
millimeters.
"""

from __future__ import annotations

import asyncio
import math
import sys

import click
import httpx
import numpy as np

from . import __version__
from .display_model import ViewpointShift
from .fileformats import (
    FileFormatError,
    TrialSidecar,
    format_extrinsic,
    read_cloud,
    read_extrinsic,
    read_profile,
    write_cloud,
    write_sidecar,
    write_sweep_csv,
)
from .simulation import TrialRecord

EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_GUARD = 4


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _warn(message: str | None) -> None:
    if message:
        click.echo(f"warning: {message}", err=True)


def call_service(server: str | None, method: str, path: str, payload=None) -> dict:
    """Send one request; in-process ASGI when no server URL is configured."""

    async def go():
        if server:
            client = httpx.AsyncClient(base_url=server, timeout=None)
        else:
            from .service import create_app

            client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://ostcalib.internal",
                timeout=None,
            )
        async with client:
            return await client.request(method, path, json=payload)

    try:
        response = asyncio.run(go())
    except httpx.HTTPError as exc:
        _fail(1, f"service unreachable: {exc}")
    if response.status_code in (400, 422):
        detail = response.json().get("detail")
        if isinstance(detail, list):  # pydantic validation report
            detail = "; ".join(
                f"{'.'.join(str(p) for p in item.get('loc', []))}: {item.get('msg')}"
                for item in detail
            )
        _fail(EXIT_INPUT, str(detail))
    if response.status_code != 200:
        _fail(1, f"service error {response.status_code}: {response.text}")
    return response.json()


def _parse_reals(text: str, count: int, what: str) -> list[float]:
    parts = text.replace(",", " ").split()
    if len(parts) != count:
        _fail(EXIT_INPUT, f"{what} needs {count} numbers, got {len(parts)}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        _fail(EXIT_INPUT, f"{what}: not a number in {text!r}")
    if not all(math.isfinite(v) for v in values):
        _fail(EXIT_INPUT, f"{what}: non-finite value")
    return values


def _read_cloud_rows(path: str) -> list[list[float]]:
    try:
        return [[float(v) for v in row] for row in read_cloud(path)]
    except (FileFormatError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))


def _resolve_extrinsic(inline: str | None, file: str | None) -> list[float]:
    if (inline is None) == (file is None):
        _fail(EXIT_INPUT, "give exactly one of --extrinsic / --extrinsic-file")
    if inline is not None:
        return _parse_reals(inline, 12, "--extrinsic")
    try:
        pose, warning = read_extrinsic(file)
    except (FileFormatError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    _warn(warning)
    rows = np.hstack([pose.rotation, pose.translation[:, None]]).ravel()
    return [float(v) for v in rows]


def _record_from_json(data: dict) -> TrialRecord:
    def shift(values):
        return None if values is None else ViewpointShift.from_array(values)

    def errs(values):
        return np.full(3, np.nan) if values is None else np.asarray(values, dtype=np.float64)

    guard = data["guard_rotation_deg"]
    return TrialRecord(
        seed=data["seed"],
        rotation_deg=data["rotation_deg"],
        phi_gt=ViewpointShift.from_array(data["phi_gt_m"]),
        phi_rcicp=shift(data["phi_rcicp_m"]),
        phi_icp=shift(data["phi_icp_m"]),
        err_rcicp=errs(data["err_rcicp_m"]),
        err_icp=errs(data["err_icp_m"]),
        iterations_rcicp=data["iterations_rcicp"],
        iterations_icp=data["iterations_icp"],
        converged_rcicp=data["converged_rcicp"],
        converged_icp=data["converged_icp"],
        guard_rotation_deg=float("nan") if guard is None else guard,
        failure=data["failure"],
    )


@click.group()
@click.version_option(version=__version__)
@click.option(
    "--server",
    envvar="OSTCALIB_SERVER",
    default=None,
    help="Base URL of a running service; default runs the service in-process.",
)
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Viewpoint-shift calibration tools for see-through displays."""
    ctx.obj = server


def _cloud_options(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option(
        "--center", default="0,0,0.5", show_default=True, help="Cloud center, meters."
    )(fn)
    fn = click.option(
        "--depth-jitter", type=float, default=0.01, show_default=True,
        help="Per-point depth jitter bound, meters.",
    )(fn)
    fn = click.option(
        "--extent", type=float, default=0.18, show_default=True,
        help="Silhouette diameter, meters.",
    )(fn)
    fn = click.option("--points", type=int, default=500, show_default=True)(fn)
    return fn


def _cloud_payload(points, extent, depth_jitter, center, seed) -> dict:
    return {
        "point_count": points,
        "extent": extent,
        "depth_jitter": depth_jitter,
        "center": _parse_reals(center, 3, "--center"),
        "seed": seed,
    }


@main.command("gen-cloud")
@_cloud_options
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def gen_cloud(server, points, extent, depth_jitter, center, seed, output) -> None:
    """Generate a synthetic hand-contour cloud file."""
    data = call_service(
        server, "POST", "/cloud/generate",
        _cloud_payload(points, extent, depth_jitter, center, seed),
    )
    try:
        write_cloud(output, np.asarray(data["points"]))
    except OSError as exc:
        _fail(1, f"cannot write {output}: {exc}")
    click.echo(f"wrote {len(data['points'])} points to {output}")


@main.command()
@_cloud_options
@click.option("--phi-gt", default=None, help="Ground-truth shift in mm (3 values); seeded draw when omitted.")
@click.option("--phi4-tilde", type=float, default=0.5, show_default=True, help="Reciprocal screen distance, 1/m.")
@click.option("--extrinsic", default=None, help="Device pose as 12 row-major reals; seeded draw when omitted.")
@click.option("--noise-deg", type=float, default=0.0, show_default=True, help="Rotational disturbance magnitude.")
@click.option("-o", "--output-prefix", required=True, help="Writes PREFIX.source.cloud, PREFIX.target.cloud, PREFIX.truth.")
@click.pass_obj
def simulate(server, points, extent, depth_jitter, center, seed, phi_gt,
             phi4_tilde, extrinsic, noise_deg, output_prefix) -> None:
    """Simulate one alignment trial: cloud pair plus ground-truth sidecar."""
    payload = {
        "cloud": _cloud_payload(points, extent, depth_jitter, center, seed),
        "phi4_tilde": phi4_tilde,
        "noise_deg": noise_deg,
        "seed": seed,
    }
    if phi_gt is not None:
        payload["phi_gt_m"] = [v / 1e3 for v in _parse_reals(phi_gt, 3, "--phi-gt")]
    if extrinsic is not None:
        payload["extrinsic"] = _parse_reals(extrinsic, 12, "--extrinsic")
    data = call_service(server, "POST", "/trial/simulate", payload)
    _warn(data.get("warning"))

    from .fileformats import extrinsic_from_values

    pose, _ = extrinsic_from_values(data["extrinsic"])
    sidecar = TrialSidecar(
        phi_gt=ViewpointShift.from_array(data["phi_gt_m"]),
        seed=data["seed"],
        noise_deg=data["noise_deg"],
        extrinsic=pose,
    )
    try:
        write_cloud(f"{output_prefix}.source.cloud", np.asarray(data["source"]))
        write_cloud(f"{output_prefix}.target.cloud", np.asarray(data["target"]))
        write_sidecar(f"{output_prefix}.truth", sidecar)
    except OSError as exc:
        _fail(1, f"cannot write outputs: {exc}")
    click.echo(
        f"wrote {output_prefix}.source.cloud, {output_prefix}.target.cloud, "
        f"{output_prefix}.truth"
    )


@main.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", "profile_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Calibration profile supplying the reciprocal screen distance.")
@click.option("--extrinsic", default=None, help="Device pose as 12 row-major reals.")
@click.option("--extrinsic-file", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-iterations", type=int, default=800, show_default=True)
@click.option("--convergence-ratio", type=float, default=0.9999, show_default=True)
@click.option("--guard-threshold", type=float, default=9.0, show_default=True,
              help="Relative-rotation bound in degrees.")
@click.pass_obj
def register(server, source, target, profile_path, extrinsic, extrinsic_file,
             max_iterations, convergence_ratio, guard_threshold) -> None:
    """Recover the viewpoint shift from a source/target cloud pair."""
    try:
        profile = read_profile(profile_path)
    except (FileFormatError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    payload = {
        "source": _read_cloud_rows(source),
        "target": _read_cloud_rows(target),
        "extrinsic": _resolve_extrinsic(extrinsic, extrinsic_file),
        "phi4_tilde": profile.phi4_tilde,
        "options": {
            "max_iterations": max_iterations,
            "convergence_ratio": convergence_ratio,
            "rotation_guard_deg": guard_threshold,
        },
    }
    data = call_service(server, "POST", "/registration/run", payload)
    status = data["status"]
    if status == "degenerate":
        _fail(EXIT_DEGENERATE, data["detail"])
    if status == "guard_rejected":
        click.echo(f"guard_rotation_deg = {data['guard_rotation_deg']:.6f}")
        _fail(EXIT_GUARD, data["detail"])
    _warn(data.get("warning"))
    phi_mm = [v * 1e3 for v in data["phi_m"]]
    click.echo(f"phi_mm = {phi_mm[0]:.6f} {phi_mm[1]:.6f} {phi_mm[2]:.6f}")
    click.echo(f"iterations = {data['iterations']}")
    click.echo(f"converged = {'true' if data['converged'] else 'false'}")
    click.echo(f"guard_rotation_deg = {data['guard_rotation_deg']:.6f}")


@main.command("guard-check")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.argument("target", type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=9.0, show_default=True)
@click.pass_obj
def guard_check(server, source, target, threshold) -> None:
    """Measure the relative rotation between two clouds and gate on it."""
    data = call_service(server, "POST", "/registration/guard", {
        "source": _read_cloud_rows(source),
        "target": _read_cloud_rows(target),
        "threshold_deg": threshold,
    })
    if data["status"] == "degenerate":
        _fail(EXIT_DEGENERATE, data["detail"])
    click.echo(f"rotation_deg = {data['rotation_deg']:.6f}")
    click.echo(f"accepted = {'true' if data['accepted'] else 'false'}")
    if not data["accepted"]:
        sys.exit(EXIT_GUARD)


@main.command()
@click.option("--range", "sweep_range", default="0:20:1", show_default=True,
              help="Noise levels as start:stop:step, degrees, stop inclusive.")
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--phi4-tilde", type=float, default=0.5, show_default=True)
@click.option("--points", type=int, default=400, show_default=True)
@click.option("--extent", type=float, default=0.18, show_default=True)
@click.option("--depth-jitter", type=float, default=0.01, show_default=True)
@click.option("--phi-policy", type=click.Choice(["random", "fixed"]), default="random", show_default=True)
@click.option("--phi-fixed", default="0,0,0", show_default=True, help="Fixed shift in mm when --phi-policy=fixed.")
@click.option("--x-policy", type=click.Choice(["random", "identity"]), default="random", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Per-trial CSV output path.")
@click.pass_obj
def sweep(server, sweep_range, trials, seed, phi4_tilde, points, extent,
          depth_jitter, phi_policy, phi_fixed, x_policy, output) -> None:
    """Run a rotational-noise sweep and write per-trial results to CSV."""
    parts = sweep_range.split(":")
    if len(parts) != 3:
        _fail(EXIT_INPUT, "--range must be start:stop:step")
    start, stop, step = (_parse_reals(p, 1, "--range")[0] for p in parts)
    payload = {
        "rotation_start_deg": start,
        "rotation_stop_deg": stop,
        "rotation_step_deg": step,
        "trials_per_level": trials,
        "phi4_tilde": phi4_tilde,
        "phi_policy": phi_policy,
        "phi_fixed_m": [v / 1e3 for v in _parse_reals(phi_fixed, 3, "--phi-fixed")],
        "x_policy": "random" if x_policy == "random" else "fixed",
        "base_seed": seed,
        "cloud": {"point_count": points, "extent": extent, "depth_jitter": depth_jitter},
    }
    data = call_service(server, "POST", "/sweep/run", payload)

    records = [_record_from_json(r) for r in data["records"]]
    try:
        write_sweep_csv(output, records, data["trials_per_level"])
    except OSError as exc:
        _fail(1, f"cannot write {output}: {exc}")

    summary = data["summary"]
    for level in summary["levels"]:
        if level["method"] != "rcicp":
            continue
        med = level["median_mm"]
        med_text = (
            "all trials failed" if med is None
            else f"median err mm = ({med[0]:.3f}, {med[1]:.3f}, {med[2]:.3f})"
        )
        click.echo(f"level {level['level_deg']:g} deg: rcicp {med_text}")
    tolerance = summary["tolerance_deg"]
    baseline = summary["baseline_mm"]
    if tolerance is None:
        click.echo(f"tolerance angle: none (no level within {baseline:g} mm)")
    else:
        click.echo(
            f"tolerance angle: {tolerance:g} deg "
            f"(largest level with median per-component error <= {baseline:g} mm)"
        )
    click.echo(f"wrote {len(records) * 2} rows to {output}")


@main.command("update-projection")
@click.option("--profile", "profile_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--phi", default="0,0,0", show_default=True,
              help="Viewpoint shift in millimeters (3 values).")
@click.pass_obj
def update_projection(server, profile_path, phi) -> None:
    """Print the shift-updated 4x4 rendering projection, row-major."""
    try:
        profile = read_profile(profile_path)
    except (FileFormatError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))
    phi_m = [v / 1e3 for v in _parse_reals(phi, 3, "--phi")]
    data = call_service(server, "POST", "/projection/update", {
        "profile": {
            "fx": profile.k_on.fx, "fy": profile.k_on.fy,
            "cx": profile.k_on.cx, "cy": profile.k_on.cy,
            "x_ce": profile.h0.x_ce, "y_ce": profile.h0.y_ce,
            "z_cs": profile.h0.z_cs, "z_es": profile.h0.z_es,
            "phi4_tilde": profile.phi4_tilde,
            "t_c0v": [float(v) for v in profile.t_c0v],
        },
        "phi_m": phi_m,
    })
    _warn(data.get("warning"))
    for row in data["matrix"]:
        click.echo(" ".join(f"{v:.9g}" for v in row))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the calibration service under uvicorn."""
    import uvicorn

    uvicorn.run("ostcalib.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
