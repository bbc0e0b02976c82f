"""Flat-file formats used at the tool boundary.

Three ASCII formats, all '.'-decimal and '\\n'-terminated regardless of
locale:

* cloud files — a declared point count on the first content line, then one
  ``x y z`` row per point (meters, fixed 9-decimal notation);
* profile documents — ``key = value`` lines holding one eye's offline
  calibration; unknown keys are rejected;
* trial sidecars — ``key = value`` ground truth written next to simulated
  cloud pairs (shift, seed, noise level, device pose).

Sweep results go to CSV with a fixed header. Lines starting with ``#`` and
blank lines are ignored in all key-value and cloud files.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .display_model import (
    CalibrationProfile,
    HomographyParams,
    OnAxisIntrinsics,
    ViewpointShift,
)
from .geometry import RigidTransform, nearest_rotation, rotation_defect
from .registration import as_cloud
from .simulation import TrialRecord

SWEEP_CSV_HEADER = (
    "level_deg,trial,seed,method,err_x_mm,err_y_mm,err_z_mm,"
    "iterations,converged,guard_deg"
)

# Pose rows beyond this orthonormality defect are rejected outright; between
# the strict rotation tolerance and this bound they are repaired with a warning
# (poses imported from external tracking systems drift).
EXTRINSIC_REJECT_TOL = 1e-6
EXTRINSIC_REPAIR_TOL = 1e-9

_PROFILE_SCALAR_KEYS = (
    "fx",
    "fy",
    "cx",
    "cy",
    "x_ce",
    "y_ce",
    "z_cs",
    "z_es",
    "phi4_tilde",
)


class FileFormatError(ValueError):
    """A boundary file failed to parse or violated its declared structure."""


def _content_lines(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def _parse_floats(text: str, count: int, what: str) -> list[float]:
    parts = text.replace(",", " ").split()
    if len(parts) != count:
        raise FileFormatError(f"{what}: expected {count} numbers, got {len(parts)}")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise FileFormatError(f"{what}: {exc}") from None
    if not all(np.isfinite(values)):
        raise FileFormatError(f"{what}: non-finite value")
    return values


# -- cloud files -------------------------------------------------------------


def format_cloud(points) -> str:
    """Serialize an (N, 3) cloud; first line is the point count."""
    cloud = as_cloud(points, min_points=1)
    out = io.StringIO()
    out.write(f"{cloud.shape[0]}\n")
    for x, y, z in cloud:
        out.write(f"{x:.9f} {y:.9f} {z:.9f}\n")
    return out.getvalue()


def parse_cloud(text: str):
    """Parse a cloud file; the declared count must match the body."""
    lines = _content_lines(text)
    if not lines:
        raise FileFormatError("cloud file is empty")
    try:
        declared = int(lines[0])
    except ValueError:
        raise FileFormatError(f"cloud file: bad point count {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != declared:
        raise FileFormatError(
            f"cloud file declares {declared} points but has {len(rows)} rows"
        )
    if declared == 0:
        raise FileFormatError("cloud file declares zero points")
    points = [_parse_floats(row, 3, f"cloud row {i + 1}") for i, row in enumerate(rows)]
    return as_cloud(points, min_points=1)


def write_cloud(path, points) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_cloud(points))


def read_cloud(path):
    with open(path) as fh:
        return parse_cloud(fh.read())


# -- key-value documents -----------------------------------------------------


def _parse_keyvalues(text: str, what: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in _content_lines(text):
        key, eq, value = line.partition("=")
        if not eq:
            raise FileFormatError(f"{what}: malformed line {line!r}")
        key = key.strip()
        if key in entries:
            raise FileFormatError(f"{what}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def format_profile(profile: CalibrationProfile) -> str:
    """Serialize a calibration profile as a flat key-value document."""
    k, h = profile.k_on, profile.h0
    t = profile.t_c0v
    return (
        "# per-eye offline calibration profile\n"
        "units = m\n"
        f"fx = {k.fx!r}\n"
        f"fy = {k.fy!r}\n"
        f"cx = {k.cx!r}\n"
        f"cy = {k.cy!r}\n"
        f"x_ce = {h.x_ce!r}\n"
        f"y_ce = {h.y_ce!r}\n"
        f"z_cs = {h.z_cs!r}\n"
        f"z_es = {h.z_es!r}\n"
        f"phi4_tilde = {profile.phi4_tilde!r}\n"
        f"t_c0v = {t[0]!r} {t[1]!r} {t[2]!r}\n"
    )


def parse_profile(text: str) -> CalibrationProfile:
    """Parse and validate a profile document; unknown keys are rejected."""
    entries = _parse_keyvalues(text, "profile")
    allowed = set(_PROFILE_SCALAR_KEYS) | {"units", "t_c0v"}
    unknown = sorted(set(entries) - allowed)
    if unknown:
        raise FileFormatError(f"profile: unknown keys {unknown}")
    missing = sorted(allowed - set(entries))
    if missing:
        raise FileFormatError(f"profile: missing keys {missing}")
    if entries["units"] != "m":
        raise FileFormatError(
            f"profile: units must be 'm', got {entries['units']!r}"
        )
    scalars = {
        key: _parse_floats(entries[key], 1, f"profile key {key}")[0]
        for key in _PROFILE_SCALAR_KEYS
    }
    t_c0v = _parse_floats(entries["t_c0v"], 3, "profile key t_c0v")
    try:
        return CalibrationProfile(
            k_on=OnAxisIntrinsics(scalars["fx"], scalars["fy"], scalars["cx"], scalars["cy"]),
            h0=HomographyParams(scalars["x_ce"], scalars["y_ce"], scalars["z_es"], scalars["z_cs"]),
            phi4_tilde=scalars["phi4_tilde"],
            t_c0v=np.array(t_c0v),
        )
    except ValueError as exc:
        raise FileFormatError(f"profile: {exc}") from None


def write_profile(path, profile: CalibrationProfile) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_profile(profile))


def read_profile(path) -> CalibrationProfile:
    with open(path) as fh:
        return parse_profile(fh.read())


# -- extrinsic device poses --------------------------------------------------


def format_extrinsic(extrinsic: RigidTransform) -> str:
    """Row-major 3x4 pose as 12 reals, one row per line."""
    rows = np.hstack([extrinsic.rotation, extrinsic.translation[:, None]])
    body = "\n".join(" ".join(repr(v) for v in row) for row in rows)
    return f"# device pose, row-major 3x4\n{body}\n"


def extrinsic_from_values(values) -> tuple[RigidTransform, str | None]:
    """Build a device pose from 12 row-major reals.

    Orthonormality defects up to EXTRINSIC_REPAIR_TOL pass as-is; up to
    EXTRINSIC_REJECT_TOL the rotation is replaced by its nearest proper
    rotation and a warning string is returned; anything worse raises.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (12,):
        raise FileFormatError(f"device pose needs 12 reals, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise FileFormatError("device pose contains non-finite values")
    mat = values.reshape(3, 4)
    rotation, translation = mat[:, :3], mat[:, 3]
    defect = rotation_defect(rotation)
    if defect > EXTRINSIC_REJECT_TOL:
        raise FileFormatError(
            f"device pose rotation is not orthonormal (defect {defect:.3g})"
        )
    warning = None
    if defect > EXTRINSIC_REPAIR_TOL:
        rotation = nearest_rotation(rotation)
        warning = (
            f"device pose rotation drifted (defect {defect:.3g}); "
            "re-orthonormalized"
        )
    return RigidTransform(rotation, translation), warning


def parse_extrinsic(text: str) -> tuple[RigidTransform, str | None]:
    values = _parse_floats(" ".join(_content_lines(text)), 12, "device pose")
    return extrinsic_from_values(values)


def read_extrinsic(path) -> tuple[RigidTransform, str | None]:
    with open(path) as fh:
        return parse_extrinsic(fh.read())


# -- trial ground-truth sidecars ----------------------------------------------


@dataclass(frozen=True)
class TrialSidecar:
    """Ground truth written next to a simulated cloud pair."""

    phi_gt: ViewpointShift
    seed: int
    noise_deg: float
    extrinsic: RigidTransform


def format_sidecar(sidecar: TrialSidecar) -> str:
    phi = sidecar.phi_gt.as_array
    pose = np.hstack(
        [sidecar.extrinsic.rotation, sidecar.extrinsic.translation[:, None]]
    ).ravel()
    pose_text = " ".join(repr(v) for v in pose)
    return (
        "# simulated-trial ground truth\n"
        f"phi_gt = {phi[0]!r} {phi[1]!r} {phi[2]!r}\n"
        f"seed = {sidecar.seed}\n"
        f"noise_deg = {sidecar.noise_deg!r}\n"
        f"x = {pose_text}\n"
    )


def parse_sidecar(text: str) -> TrialSidecar:
    entries = _parse_keyvalues(text, "sidecar")
    expected = {"phi_gt", "seed", "noise_deg", "x"}
    unknown = sorted(set(entries) - expected)
    if unknown:
        raise FileFormatError(f"sidecar: unknown keys {unknown}")
    missing = sorted(expected - set(entries))
    if missing:
        raise FileFormatError(f"sidecar: missing keys {missing}")
    phi = _parse_floats(entries["phi_gt"], 3, "sidecar phi_gt")
    try:
        seed = int(entries["seed"])
    except ValueError:
        raise FileFormatError(f"sidecar: bad seed {entries['seed']!r}") from None
    noise_deg = _parse_floats(entries["noise_deg"], 1, "sidecar noise_deg")[0]
    extrinsic, _ = extrinsic_from_values(
        _parse_floats(entries["x"], 12, "sidecar x")
    )
    return TrialSidecar(
        phi_gt=ViewpointShift.from_array(phi),
        seed=seed,
        noise_deg=noise_deg,
        extrinsic=extrinsic,
    )


def write_sidecar(path, sidecar: TrialSidecar) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_sidecar(sidecar))


def read_sidecar(path) -> TrialSidecar:
    with open(path) as fh:
        return parse_sidecar(fh.read())


# -- sweep CSV -----------------------------------------------------------------


def _csv_float(value: float) -> str:
    return repr(float(value))


def format_sweep_csv(records: list[TrialRecord], trials_per_level: int) -> str:
    """Two rows per trial (one per method), fixed header, deterministic bytes."""
    out = io.StringIO()
    out.write(SWEEP_CSV_HEADER + "\n")
    for position, record in enumerate(records):
        trial = position % trials_per_level
        for method, err, iterations, converged in (
            ("rcicp", record.err_rcicp, record.iterations_rcicp, record.converged_rcicp),
            ("icp", record.err_icp, record.iterations_icp, record.converged_icp),
        ):
            err_mm = np.asarray(err, dtype=np.float64) * 1e3
            out.write(
                f"{_csv_float(record.rotation_deg)},{trial},{record.seed},{method},"
                f"{_csv_float(err_mm[0])},{_csv_float(err_mm[1])},{_csv_float(err_mm[2])},"
                f"{iterations},{'true' if converged else 'false'},"
                f"{_csv_float(record.guard_rotation_deg)}\n"
            )
    return out.getvalue()


def write_sweep_csv(path, records: list[TrialRecord], trials_per_level: int) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_sweep_csv(records, trials_per_level))
