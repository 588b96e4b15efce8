"""Madgwick MARG orientation filter and head-yaw extraction.

Frames: z points up, x is the reference heading (magnetic north projected
on the horizontal plane), y points left. The quaternion rotates sensor-frame
vectors into the earth frame, so a positive yaw is a leftward head turn.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .dsp import Waveform
from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "Quaternion",
    "FusionConfig",
    "FusionDiagnostics",
    "madgwick_update",
    "yaw_from_quaternion",
    "quaternion_from_accel_mag",
    "estimate_yaw_series",
    "CONVERGENCE_S",
]

CONVERGENCE_S = 0.3


class Quaternion(NamedTuple):
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_yaw(cls, yaw_deg: float) -> "Quaternion":
        half = math.radians(yaw_deg) / 2.0
        return cls(math.cos(half), 0.0, 0.0, math.sin(half))

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)


@dataclass(frozen=True)
class FusionConfig:
    beta: float = 0.1
    rate_hz: float = 30.0
    # None means "derive from the first accel/mag sample"
    init: Optional[Quaternion] = None

    def __post_init__(self):
        if not self.beta >= 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.rate_hz > 0:
            raise ConfigError(f"rate_hz must be > 0, got {self.rate_hz}")


@dataclass
class FusionDiagnostics:
    """Counts of update steps that fell back to gyro-only integration."""

    gyro_only_steps: int = 0
    steps: int = 0
    skipped_indices: list = field(default_factory=list)


def madgwick_update(
    q: Quaternion,
    gyro,
    accel,
    mag,
    dt: float,
    cfg: FusionConfig,
    diagnostics: Optional[FusionDiagnostics] = None,
) -> Quaternion:
    """One gradient-descent MARG step.

    Parameters
    ----------
    q : Quaternion
        Current orientation estimate (unit norm).
    gyro : sequence of 3 floats
        Angular rate in rad/s, sensor frame.
    accel : sequence of 3 floats
        Accelerometer reading in g; only its direction is used.
    mag : sequence of 3 floats
        Magnetometer reading; only its direction is used.
    dt : float
        Step length in seconds.
    cfg : FusionConfig
        Filter gain ``beta``; 0 reduces the step to gyro integration.

    Returns
    -------
    Quaternion
        Updated, renormalized orientation. If the accelerometer or
        magnetometer has zero norm the corrective term is skipped for this
        step and ``diagnostics`` (when given) records it.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    q0, q1, q2, q3 = q
    gx, gy, gz = (float(v) for v in gyro)
    ax, ay, az = (float(v) for v in accel)
    mx, my, mz = (float(v) for v in mag)

    qd0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz)
    qd1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy)
    qd2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx)
    qd3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx)

    a_norm = math.sqrt(ax * ax + ay * ay + az * az)
    m_norm = math.sqrt(mx * mx + my * my + mz * mz)
    if diagnostics is not None:
        diagnostics.steps += 1
    if a_norm == 0.0 or m_norm == 0.0:
        if diagnostics is not None:
            diagnostics.gyro_only_steps += 1
            diagnostics.skipped_indices.append(diagnostics.steps - 1)
    elif cfg.beta > 0.0:
        ax, ay, az = ax / a_norm, ay / a_norm, az / a_norm
        mx, my, mz = mx / m_norm, my / m_norm, mz / m_norm

        q0q0, q1q1, q2q2, q3q3 = q0 * q0, q1 * q1, q2 * q2, q3 * q3
        # earth-frame direction of the measured field
        hx = (mx * (q0q0 + q1q1 - q2q2 - q3q3)
              + 2.0 * my * (q1 * q2 - q0 * q3)
              + 2.0 * mz * (q1 * q3 + q0 * q2))
        hy = (2.0 * mx * (q1 * q2 + q0 * q3)
              + my * (q0q0 - q1q1 + q2q2 - q3q3)
              + 2.0 * mz * (q2 * q3 - q0 * q1))
        hz = (2.0 * mx * (q1 * q3 - q0 * q2)
              + 2.0 * my * (q2 * q3 + q0 * q1)
              + mz * (q0q0 - q1q1 - q2q2 + q3q3))
        bx = math.sqrt(hx * hx + hy * hy)
        bz = hz

        f1 = 2.0 * (q1 * q3 - q0 * q2) - ax
        f2 = 2.0 * (q0 * q1 + q2 * q3) - ay
        f3 = 2.0 * (0.5 - q1q1 - q2q2) - az
        f4 = 2.0 * bx * (0.5 - q2q2 - q3q3) + 2.0 * bz * (q1 * q3 - q0 * q2) - mx
        f5 = 2.0 * bx * (q1 * q2 - q0 * q3) + 2.0 * bz * (q0 * q1 + q2 * q3) - my
        f6 = 2.0 * bx * (q0 * q2 + q1 * q3) + 2.0 * bz * (0.5 - q1q1 - q2q2) - mz

        s0 = (-2.0 * q2 * f1 + 2.0 * q1 * f2
              - 2.0 * bz * q2 * f4
              + (-2.0 * bx * q3 + 2.0 * bz * q1) * f5
              + 2.0 * bx * q2 * f6)
        s1 = (2.0 * q3 * f1 + 2.0 * q0 * f2 - 4.0 * q1 * f3
              + 2.0 * bz * q3 * f4
              + (2.0 * bx * q2 + 2.0 * bz * q0) * f5
              + (2.0 * bx * q3 - 4.0 * bz * q1) * f6)
        s2 = (-2.0 * q0 * f1 + 2.0 * q3 * f2 - 4.0 * q2 * f3
              + (-4.0 * bx * q2 - 2.0 * bz * q0) * f4
              + (2.0 * bx * q1 + 2.0 * bz * q3) * f5
              + (2.0 * bx * q0 - 4.0 * bz * q2) * f6)
        s3 = (2.0 * q1 * f1 + 2.0 * q2 * f2
              + (-4.0 * bx * q3 + 2.0 * bz * q1) * f4
              + (-2.0 * bx * q0 + 2.0 * bz * q2) * f5
              + 2.0 * bx * q1 * f6)
        s_norm = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
        # at the exact optimum the gradient vanishes; nothing to correct
        if s_norm > 0.0:
            qd0 -= cfg.beta * s0 / s_norm
            qd1 -= cfg.beta * s1 / s_norm
            qd2 -= cfg.beta * s2 / s_norm
            qd3 -= cfg.beta * s3 / s_norm

    q0 += qd0 * dt
    q1 += qd1 * dt
    q2 += qd2 * dt
    q3 += qd3 * dt
    n = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    return Quaternion(q0 / n, q1 / n, q2 / n, q3 / n)


def yaw_from_quaternion(q: Quaternion) -> float:
    """Heading in degrees, Z-Y-X Euler convention, in (-180, 180]."""
    w, x, y, z = q
    yaw = math.degrees(math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)))
    if yaw <= -180.0:
        yaw += 360.0
    return yaw


def quaternion_from_accel_mag(accel, mag) -> Quaternion:
    """Algebraic orientation from one accelerometer and magnetometer sample."""
    ax, ay, az = (float(v) for v in accel)
    mx, my, mz = (float(v) for v in mag)
    if ax == ay == az == 0.0 or mx == my == mz == 0.0:
        raise ValidationError("cannot initialise orientation from a zero-norm sample")
    roll = math.atan2(ay, az)
    pitch = math.atan2(-ax, math.hypot(ay, az))
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    # undo roll then pitch to bring the field into the horizontal plane
    my_r = cr * my - sr * mz
    mz_r = sr * my + cr * mz
    mx_l = cp * mx + sp * mz_r
    my_l = my_r
    yaw = math.atan2(-my_l, mx_l)

    hr, hp, hy = roll / 2.0, pitch / 2.0, yaw / 2.0
    cr2, sr2 = math.cos(hr), math.sin(hr)
    cp2, sp2 = math.cos(hp), math.sin(hp)
    cy2, sy2 = math.cos(hy), math.sin(hy)
    return Quaternion(
        cr2 * cp2 * cy2 + sr2 * sp2 * sy2,
        sr2 * cp2 * cy2 - cr2 * sp2 * sy2,
        cr2 * sp2 * cy2 + sr2 * cp2 * sy2,
        cr2 * cp2 * sy2 - sr2 * sp2 * cy2,
    ).normalized()


def estimate_yaw_series(
    imu,
    cfg: Optional[FusionConfig] = None,
    diagnostics: Optional[FusionDiagnostics] = None,
) -> Waveform:
    """Run the filter over an IMU series and return unwrapped yaw in degrees.

    The first sample initialises the state (from ``cfg.init`` or from the
    accelerometer/magnetometer); every later sample triggers one update.
    Samples within the first ``CONVERGENCE_S`` seconds should not be used
    as a feature baseline.
    """
    if cfg is None:
        cfg = FusionConfig(rate_hz=imu.rate_hz)
    gyro = np.asarray(imu.gyro, dtype=float)
    accel = np.asarray(imu.accel, dtype=float)
    mag = np.asarray(imu.mag, dtype=float)
    n = gyro.shape[0]
    if n == 0:
        raise ValidationError("IMU series is empty")
    dt = 1.0 / imu.rate_hz

    q = cfg.init if cfg.init is not None else quaternion_from_accel_mag(accel[0], mag[0])
    yaw = np.empty(n)
    yaw[0] = yaw_from_quaternion(q)
    for i in range(1, n):
        q = madgwick_update(q, gyro[i], accel[i], mag[i], dt, cfg, diagnostics)
        yaw[i] = yaw_from_quaternion(q)
    if diagnostics is not None and diagnostics.gyro_only_steps:
        logger.warning("%d fusion steps ran gyro-only", diagnostics.gyro_only_steps)
    yaw = np.degrees(np.unwrap(np.radians(yaw)))
    return Waveform(yaw, imu.rate_hz, imu.t0_s)
