"""Spatial profiles of the drive and of the two-level splitting.

Everything here is one-dimensional and SI: positions in m, Rabi and
splitting frequencies in rad/s, gradients in rad/(s m).  Two drive
profiles are supported: an affine profile clamped at zero (the local
linearization used throughout the analysis) and the 1/r falloff of a
near-field antenna, ``Omega(x) = reference * d / (d + x)`` for an
antenna at distance ``d`` behind the origin.

The hyperfine splitting is always modeled as affine,
``omega12(x) = omega12_at_origin + x * grad_omega12``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
INVERSE_R = "inverse_r"


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values used by the unit conversions, SI throughout.

    ``g_S`` and ``g_I`` are the electron and nuclear g-factors entering
    the magnetic coupling of the 6.8 GHz Rb-87 clock transition.
    """

    k_B: float = 1.380649e-23      # J/K, exact by SI definition
    hbar: float = 1.054571817e-34  # J s
    mu_B: float = 9.2740100783e-24  # J/T
    m_rb87: float = 1.44316060e-25  # kg
    g_S: float = 2.0023193043622
    g_I: float = -0.0009951414

    def __post_init__(self) -> None:
        if min(self.k_B, self.hbar, self.mu_B, self.m_rb87) <= 0.0:
            raise ValueError("physical constants must be positive")


CONSTANTS = PhysicalConstants()

# Convenience aliases; the dataclass stays the override point.
K_B = CONSTANTS.k_B
HBAR = CONSTANTS.hbar
M_RB87 = CONSTANTS.m_rb87


@dataclass(frozen=True)
class FieldMap:
    """Drive amplitude Omega(x) and splitting omega12(x) on the probe axis.

    Parameters
    ----------
    omega_drive_at_origin : float
        Omega(0) in rad/s.  Must be >= 0.
    grad_omega_drive : float
        dOmega/dx at the origin in rad/(s m).  For the inverse-r profile
        this is derived from the geometry and stored for reference.
    omega12_at_origin, grad_omega12 : float
        Affine splitting model, rad/s and rad/(s m).
    profile_kind : str
        ``"linear"`` or ``"inverse_r"``.
    antenna_distance : float, optional
        Antenna standoff d in m, inverse-r profile only.
    """

    omega_drive_at_origin: float
    grad_omega_drive: float
    omega12_at_origin: float = 0.0
    grad_omega12: float = 0.0
    profile_kind: str = LINEAR
    antenna_distance: float | None = None

    def __post_init__(self) -> None:
        if self.omega_drive_at_origin < 0.0:
            raise ValueError("drive amplitude at origin must be >= 0")
        if self.profile_kind not in (LINEAR, INVERSE_R):
            raise ValueError(f"unknown profile kind {self.profile_kind!r}")
        if self.profile_kind == INVERSE_R:
            if self.antenna_distance is None or self.antenna_distance <= 0.0:
                raise ValueError("inverse-r profile needs antenna_distance > 0")

    @classmethod
    def linear(cls, omega_drive_at_origin: float, grad_omega_drive: float,
               omega12_at_origin: float = 0.0, grad_omega12: float = 0.0) -> "FieldMap":
        return cls(omega_drive_at_origin, grad_omega_drive,
                   omega12_at_origin, grad_omega12, LINEAR)

    @classmethod
    def inverse_r(cls, reference_amplitude: float, antenna_distance: float,
                  omega12_at_origin: float = 0.0, grad_omega12: float = 0.0) -> "FieldMap":
        """Antenna profile with Omega(0) = reference_amplitude.

        The local gradient at the origin is -reference/d.
        """
        if antenna_distance <= 0.0:
            raise ValueError("antenna_distance must be > 0")
        grad = -reference_amplitude / antenna_distance
        return cls(reference_amplitude, grad, omega12_at_origin, grad_omega12,
                   INVERSE_R, antenna_distance)

    def drive(self, x):
        """Omega(x) in rad/s; accepts scalars or arrays.

        The linear profile is clamped at zero so the amplitude never goes
        negative far from the origin.  The inverse-r profile diverges at
        x = -d and callers must stay on the physical side of the antenna.
        """
        x = np.asarray(x, dtype=float)
        if self.profile_kind == LINEAR:
            value = np.maximum(self.omega_drive_at_origin + self.grad_omega_drive * x, 0.0)
        else:
            d = self.antenna_distance
            if np.any(x <= -d):
                raise ValueError("position behind the antenna (x <= -antenna_distance)")
            value = self.omega_drive_at_origin * d / (d + x)
        return value if value.ndim else float(value)

    def drive_gradient(self, x):
        """Local dOmega/dx in rad/(s m), ignoring the clamp region."""
        x = np.asarray(x, dtype=float)
        if self.profile_kind == LINEAR:
            value = np.full_like(x, self.grad_omega_drive)
        else:
            d = self.antenna_distance
            if np.any(x <= -d):
                raise ValueError("position behind the antenna (x <= -antenna_distance)")
            value = -self.omega_drive_at_origin * d / (d + x) ** 2
        return value if value.ndim else float(value)

    def splitting(self, x):
        """omega12(x) in rad/s; affine in x for every profile kind."""
        x = np.asarray(x, dtype=float)
        value = self.omega12_at_origin + self.grad_omega12 * x
        return value if value.ndim else float(value)


def eval_drive(fmap: FieldMap, x):
    """Evaluate the drive amplitude Omega(x); see FieldMap.drive."""
    return fmap.drive(x)


def eval_splitting(fmap: FieldMap, x):
    """Evaluate the splitting omega12(x); see FieldMap.splitting."""
    return fmap.splitting(x)


def rabi_from_B_field(b_parallel, constants: PhysicalConstants = CONSTANTS):
    """Rabi frequency of the clock transition for a co-polarized field.

    Omega = mu_B * (g_S - g_I) * B_parallel / (2 hbar), in rad/s.  A 1 uT
    field gives about 8.81e4 rad/s.  Negative field amplitudes are
    rejected; the sign convention is absorbed in the drive phase.
    """
    b = np.asarray(b_parallel, dtype=float)
    if np.any(b < 0.0):
        raise ValueError("field amplitude must be >= 0")
    value = constants.mu_B * (constants.g_S - constants.g_I) * b / (2.0 * constants.hbar)
    return value if value.ndim else float(value)
