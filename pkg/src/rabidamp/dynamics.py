"""Single-trajectory two-level dynamics in the rotating frame.

A ballistic atom samples the drive along ``x(t') = x0 + v t'``.  In the
frame rotating at the drive frequency ``omega`` the amplitudes obey

    da/dt' = -(i/2) Omega(x(t')) exp(+i D(t')) b
    db/dt' = -(i/2) Omega(x(t')) exp(-i D(t')) a

with the accumulated detuning phase

    D(t') = int_0^t' [omega - omega12(x(s))] ds,

which is quadratic in t' for the affine splitting model and is therefore
carried analytically alongside the numerical state.

On resonance the propagator is an exact rotation by the Bloch angle

    theta(t) = Omega(x(t)) t - (1/2) v dOmega/dx t^2,

written in terms of the drive at the detection position x(t); the second
term is the ballistic correction picked up along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericsError
from .fields import LINEAR, FieldMap

#: default integrator resolution, RK4 steps per 2pi of the fastest phase
STEPS_PER_CYCLE = 200

_MAX_STEPS = 50_000_000


@dataclass(frozen=True)
class SpinState:
    """Amplitudes (a, b) on (|1>, |2>); unit norm up to integrator error."""

    a: complex
    b: complex

    @classmethod
    def ground(cls) -> "SpinState":
        return cls(1.0 + 0.0j, 0.0 + 0.0j)

    @property
    def norm(self) -> float:
        return float(abs(self.a) ** 2 + abs(self.b) ** 2)

    @property
    def population(self) -> float:
        """Excited-state population |b|^2."""
        return float(abs(self.b) ** 2)


@dataclass(frozen=True)
class Trajectory:
    """Free ballistic path x(t') = x0 + v t' (no confining forces)."""

    x0: float  # m
    v: float   # m/s

    def position(self, t):
        return self.x0 + self.v * np.asarray(t, dtype=float)


class SegmentKind(str, Enum):
    DRIVE = "drive"
    FREE = "free"
    PI_HALF = "pi_half"   # instantaneous pi/2 rotation
    PI_FLIP = "pi_flip"   # instantaneous pi rotation


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    duration: float = 0.0  # s; must be 0 for instantaneous kinds

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise ValueError("segment duration must be >= 0")
        instant = self.kind in (SegmentKind.PI_HALF, SegmentKind.PI_FLIP)
        if instant and self.duration != 0.0:
            raise ValueError(f"{self.kind.value} segments are instantaneous")


@dataclass(frozen=True)
class PulseSequence:
    """Ordered drive/free/instant-pulse protocol applied to every atom."""

    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("sequence needs at least one segment")

    @property
    def duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))

    @classmethod
    def rabi(cls, t: float) -> "PulseSequence":
        """Continuous resonant drive of duration t."""
        return cls((Segment(SegmentKind.DRIVE, t),))

    @classmethod
    def ramsey(cls, t: float) -> "PulseSequence":
        """pi/2 - free(t) - pi/2."""
        return cls((Segment(SegmentKind.PI_HALF),
                    Segment(SegmentKind.FREE, t),
                    Segment(SegmentKind.PI_HALF)))

    @classmethod
    def spin_echo(cls, t: float) -> "PulseSequence":
        """pi/2 - free(t/2) - pi - free(t/2) - pi/2."""
        return cls((Segment(SegmentKind.PI_HALF),
                    Segment(SegmentKind.FREE, 0.5 * t),
                    Segment(SegmentKind.PI_FLIP),
                    Segment(SegmentKind.FREE, 0.5 * t),
                    Segment(SegmentKind.PI_HALF)))


def bloch_angle(traj: Trajectory, fmap: FieldMap, t: float) -> float:
    """Resonant rotation angle theta accumulated over [0, t].

    Uses the drive at the detection position x(t) minus the ballistic
    correction (1/2) v dOmega/dx t^2.  Exact for the affine profile while
    the trajectory stays clear of the clamp region.
    """
    x_det = traj.position(t)
    return float(fmap.drive(x_det) * t - 0.5 * traj.v * fmap.grad_omega_drive * t * t)


def propagate_resonant_analytic(state: SpinState, traj: Trajectory,
                                fmap: FieldMap, t: float) -> SpinState:
    """Exact resonant propagator: rotation by the Bloch angle.

    Requires a uniform splitting (``grad_omega12 == 0``) and the linear
    drive profile so the angle integral closes in the form above.
    """
    if fmap.profile_kind != LINEAR:
        raise ValueError("analytic propagator requires the linear drive profile")
    if fmap.grad_omega12 != 0.0:
        raise ValueError("analytic propagator requires resonance everywhere "
                         "(grad_omega12 == 0)")
    if t < 0.0:
        raise ValueError("t must be >= 0")
    half = 0.5 * bloch_angle(traj, fmap, t)
    c, s = math.cos(half), math.sin(half)
    return SpinState(c * state.a - 1j * s * state.b,
                     -1j * s * state.a + c * state.b)


def _drive_bounds(traj: Trajectory, fmap: FieldMap, omega: float, t: float):
    """Max |Omega| and |Delta| along [0, t]; both extremal at the endpoints."""
    ends = np.array([traj.x0, traj.position(t)])
    omega_max = float(np.max(fmap.drive(ends)))
    delta_max = float(np.max(np.abs(omega - fmap.splitting(ends))))
    return omega_max, delta_max


def propagate_ode(state: SpinState, traj: Trajectory, fmap: FieldMap, t: float,
                  dt_max: float | None = None, drive_frequency: float | None = None,
                  steps_per_cycle: int = STEPS_PER_CYCLE,
                  return_phase: bool = False):
    """Integrate the rotating-frame amplitudes with fixed-step RK4.

    Parameters
    ----------
    state : SpinState
        Initial amplitudes.
    traj : Trajectory
        Ballistic path sampled by the atom.
    fmap : FieldMap
        Drive and splitting profiles.
    t : float
        Duration in s.
    dt_max : float, optional
        Upper bound on the step; the default resolves the fastest of
        Omega and |Delta| with ``steps_per_cycle`` steps per cycle.
    drive_frequency : float, optional
        Drive angular frequency omega; defaults to resonance with the
        splitting at the origin.
    return_phase : bool
        Also return the accumulated detuning phase D(t).

    The detuning phase is evaluated in closed form (it is quadratic in
    time for the affine splitting), so the integrator only resolves the
    amplitude rotation.  The step is fixed, which keeps runs
    bit-reproducible.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    omega = fmap.omega12_at_origin if drive_frequency is None else drive_frequency
    c0 = omega - fmap.splitting(traj.x0)   # Delta at t'=0
    c1 = traj.v * fmap.grad_omega12        # -dDelta/dt'

    def phase(s: float) -> float:
        return c0 * s - 0.5 * c1 * s * s

    if t == 0.0:
        return (state, 0.0) if return_phase else state

    omega_max, delta_max = _drive_bounds(traj, fmap, omega, t)
    fastest = max(omega_max, delta_max)
    dt = t if fastest == 0.0 else 2.0 * math.pi / (steps_per_cycle * fastest)
    if dt_max is not None:
        dt = min(dt, dt_max)
    if dt <= 0.0 or t / dt > _MAX_STEPS:
        raise NumericsError("step-size underflow: configuration too stiff "
                            f"({t / dt:.3g} steps requested)")
    n = max(1, math.ceil(t / dt))
    h = t / n

    y = np.array([state.a, state.b], dtype=complex)

    def deriv(s: float, y: np.ndarray) -> np.ndarray:
        om = fmap.drive(traj.position(s))
        e = np.exp(1j * phase(s))
        return np.array([-0.5j * om * e * y[1], -0.5j * om * np.conj(e) * y[0]])

    for k in range(n):
        s = k * h
        k1 = deriv(s, y)
        k2 = deriv(s + 0.5 * h, y + 0.5 * h * k1)
        k3 = deriv(s + 0.5 * h, y + 0.5 * h * k2)
        k4 = deriv(s + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    out = SpinState(complex(y[0]), complex(y[1]))
    if abs(out.norm - state.norm) > 1e-6:
        raise NumericsError("norm drift beyond 1e-6: integrator misconfigured "
                            f"(drift {out.norm - state.norm:.3e})")
    return (out, phase(t)) if return_phase else out


def ramsey_phase(traj: Trajectory, fmap: FieldMap, t: float, echo: bool = False) -> float:
    """Free-evolution phase of the splitting accumulated over [0, t].

    Without an echo this is the full integral of omega12 along the path,

        phi = omega12(x(t)) t - (1/2) v grad_omega12 t^2,

    expressed at the detection position x(t).  With an echo the pi flip
    at t/2 negates the earlier half (second interval minus first), the
    position dependence cancels, and only the ballistic term survives:

        phi = (1/4) v grad_omega12 t^2.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if echo:
        return float(0.25 * traj.v * fmap.grad_omega12 * t * t)
    x_det = traj.position(t)
    return float(fmap.splitting(x_det) * t - 0.5 * traj.v * fmap.grad_omega12 * t * t)
