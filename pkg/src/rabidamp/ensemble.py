"""Thermal-ensemble Monte Carlo and the matching closed forms.

Atoms are drawn from a Gaussian phase-space density with initial
position spread ``Delta_x(0)`` and velocity spread
``Delta_v = sqrt(k_B T / m)``.  Ballistic expansion rescales both widths
through ``alpha(t) = sqrt(1 + Delta_v^2 t^2 / Delta_x(0)^2)``:
``Delta_x(t) = alpha Delta_x(0)`` and ``Delta_v(t) = Delta_v / alpha``,
where ``Delta_v(t)`` is the conditional velocity spread at a fixed
detection position.

The local excited-state density after a resonant drive of duration t is

    rho22(x, t) = G(x, t) * 1/2 {1 - cos[Omega_tilde(x, t) t] * E(t)}

with the expanded cloud profile G, the velocity-averaged envelope
``E = exp[-(1/8) (dOmega/dx)^2 Delta_v(t)^2 t^4]`` and the shifted local
frequency ``Omega_tilde = Omega(x) - (1/2) x dOmega/dx Delta_v^2 t^2 /
Delta_x(t)^2``.  The envelope defines the thermal coherence time

    tau_v = 8^(1/4) / sqrt(Delta_v |dOmega/dx|),

and the Ramsey analog replaces the drive gradient by the splitting
gradient (with 1/8 -> 1/32 and tau_v -> sqrt(2) tau_v under a spin
echo).  The Monte Carlo below makes no use of these formulas, so the
two routes check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import PulseSequence, SegmentKind, Trajectory
from .fields import INVERSE_R, K_B, LINEAR, M_RB87, FieldMap

#: spatial bin used to estimate local populations (m)
DEFAULT_BIN_WIDTH = 50e-6
#: bins holding fewer atoms are reported as undefined rather than noisy
MIN_BIN_COUNT = 100

_U64 = np.uint64
_GAMMA = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


def _mix64(z):
    """splitmix64 finalizer; a stateless counter-based bit mixer."""
    z = z ^ (z >> _U64(30))
    z = z * _MIX1
    z = z ^ (z >> _U64(27))
    z = z * _MIX2
    return z ^ (z >> _U64(31))


def _counter_uniform(seed: int, counters: np.ndarray) -> np.ndarray:
    """Uniforms on (0, 1) keyed by (seed, counter); order-free by design."""
    z = _mix64(_U64(seed) + (counters + _U64(1)) * _GAMMA)
    return ((z >> _U64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _counter_normal(seed: int, atom_index: np.ndarray, slot: int) -> np.ndarray:
    """One standard normal per atom via Box-Muller on counter uniforms.

    Draw k for atom i depends only on (seed, i, slot), so samples are
    identical for any scheduling, worker count, or total atom number.
    """
    base = atom_index.astype(np.uint64) * _U64(4) + _U64(2 * slot)
    u1 = _counter_uniform(seed, base)
    u2 = _counter_uniform(seed, base + _U64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, index: int) -> int:
    """Stable sub-seed for job `index`; independent of execution order.

    Same finalizer as the per-atom stream but keyed with a second
    increment, so job streams never collide with atom streams.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    z = (seed + (index + 1) * 0xD1B54A32D192ED03) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class EnsembleConfig:
    """Thermal cloud description.

    Parameters
    ----------
    temperature : float
        K; 0 is allowed and gives a frozen cloud.
    cloud_width : float
        Initial 1-sigma radius Delta_x(0) in m.
    n_atoms : int
        Trajectories to sample.
    seed : int
        64-bit RNG key.
    mass : float
        Atomic mass in kg, Rb-87 by default.
    """

    temperature: float
    cloud_width: float
    n_atoms: int
    seed: int
    mass: float = M_RB87

    def __post_init__(self) -> None:
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.cloud_width <= 0.0:
            raise ValueError("cloud_width must be > 0")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if self.mass <= 0.0:
            raise ValueError("mass must be > 0")

    @property
    def delta_v(self) -> float:
        """Thermal velocity spread sqrt(k_B T / m) in m/s."""
        return math.sqrt(K_B * self.temperature / self.mass)

    def alpha(self, t):
        """Ballistic expansion factor alpha(t) >= 1."""
        t = np.asarray(t, dtype=float)
        value = np.sqrt(1.0 + (self.delta_v * t / self.cloud_width) ** 2)
        return value if value.ndim else float(value)

    def width_at(self, t):
        """Cloud width Delta_x(t) = alpha(t) Delta_x(0)."""
        return self.alpha(t) * self.cloud_width

    def velocity_width_at(self, t):
        """Conditional velocity spread Delta_v(t) = Delta_v / alpha(t)."""
        return self.delta_v / self.alpha(t)


@dataclass(frozen=True)
class PhaseSpaceSample:
    """Column view of the sampled ensemble; iterates as Trajectory records."""

    x0: np.ndarray
    v: np.ndarray

    def __len__(self) -> int:
        return self.x0.size

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(float(self.x0[i]), float(self.v[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def sample_phase_space(cfg: EnsembleConfig) -> PhaseSpaceSample:
    """Draw the Gaussian ensemble; bit-identical for a given (seed, index)."""
    idx = np.arange(cfg.n_atoms, dtype=np.uint64)
    x0 = cfg.cloud_width * _counter_normal(cfg.seed, idx, slot=0)
    v = cfg.delta_v * _counter_normal(cfg.seed, idx, slot=1)
    return PhaseSpaceSample(x0, v)


@dataclass(frozen=True)
class LocalDensityMatrix:
    """Bin-averaged single-atom density matrix at one detection slice.

    ``atom_weight`` is the local number density estimate count/(N w) in
    1/m; ``count`` is the raw occupancy.  Underfilled bins carry NaN
    matrix elements instead of a noisy ratio.
    """

    x_center: float
    bin_width: float
    rho11: float
    rho22: float
    rho12: complex
    atom_weight: float
    count: int

    @property
    def valid(self) -> bool:
        return not math.isnan(self.rho22)


# ---------------------------------------------------------------------------
# sequence engine


def _instant_rotation(a, b, d_phase, theta: float):
    """Hard pulse of area theta about the frame axis set by the phase D."""
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    e = np.exp(1j * d_phase)
    a_new = c * a - 1j * s * e * b
    b_new = -1j * s * np.conj(e) * a + c * b
    return a_new, b_new


def _free_phase_increment(x0, v, fmap: FieldMap, omega: float, tau: float, dur: float):
    """Exact integral of Delta over [tau, tau+dur] for the affine splitting."""
    c0 = omega - (fmap.omega12_at_origin + fmap.grad_omega12 * x0)
    return c0 * dur - fmap.grad_omega12 * v * (tau * dur + 0.5 * dur * dur)


def _resonant_angle(x0, v, fmap: FieldMap, tau: float, dur: float):
    """Integral of Omega along each path over [tau, tau+dur], closed form."""
    if fmap.profile_kind == LINEAR:
        om_start = fmap.omega_drive_at_origin + fmap.grad_omega_drive * x0
        return om_start * dur + fmap.grad_omega_drive * v * (tau * dur + 0.5 * dur * dur)
    d = fmap.antenna_distance
    s = d + x0 + v * tau
    if np.any(s <= 0.0):
        raise ValueError("trajectory crosses the antenna position")
    amp = fmap.omega_drive_at_origin * d
    with np.errstate(divide="ignore", invalid="ignore"):
        moving = amp * np.log1p(v * dur / s) / np.where(v == 0.0, 1.0, v)
    return np.where(v == 0.0, amp * dur / s, moving)


def _drive_batch_rk4(a, b, d_phase, x0, v, fmap: FieldMap, omega: float,
                     tau: float, dur: float, steps_per_cycle: int):
    """Vectorized RK4 over one off-resonant drive segment.

    All atoms share the step, chosen from field bounds over the whole
    cloud, so the result does not depend on atom ordering.
    """
    if dur == 0.0:
        return a, b, d_phase
    ends = np.concatenate([x0 + v * tau, x0 + v * (tau + dur)])
    omega_max = float(np.max(fmap.drive(ends)))
    delta_max = float(np.max(np.abs(omega - fmap.splitting(ends))))
    fastest = max(omega_max, delta_max)
    dt = dur if fastest == 0.0 else 2.0 * math.pi / (steps_per_cycle * fastest)
    n = max(1, math.ceil(dur / dt))
    h = dur / n

    c0 = omega - (fmap.omega12_at_origin + fmap.grad_omega12 * x0)
    c1 = fmap.grad_omega12 * v

    def deriv(s, ya, yb):
        om = fmap.drive(x0 + v * s)
        ph = d_phase + c0 * (s - tau) - 0.5 * c1 * (s * s - tau * tau)
        e = np.exp(1j * ph)
        return -0.5j * om * e * yb, -0.5j * om * np.conj(e) * ya

    for k in range(n):
        s = tau + k * h
        k1a, k1b = deriv(s, a, b)
        k2a, k2b = deriv(s + 0.5 * h, a + 0.5 * h * k1a, b + 0.5 * h * k1b)
        k3a, k3b = deriv(s + 0.5 * h, a + 0.5 * h * k2a, b + 0.5 * h * k2b)
        k4a, k4b = deriv(s + h, a + h * k3a, b + h * k3b)
        a = a + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)

    d_new = d_phase + c0 * dur - 0.5 * c1 * ((tau + dur) ** 2 - tau * tau)
    return a, b, d_new


_SEQUENCES = {
    "rabi": PulseSequence.rabi,
    "ramsey": PulseSequence.ramsey,
    "spin_echo": PulseSequence.spin_echo,
}


def _sequence_factory(sequence):
    if isinstance(sequence, str):
        try:
            return _SEQUENCES[sequence]
        except KeyError:
            raise ValueError(f"unknown sequence {sequence!r}; "
                             f"expected one of {sorted(_SEQUENCES)}") from None
    if isinstance(sequence, PulseSequence):
        def fixed(t: float) -> PulseSequence:
            if not math.isclose(t, sequence.duration, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError("fixed PulseSequence does not match requested time; "
                                 "pass a constructor for time series")
            return sequence
        return fixed
    if callable(sequence):
        return sequence
    raise TypeError("sequence must be a name, a PulseSequence, or a callable")


def simulate_local_population(cfg: EnsembleConfig, fmap: FieldMap, sequence,
                              t_grid, x_probe: float = 0.0,
                              bin_width: float = DEFAULT_BIN_WIDTH,
                              drive_frequency: float | None = None,
                              min_bin_count: int = MIN_BIN_COUNT,
                              steps_per_cycle: int = 200) -> list[LocalDensityMatrix]:
    """Monte Carlo local density matrix at x_probe for each total time.

    Parameters
    ----------
    sequence : str | PulseSequence | callable
        ``"rabi"``, ``"ramsey"``, ``"spin_echo"``, a concrete sequence, or
        a callable mapping total duration to a PulseSequence.
    t_grid : array_like
        Total sequence durations to evaluate, s.
    drive_frequency : float, optional
        Drive angular frequency; defaults to the splitting at the origin.

    Returns one LocalDensityMatrix per grid time.  Populations are
    averaged over the atoms detected inside the bin; resonant drives and
    free flights use exact per-atom phase integrals, anything else falls
    back to batched RK4.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be > 0")
    seq_of = _sequence_factory(sequence)
    omega = fmap.omega12_at_origin if drive_frequency is None else drive_frequency
    resonant = (omega == fmap.omega12_at_origin) and fmap.grad_omega12 == 0.0

    sample = sample_phase_space(cfg)
    x0, v = sample.x0, sample.v
    n = len(sample)
    out: list[LocalDensityMatrix] = []

    for t in np.asarray(t_grid, dtype=float):
        seq = seq_of(float(t))
        a = np.ones(n, dtype=complex)
        b = np.zeros(n, dtype=complex)
        d_phase = np.zeros(n, dtype=float)
        tau = 0.0
        for seg in seq.segments:
            if seg.kind is SegmentKind.FREE:
                d_phase = d_phase + _free_phase_increment(x0, v, fmap, omega,
                                                          tau, seg.duration)
                tau += seg.duration
            elif seg.kind is SegmentKind.PI_HALF:
                a, b = _instant_rotation(a, b, d_phase, 0.5 * math.pi)
            elif seg.kind is SegmentKind.PI_FLIP:
                a, b = _instant_rotation(a, b, d_phase, math.pi)
            elif seg.kind is SegmentKind.DRIVE:
                if resonant:
                    theta = _resonant_angle(x0, v, fmap, tau, seg.duration)
                    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
                    e = np.exp(1j * d_phase)
                    a, b = c * a - 1j * s * e * b, -1j * s * np.conj(e) * a + c * b
                else:
                    a, b, d_phase = _drive_batch_rk4(a, b, d_phase, x0, v, fmap,
                                                     omega, tau, seg.duration,
                                                     steps_per_cycle)
                tau += seg.duration
            else:  # pragma: no cover - enum is closed
                raise ValueError(f"unhandled segment kind {seg.kind}")

        x_t = x0 + v * tau
        mask = np.abs(x_t - x_probe) <= 0.5 * bin_width
        count = int(np.count_nonzero(mask))
        weight = count / (n * bin_width)
        if count >= min_bin_count:
            rho11 = float(np.mean(np.abs(a[mask]) ** 2))
            rho22 = float(np.mean(np.abs(b[mask]) ** 2))
            # coherence in the bare basis: the splitting phase is omega*t - D,
            # reported in the e^{-i omega12 t} rotation convention so it can
            # be overlaid on rho12_closed_form directly
            phi12 = omega * tau - d_phase[mask]
            rho12 = complex(np.mean(np.conj(a[mask]) * b[mask] * np.exp(-1j * phi12)))
        else:
            rho11 = rho22 = float("nan")
            rho12 = complex(float("nan"), float("nan"))
        out.append(LocalDensityMatrix(x_probe, bin_width, rho11, rho22, rho12,
                                      weight, count))
    return out


# ---------------------------------------------------------------------------
# closed forms


def gaussian_density(cfg: EnsembleConfig, x, t):
    """Expanded cloud profile, normalized to unit integral over x (1/m)."""
    w = cfg.width_at(t)
    x = np.asarray(x, dtype=float)
    value = np.exp(-x * x / (2.0 * w * w)) / (math.sqrt(2.0 * math.pi) * w)
    return value if value.ndim else float(value)


def coherence_envelope(cfg: EnsembleConfig, gradient: float, t, echo: bool = False):
    """Velocity-averaged damping factor exp[-c g^2 Delta_v(t)^2 t^4].

    c = 1/8 for a continuous drive or plain Ramsey interrogation and
    1/32 under a spin echo, which is the sqrt(2) coherence-time gain.
    """
    t = np.asarray(t, dtype=float)
    dv_t = cfg.velocity_width_at(t)
    coeff = 1.0 / 32.0 if echo else 1.0 / 8.0
    value = np.exp(-coeff * (gradient * dv_t) ** 2 * t ** 4)
    return value if value.ndim else float(value)


def local_population_closed_form(cfg: EnsembleConfig, fmap: FieldMap, x, t):
    """Velocity-averaged excited fraction at detection position x.

    The conditional velocity distribution at x has mean
    x t Delta_v^2 / Delta_x(t)^2, which shifts the apparent local Rabi
    frequency; its spread Delta_v(t) produces the quartic envelope.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    w_t = cfg.width_at(t)
    grad = fmap.drive_gradient(x)
    omega_tilde = fmap.drive(x) - 0.5 * x * grad * cfg.delta_v ** 2 * t ** 2 / w_t ** 2
    env = np.exp(-0.125 * (grad * cfg.velocity_width_at(t)) ** 2 * t ** 4)
    value = 0.5 * (1.0 - np.cos(omega_tilde * t) * env)
    return value if value.ndim else float(value)


def rho22_closed_form(cfg: EnsembleConfig, fmap: FieldMap, x, t):
    """Joint density of being at x and excited, 1/m."""
    value = gaussian_density(cfg, x, t) * local_population_closed_form(cfg, fmap, x, t)
    return value if np.ndim(value) else float(value)


def rho11_closed_form(cfg: EnsembleConfig, fmap: FieldMap, x, t):
    """Ground-state complement; rho11 + rho22 integrates to one atom."""
    value = gaussian_density(cfg, x, t) * (1.0 - local_population_closed_form(cfg, fmap, x, t))
    return value if np.ndim(value) else float(value)


def rho12_closed_form(cfg: EnsembleConfig, fmap: FieldMap, x, t, echo: bool = False):
    """Density-weighted Ramsey coherence (normalized to 1 at t = 0).

    Without an echo the phase carries the expansion-shifted splitting
    omega12_bar(x) = omega12(x) - (1/2) x grad_omega12 Delta_v^2 t^2 /
    Delta_x(t)^2; with an echo the position dependence cancels and only
    the (1/32)-coefficient envelope remains.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    env = coherence_envelope(cfg, fmap.grad_omega12, t, echo=echo)
    if echo:
        phase = np.ones_like(env)
    else:
        w_t = cfg.width_at(t)
        omega_bar = (fmap.splitting(x)
                     - 0.5 * x * fmap.grad_omega12 * cfg.delta_v ** 2 * t ** 2 / w_t ** 2)
        phase = np.exp(-1j * omega_bar * t)
    value = gaussian_density(cfg, x, t) * phase * env
    return value if np.ndim(value) else complex(value)


def sequence_population_closed_form(cfg: EnsembleConfig, fmap: FieldMap, x, t,
                                    kind: str, drive_frequency: float | None = None):
    """Velocity-averaged population after a named sequence, at position x."""
    omega = fmap.omega12_at_origin if drive_frequency is None else drive_frequency
    if kind == "rabi":
        return local_population_closed_form(cfg, fmap, x, t)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "spin_echo":
        env = coherence_envelope(cfg, fmap.grad_omega12, t, echo=True)
        value = 0.5 * (1.0 - env)
        return value if np.ndim(value) else float(value)
    if kind == "ramsey":
        gauss = gaussian_density(cfg, x, t)
        coher = rho12_closed_form(cfg, fmap, x, t)
        rel = np.where(gauss > 0.0, coher / gauss, 0.0)
        value = 0.5 * (1.0 + np.real(np.exp(1j * omega * t) * rel))
        return value if np.ndim(value) else float(value)
    raise ValueError(f"unknown sequence kind {kind!r}")


def tau_v_value(delta_v: float, gradient: float) -> float:
    """Thermal coherence time 8^(1/4) / sqrt(Delta_v |gradient|), s."""
    if delta_v <= 0.0:
        raise ValueError("delta_v must be > 0 (finite temperature)")
    if gradient == 0.0:
        raise ValueError("gradient must be nonzero")
    return 8.0 ** 0.25 / math.sqrt(delta_v * abs(gradient))


def tau_v(cfg: EnsembleConfig, fmap: FieldMap) -> float:
    """Coherence time of driven oscillations for this cloud and drive.

    Scales as T^(-1/4) and |dOmega/dx|^(-1/2); raises at zero temperature
    or zero gradient where the damping mechanism is absent.
    """
    return tau_v_value(cfg.delta_v, fmap.drive_gradient(0.0))
