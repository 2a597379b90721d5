"""Finite-resolution imaging of the excited-state density.

The imaging system is modeled as a 1-D/2-D Gaussian blur of standard
deviation sigma_I.  Blurring a spatial fringe of wavevector k scales
its contrast by exp(-sigma_I^2 k^2 / 2); since a resonant drive lays
down fringes with k = |grad Omega| t, the imaged oscillation acquires
a Gaussian time envelope exp(-t^2/tau_x^2) with

    tau_x = sqrt(2) / (sigma_I |grad Omega|)

independent of temperature.  FringeFitter recovers k, contrast and
phase from a single image row, which inverts to the field gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .ensemble import (EnsembleConfig, _resonant_angle, gaussian_density,
                       rho22_closed_form, sample_phase_space)
from .fields import FieldMap
from .lm import levenberg
from .validation import as_1d_floats, check_xy, uniform_pitch

KERNEL_CUTOFF_SIGMAS = 5.0


@dataclass(frozen=True)
class ResolutionModel:
    """Gaussian point-spread function; sigma = 0 is a perfect imager."""

    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma >= 0.0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")

    def attenuation(self, k) -> np.ndarray:
        """Contrast retained on a fringe of wavevector k (rad/m)."""
        return np.exp(-0.5 * (self.sigma * np.asarray(k, dtype=float)) ** 2)


def _as_resolution(resolution) -> ResolutionModel:
    if resolution is None:
        return ResolutionModel(0.0)
    if isinstance(resolution, ResolutionModel):
        return resolution
    return ResolutionModel(float(resolution))


def _gaussian_kernel(sigma: float, pitch: float) -> np.ndarray:
    # sampled, not integrated: adequate once pitch <= sigma/2
    if pitch > 0.5 * sigma:
        raise ValueError(
            f"grid pitch {pitch:g} m is too coarse for sigma {sigma:g} m; "
            "need pitch <= sigma/2 (sigma/4 recommended)")
    half = int(math.floor(KERNEL_CUTOFF_SIGMAS * sigma / pitch))
    offsets = np.arange(-half, half + 1) * pitch
    taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return taps / taps.sum()


def convolve_profile(x, values, resolution) -> np.ndarray:
    """Blur a sampled profile with the instrument response.

    x must be a uniform ascending grid.  The kernel is truncated at
    +-5 sigma and renormalized to unit sum so flat profiles stay flat.
    """
    x, values = check_xy(x, values, min_points=2)
    res = _as_resolution(resolution)
    if res.sigma == 0.0:
        return values.copy()
    kernel = _gaussian_kernel(res.sigma, uniform_pitch(x))
    return np.convolve(values, kernel, mode="same")


def tau_x(sigma: float, gradient: float) -> float:
    """Resolution-limited damping time sqrt(2)/(sigma |gradient|)."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0 for a finite damping time")
    if gradient == 0.0:
        raise ValueError("gradient must be nonzero")
    return math.sqrt(2.0) / (sigma * abs(gradient))


# ---------------------------------------------------------------------------
# synthetic images


@dataclass(frozen=True)
class SyntheticImage:
    """Excited-state column density on a square-pixel grid.

    ``grid[i, j]`` is the density at y = origin[1] + i*pitch,
    x = origin[0] + j*pitch; row 0 is the bottom of the frame.
    """

    grid: np.ndarray
    pixel_pitch: float
    origin: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2:
            raise ValueError(f"grid must be 2-D, got shape {grid.shape}")
        if self.pixel_pitch <= 0.0:
            raise ValueError("pixel_pitch must be > 0")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    def x_axis(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.grid.shape[1]) * self.pixel_pitch

    def y_axis(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.grid.shape[0]) * self.pixel_pitch


def _blur_separable(grid: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = np.apply_along_axis(np.convolve, 1, grid, kernel, mode="same")
    return np.apply_along_axis(np.convolve, 0, out, kernel, mode="same")


def render_image(cfg: EnsembleConfig, fmap: FieldMap, t: float,
                 resolution=None, pixel_pitch: float = 10e-6,
                 half_width: float | None = None,
                 half_height: float | None = None,
                 source: str = "closed_form") -> SyntheticImage:
    """Image of the cloud after a resonant drive of duration t.

    The excited density factorizes into the fringe profile along the
    field gradient and a plain thermal profile across it.  source
    picks the fringe profile: "closed_form" evaluates the analytic
    local density, "monte_carlo" histograms exact per-trajectory
    excitation probabilities onto the pixel grid.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if pixel_pitch <= 0.0:
        raise ValueError("pixel_pitch must be > 0")
    if half_width is None:
        half_width = 4.0 * cfg.width_at(t)
    if half_height is None:
        half_height = half_width
    nx = max(int(math.ceil(half_width / pixel_pitch)), 2)
    ny = max(int(math.ceil(half_height / pixel_pitch)), 2)
    xs = np.arange(-nx, nx + 1) * pixel_pitch
    ys = np.arange(-ny, ny + 1) * pixel_pitch

    if source == "closed_form":
        profile = rho22_closed_form(cfg, fmap, xs, t)
    elif source == "monte_carlo":
        atoms = sample_phase_space(cfg)
        theta = _resonant_angle(atoms.x0, atoms.v, fmap, tau=0.0, dur=t)
        weights = np.sin(0.5 * theta) ** 2
        edges = np.concatenate([xs - 0.5 * pixel_pitch, [xs[-1] + 0.5 * pixel_pitch]])
        counts, _ = np.histogram(atoms.x0 + atoms.v * t, bins=edges, weights=weights)
        profile = counts / (cfg.n_atoms * pixel_pitch)
    else:
        raise ValueError(f"unknown source {source!r}")

    transverse = gaussian_density(cfg, ys, t)
    grid = np.outer(transverse, profile)
    res = _as_resolution(resolution)
    if res.sigma > 0.0:
        grid = _blur_separable(grid, _gaussian_kernel(res.sigma, pixel_pitch))
    return SyntheticImage(grid=grid, pixel_pitch=pixel_pitch,
                          origin=(float(xs[0]), float(ys[0])))


def horizontal_strip(image: SyntheticImage, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Average the central n_rows rows; returns (x, profile)."""
    rows = image.grid.shape[0]
    n_rows = min(max(int(n_rows), 1), rows)
    lo = (rows - n_rows) // 2
    return image.x_axis(), image.grid[lo:lo + n_rows].mean(axis=0)


# ---------------------------------------------------------------------------
# fringe regression

_FRINGE_PARAMS = ("A", "x0", "w", "visibility", "k", "phi", "offset")


@dataclass(frozen=True)
class FringeFitResult:
    params: dict
    stderr: dict
    covariance: np.ndarray
    r_squared: float
    converged: bool
    iterations: int
    n_points: int
    low_confidence: bool       # fewer than ~2 fringe periods across the cloud
    unconstrained_phase: bool  # visibility consistent with zero

    @property
    def k(self) -> float:
        return self.params["k"]

    @property
    def visibility(self) -> float:
        return self.params["visibility"]

    @property
    def phase(self) -> float:
        return self.params["phi"]


def _fringe_value(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, x0, w, vis, k, phi, off = p
    gauss = np.exp(-0.5 * ((x - x0) / w) ** 2)
    return a * gauss * (1.0 + vis * np.cos(k * x + phi)) + off


def _fringe_jacobian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, x0, w, vis, k, phi, off = p
    u = (x - x0) / w
    gauss = np.exp(-0.5 * u ** 2)
    arg = k * x + phi
    cos_, sin_ = np.cos(arg), np.sin(arg)
    mod = 1.0 + vis * cos_
    ag = a * gauss
    return np.column_stack([
        gauss * mod,                 # A
        ag * mod * u / w,            # x0
        ag * mod * u ** 2 / w,       # w
        ag * cos_,                   # visibility
        -ag * vis * sin_ * x,        # k
        -ag * vis * sin_,            # phi
        np.ones_like(x),             # offset
    ])


def _fringe_guess(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    off = float(np.min(y))
    lift = y - off
    total = float(np.sum(lift))
    if total <= 0.0:
        raise ValueError("profile has no structure above its floor")
    x0 = float(np.sum(lift * x)) / total
    w = math.sqrt(max(float(np.sum(lift * (x - x0) ** 2)) / total, 0.0))
    w = w if w > 0.0 else (x[-1] - x[0]) / 4.0
    amp = float(np.max(lift))

    # fringe frequency from the spectrum of the envelope-normalized core
    core = np.abs(x - x0) < 2.5 * w
    if np.count_nonzero(core) < 8:
        core = np.ones_like(x, dtype=bool)
    gauss = np.exp(-0.5 * ((x[core] - x0) / w) ** 2)
    ratio = lift[core] / (amp * gauss) - np.mean(lift[core] / (amp * gauss))
    pitch = x[1] - x[0]
    spectrum = np.abs(np.fft.rfft(ratio))
    if spectrum.size > 1:
        kbin = 1 + int(np.argmax(spectrum[1:]))
        k = 2.0 * math.pi * kbin / (ratio.size * pitch)
    else:
        k = 0.0
    z = np.sum(ratio * np.exp(-1j * k * x[core]))
    phi = float(np.angle(z))
    vis = min(2.0 * abs(z) / max(ratio.size, 1), 1.0)
    return np.array([amp, x0, w, max(vis, 0.05), k, phi, off])


def _canonical_fringe(p: np.ndarray) -> np.ndarray:
    a, x0, w, vis, k, phi, off = p
    w = abs(w)
    if k < 0.0:
        k, phi = -k, -phi
    if vis < 0.0:
        vis, phi = -vis, phi + math.pi
    phi = math.remainder(phi, 2.0 * math.pi)
    if phi <= -math.pi:
        phi += 2.0 * math.pi
    return np.array([a, x0, w, vis, k, phi, off])


class FringeFitter(BaseEstimator):
    """Gaussian-enveloped fringe regression on an image profile.

    Model: A exp[-(x-x0)^2/2w^2] (1 + v cos(kx + phi)) + offset, with
    analytic Jacobian.  After ``fit``: ``params_``, ``stderr_``,
    ``result_``.  ``predict`` evaluates the fitted profile.
    """

    def __init__(self, max_iter: int = 300, cost_tol: float = 1e-12):
        self.max_iter = max_iter
        self.cost_tol = cost_tol

    def fit(self, X, y) -> "FringeFitter":
        x, y = check_xy(X, y, min_points=len(_FRINGE_PARAMS) + 1)
        uniform_pitch(x)

        def residual_jac(p):
            return _fringe_value(x, p) - y, _fringe_jacobian(x, p)

        def reflect(p):
            p = p.copy()
            p[2] = abs(p[2]) or 1e-12
            return p

        lmres = levenberg(residual_jac, _fringe_guess(x, y),
                          max_iter=self.max_iter, cost_tol=self.cost_tol,
                          reflect=reflect)
        p = _canonical_fringe(lmres.params)
        dof = max(lmres.n_points - p.size, 1)
        cov = lmres.cov_unit * (lmres.cost / dof)
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))

        prediction = _fringe_value(x, p)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r_squared = 1.0 - float(np.sum((y - prediction) ** 2)) / ss_tot if ss_tot else float("nan")
        periods = p[4] * 4.0 * p[2] / (2.0 * math.pi)
        params = dict(zip(_FRINGE_PARAMS, p.tolist()))
        stderr = dict(zip(_FRINGE_PARAMS, err.tolist()))
        self.result_ = FringeFitResult(
            params=params, stderr=stderr, covariance=cov, r_squared=r_squared,
            converged=lmres.converged, iterations=lmres.iterations,
            n_points=lmres.n_points, low_confidence=periods < 2.0,
            unconstrained_phase=stderr["visibility"] >= abs(params["visibility"]))
        self.params_ = params
        self.stderr_ = stderr
        return self

    def predict(self, X):
        if not hasattr(self, "result_"):
            raise NotFittedError("this FringeFitter instance is not fitted yet")
        x = as_1d_floats(X, "X")
        return _fringe_value(x, np.array([self.params_[n] for n in _FRINGE_PARAMS]))


def fit_spatial_fringes(x, profile) -> FringeFitResult:
    """Fit the fringe model to one profile; see FringeFitter."""
    return FringeFitter().fit(x, profile).result_
