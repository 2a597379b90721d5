"""Decay-model fits, local-gradient extraction, and pulse fidelity.

The workhorse model is a damped cosine

    n2(t) = A exp[-g(t) - t^2/tau_x^2] cos(Omega t + phi) + n_b

whose envelope argument g distinguishes the damping hypotheses:

    quartic_t4     g = (t/tau)^4 / (1 + Delta_v^2 t^2 / Delta_x^2)
    gaussian_t2    g = (t/tau)^2
    exponential_t  g = t/tau
    free_exponent  g = (t/tau)^d / (1 + Delta_v^2 t^2 / Delta_x^2)

Delta_v and Delta_x are the initial thermal velocity spread and cloud
width, held fixed; the division restores the envelope slowdown from
ballistic expansion.  The optional fixed tau_x term models the
finite-resolution damping of imaged fringes.  All Jacobians are
analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .ensemble import tau_v_value
from .fields import K_B, M_RB87
from .lm import LMResult, levenberg
from .validation import as_1d_floats, check_positive, check_xy


class ModelKind(str, Enum):
    QUARTIC_T4 = "quartic_t4"
    GAUSSIAN_T2 = "gaussian_t2"
    EXPONENTIAL_T = "exponential_t"
    FREE_EXPONENT = "free_exponent"


_BASE_PARAMS = ("A", "omega", "phi", "n_b", "tau")


@dataclass(frozen=True)
class DecayModel:
    """One damping hypothesis plus its fixed physical constants."""

    kind: ModelKind
    delta_v: float = 0.0          # m/s, initial thermal velocity spread
    delta_x: float = math.inf     # m, initial cloud width
    tau_x: float = math.inf       # s, resolution damping; inf disables

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.delta_v < 0.0 or self.delta_x <= 0.0 or self.tau_x <= 0.0:
            raise ValueError("delta_v >= 0, delta_x > 0 and tau_x > 0 required")

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.kind is ModelKind.FREE_EXPONENT:
            return _BASE_PARAMS + ("d",)
        return _BASE_PARAMS

    def _expansion(self, t: np.ndarray) -> np.ndarray:
        return 1.0 + (self.delta_v * t / self.delta_x) ** 2

    def _envelope_arg(self, t: np.ndarray, params: dict) -> np.ndarray:
        tau = params["tau"]
        if self.kind is ModelKind.QUARTIC_T4:
            return (t / tau) ** 4 / self._expansion(t)
        if self.kind is ModelKind.GAUSSIAN_T2:
            return (t / tau) ** 2
        if self.kind is ModelKind.EXPONENTIAL_T:
            return t / tau
        d = params["d"]
        return np.power(t / tau, d) / self._expansion(t)

    def value(self, t, params: dict) -> np.ndarray:
        """Model prediction at times t (s); params keyed by param_names."""
        t = np.asarray(t, dtype=float)
        env = np.exp(-self._envelope_arg(t, params) - (t / self.tau_x) ** 2)
        osc = np.cos(params["omega"] * t + params["phi"])
        return params["A"] * env * osc + params["n_b"]

    def jacobian(self, t, params: dict) -> np.ndarray:
        """Analytic d(model)/d(param), columns ordered as param_names."""
        t = np.asarray(t, dtype=float)
        tau = params["tau"]
        g = self._envelope_arg(t, params)
        env = np.exp(-g - (t / self.tau_x) ** 2)
        arg = params["omega"] * t + params["phi"]
        cos_, sin_ = np.cos(arg), np.sin(arg)
        a_env = params["A"] * env

        if self.kind is ModelKind.QUARTIC_T4:
            dg_dtau = -4.0 * g / tau
        elif self.kind is ModelKind.GAUSSIAN_T2:
            dg_dtau = -2.0 * g / tau
        elif self.kind is ModelKind.EXPONENTIAL_T:
            dg_dtau = -g / tau
        else:
            dg_dtau = -params["d"] * g / tau

        cols = [env * cos_,                 # A
                -a_env * sin_ * t,          # omega
                -a_env * sin_,              # phi
                np.ones_like(t),            # n_b
                -a_env * cos_ * dg_dtau]    # tau
        if self.kind is ModelKind.FREE_EXPONENT:
            ratio = t / tau
            dg_dd = np.zeros_like(t)
            pos = ratio > 0.0
            dg_dd[pos] = g[pos] * np.log(ratio[pos])
            cols.append(-a_env * cos_ * dg_dd)
        return np.column_stack(cols)


def _resolve_model(model) -> DecayModel:
    if isinstance(model, DecayModel):
        return model
    return DecayModel(ModelKind(model))


@dataclass(frozen=True)
class DecayFitResult:
    """Fit outcome; params/stderr keyed by the model's parameter names."""

    model: DecayModel
    params: dict
    stderr: dict
    free_names: tuple[str, ...]
    covariance: np.ndarray      # over the free parameters, fit order
    r_squared: float
    reduced_chi_square: float
    converged: bool
    iterations: int
    rank_deficient: bool
    n_points: int

    def predict(self, t):
        return self.model.value(t, self.params)


def _spectral_seed(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Dominant angular frequency and phase from the discrete spectrum."""
    n = t.size
    if n < 4 or t[-1] <= t[0]:
        return 0.0, 0.0
    tu = np.linspace(t[0], t[-1], n)
    yu = np.interp(tu, t, y) if not np.allclose(t, tu, rtol=0, atol=1e-12 * t[-1]) else y
    spectrum = np.abs(np.fft.rfft(yu - yu.mean()))
    if spectrum.size < 2:
        return 0.0, 0.0
    k = 1 + int(np.argmax(spectrum[1:]))
    omega = 2.0 * math.pi * k / (n * (tu[1] - tu[0]))
    z = np.sum((y - y.mean()) * np.exp(-1j * omega * t))
    return omega, float(np.angle(z))


def _initial_guess(model: DecayModel, t: np.ndarray, y: np.ndarray,
                   hold: dict, init: dict | None) -> dict:
    guess = {
        "A": 0.5 * (float(np.max(y)) - float(np.min(y))),
        "omega": 0.0, "phi": 0.0,
        "n_b": float(np.mean(y)),
        "tau": 0.5 * (float(t[-1]) - float(t[0])) or 1.0,
    }
    if model.kind is ModelKind.FREE_EXPONENT:
        guess["d"] = 4.0
    if "omega" not in hold and (init is None or "omega" not in init):
        guess["omega"], guess["phi"] = _spectral_seed(t, y)
    elif hold.get("omega") == 0.0:
        # envelope-only data: seed the signed step from first to last sample
        guess["A"] = float(y[0] - y[-1])
        guess["n_b"] = float(y[-1])
    guess.update(hold)
    if init:
        unknown = set(init) - set(model.param_names)
        if unknown:
            raise ValueError(f"unknown init parameters {sorted(unknown)}")
        guess.update(init)
    return guess


def _canonicalize(params: dict, free: tuple[str, ...]) -> dict:
    """Fold exact model symmetries into A >= 0, omega >= 0, phi in (-pi, pi]."""
    p = dict(params)
    p["tau"] = abs(p["tau"])
    phi_free = "phi" in free
    if "omega" in free and p["omega"] < 0.0 and (phi_free or p["phi"] == 0.0):
        p["omega"], p["phi"] = -p["omega"], -p["phi"]
    if "A" in free and p["A"] < 0.0 and phi_free:
        p["A"], p["phi"] = -p["A"], p["phi"] + math.pi
    if phi_free:
        p["phi"] = math.remainder(p["phi"], 2.0 * math.pi)
        if p["phi"] <= -math.pi:
            p["phi"] += 2.0 * math.pi
    return p


class DecayFitter(BaseEstimator):
    """Damped-cosine regression with a selectable envelope law.

    Parameters
    ----------
    model : str | DecayModel
        Envelope kind, or a full DecayModel carrying fixed constants
        (in which case delta_v/delta_x/tau_x below are ignored).
    delta_v, delta_x, tau_x : float
        Fixed constants for a kind given by name.
    hold : dict, optional
        Free parameters to pin, e.g. ``{"omega": 0.0, "phi": 0.0}`` for
        non-oscillatory coherence decays.
    max_iter, cost_tol : LM loop controls.

    After ``fit`` the instance exposes ``params_``, ``stderr_``,
    ``result_`` (a DecayFitResult), ``converged_`` and ``n_iter_``.
    """

    def __init__(self, model="quartic_t4", delta_v: float = 0.0,
                 delta_x: float = math.inf, tau_x: float = math.inf,
                 hold: dict | None = None, max_iter: int = 200,
                 cost_tol: float = 1e-10):
        self.model = model
        self.delta_v = delta_v
        self.delta_x = delta_x
        self.tau_x = tau_x
        self.hold = hold
        self.max_iter = max_iter
        self.cost_tol = cost_tol

    def _model(self) -> DecayModel:
        if isinstance(self.model, DecayModel):
            return self.model
        return DecayModel(ModelKind(self.model), self.delta_v, self.delta_x, self.tau_x)

    def fit(self, X, y, sigma=None, init: dict | None = None) -> "DecayFitter":
        t, y = check_xy(X, y, min_points=3)
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        if t[0] < 0.0:
            raise ValueError("times must be >= 0")
        if sigma is not None:
            sigma = as_1d_floats(sigma, "sigma")[order]
            if sigma.size != t.size or np.any(sigma <= 0.0):
                raise ValueError("sigma must be positive and match the series")

        model = self._model()
        hold = dict(self.hold or {})
        unknown = set(hold) - set(model.param_names)
        if unknown:
            raise ValueError(f"cannot hold unknown parameters {sorted(unknown)}")
        free = tuple(name for name in model.param_names if name not in hold)
        if not free:
            raise ValueError("at least one parameter must stay free")
        if t.size <= len(free):
            raise ValueError(f"{t.size} samples cannot constrain "
                             f"{len(free)} free parameters")

        guess = _initial_guess(model, t, y, hold, init)
        free_idx = {name: i for i, name in enumerate(free)}
        tau_i = free_idx.get("tau")
        d_i = free_idx.get("d")

        def assemble(vec: np.ndarray) -> dict:
            params = dict(guess)
            for name, i in free_idx.items():
                params[name] = float(vec[i])
            return params

        def residual_jac(vec: np.ndarray):
            params = assemble(vec)
            r = model.value(t, params) - y
            jac = model.jacobian(t, params)[:, [model.param_names.index(n) for n in free]]
            if sigma is not None:
                r = r / sigma
                jac = jac / sigma[:, None]
            return r, jac

        def reflect(vec: np.ndarray) -> np.ndarray:
            vec = vec.copy()
            if tau_i is not None:
                vec[tau_i] = abs(vec[tau_i])
            if d_i is not None:
                vec[d_i] = float(np.clip(vec[d_i], 0.2, 12.0))
            return vec

        p0 = np.array([guess[name] for name in free], dtype=float)
        lmres: LMResult = levenberg(residual_jac, p0, max_iter=self.max_iter,
                                    cost_tol=self.cost_tol, reflect=reflect)

        params = _canonicalize(assemble(lmres.params), free)
        dof = max(lmres.n_points - len(free), 1)
        if sigma is None:
            cov = lmres.cov_unit * (lmres.cost / dof)
        else:
            cov = lmres.cov_unit
        stderr = {name: float(np.sqrt(max(cov[i, i], 0.0)))
                  for name, i in free_idx.items()}

        prediction = model.value(t, params)
        ss_res = float(np.sum((y - prediction) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else float("nan")
        if sigma is None:
            reduced = ss_res / dof
        else:
            reduced = float(np.sum(((y - prediction) / sigma) ** 2)) / dof

        self.result_ = DecayFitResult(
            model=model, params=params, stderr=stderr, free_names=free,
            covariance=cov, r_squared=r_squared, reduced_chi_square=reduced,
            converged=lmres.converged, iterations=lmres.iterations,
            rank_deficient=lmres.rank_deficient, n_points=lmres.n_points)
        self.params_ = params
        self.stderr_ = stderr
        self.converged_ = lmres.converged
        self.n_iter_ = lmres.iterations
        return self

    def predict(self, X):
        if not hasattr(self, "result_"):
            raise NotFittedError("this DecayFitter instance is not fitted yet")
        return self.result_.model.value(as_1d_floats(X, "X"), self.params_)

    def score(self, X, y) -> float:
        """Coefficient of determination of the fitted model on (X, y)."""
        x, y = check_xy(X, y)
        resid = y - self.predict(x)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        return 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else float("nan")


def fit_decay(t, y, model="quartic_t4", init: dict | None = None, sigma=None,
              hold: dict | None = None, max_iter: int = 200,
              cost_tol: float = 1e-10) -> DecayFitResult:
    """Fit one damping model to a population time series; see DecayFitter."""
    resolved = _resolve_model(model)
    fitter = DecayFitter(model=resolved, hold=hold, max_iter=max_iter,
                         cost_tol=cost_tol)
    fitter.fit(t, y, sigma=sigma, init=init)
    return fitter.result_


# ---------------------------------------------------------------------------
# local-gradient extraction


@dataclass(frozen=True)
class ScanPoint:
    x: float
    omega: float
    omega_err: float
    fit: DecayFitResult


@dataclass(frozen=True)
class LocalRabiScan:
    points: tuple[ScanPoint, ...]
    excluded: tuple[tuple[float, str], ...]
    slope: float            # rad/(s m): the recovered drive gradient
    slope_err: float
    intercept: float        # rad/s: drive amplitude at the origin
    intercept_err: float


def _weighted_line(x: np.ndarray, y: np.ndarray, err: np.ndarray):
    use_weights = np.all(np.isfinite(err)) and np.all(err > 0.0)
    w = 1.0 / err ** 2 if use_weights else np.ones_like(x)
    s, sx, sy = float(np.sum(w)), float(np.sum(w * x)), float(np.sum(w * y))
    sxx, sxy = float(np.sum(w * x * x)), float(np.sum(w * x * y))
    det = s * sxx - sx * sx
    if det <= 0.0:
        raise ValueError("degenerate abscissas in gradient regression")
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    var_slope, var_int = s / det, sxx / det
    if not use_weights:
        resid = y - (slope * x + intercept)
        scale = float(np.sum(resid ** 2)) / max(x.size - 2, 1)
        var_slope *= scale
        var_int *= scale
    return slope, math.sqrt(var_slope), intercept, math.sqrt(var_int)


def extract_local_rabi(series_by_x: dict, model="quartic_t4",
                       sigma=None, **fit_options) -> LocalRabiScan:
    """Fit per-position series and regress local Rabi frequency on x.

    ``series_by_x`` maps probe position (m) to a ``(t, population)``
    pair.  Non-converged fits are excluded from the regression and
    reported with a reason.  At least two positions must survive.
    """
    resolved = _resolve_model(model)
    points: list[ScanPoint] = []
    excluded: list[tuple[float, str]] = []
    for x in sorted(series_by_x):
        t, y = series_by_x[x]
        try:
            res = fit_decay(t, y, model=resolved, sigma=sigma, **fit_options)
        except (ValueError, RuntimeError) as exc:
            excluded.append((float(x), str(exc)))
            continue
        if not res.converged:
            excluded.append((float(x), "fit did not converge"))
            continue
        points.append(ScanPoint(float(x), res.params["omega"],
                                res.stderr.get("omega", float("nan")), res))
    if len(points) < 2:
        raise ValueError("need at least two converged positions for a gradient")
    xs = np.array([p.x for p in points])
    oms = np.array([p.omega for p in points])
    errs = np.array([p.omega_err for p in points])
    slope, slope_err, intercept, intercept_err = _weighted_line(xs, oms, errs)
    return LocalRabiScan(tuple(points), tuple(excluded), slope, slope_err,
                         intercept, intercept_err)


# ---------------------------------------------------------------------------
# pulse fidelity and sensing figures


def pi_half_fidelity(omega0, tau_v: float):
    """Thermal-ensemble fidelity of an ideal-timing pi/2 pulse.

    F = sqrt(1/2 {1 + exp[-(pi / (4 Omega0 tau_v))^4]}); strong drives
    approach 1, weak drives the fully dephased floor 1/sqrt(2).
    """
    tau_v = check_positive(tau_v, "tau_v")
    omega0 = np.asarray(omega0, dtype=float)
    if np.any(omega0 <= 0.0):
        raise ValueError("omega0 must be > 0")
    value = np.sqrt(0.5 * (1.0 + np.exp(-(np.pi / (4.0 * omega0 * tau_v)) ** 4)))
    return value if value.ndim else float(value)


def sensing_error_scaling(temperature: float, gradient: float,
                          mass: float = M_RB87) -> float:
    """Frequency-resolution floor 1/tau_v, scaling as T^(1/4) |g|^(1/2)."""
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    delta_v = math.sqrt(K_B * temperature / mass)
    return 1.0 / tau_v_value(delta_v, gradient)
