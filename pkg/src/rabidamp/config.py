"""Config-file parsing for the command-line front end.

Flat INI-style sections with unit-bearing key names.  Every value is
converted to SI exactly once, here; nothing downstream sees a kHz or a
millimeter again.  Unknown sections or keys are hard errors with the
offending line number, so a typo cannot silently fall back to a
default.

Unit conventions at this boundary:
  *_uK micro-kelvin, *_mm millimeter, *_um micrometer, *_ms
  millisecond, *_cm centimeter, *_uT micro-tesla, *_Hz cyclic
  frequency (converted with 2 pi).  rabi_at_origin_kHz is a cyclic
  Rabi frequency.  gradient keys are angular-frequency gradients in
  rad/s per (ms mm), i.e. a value of 1.74 means 1.74e6 rad/(s m);
  this matches how field gradients are usually quoted for these
  clouds and keeps sweep axes numerically tame.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import EnsembleConfig
from .errors import ConfigError
from .fields import CONSTANTS, FieldMap, rabi_from_B_field

VERSION = "0.1.0"

KINDS = ("rabi", "ramsey", "spin_echo", "image", "fit", "sweep", "fidelity")
SIMULATE_KINDS = ("rabi", "ramsey", "spin_echo")

# configparser lowercases option names, so the schema is lowercase
_SCHEMA = {
    "run": {"kind", "out"},
    "ensemble": {"temperature_uk", "cloud_width_mm", "n_atoms", "seed"},
    "field": {"rabi_at_origin_khz", "b_field_at_origin_ut", "gradient_per_ms_mm",
              "profile", "antenna_distance_cm", "static_gradient_per_ms_mm",
              "g_s", "g_i"},
    "imaging": {"sigma_i_um", "pixel_um"},
    "simulate": {"t_max_ms", "n_samples", "x_probe_mm", "bin_width_um",
                 "detuning_hz", "min_bin_count"},
    "sweep": {"axis", "values", "tolerance"},
    "image": {"time_ms", "strip_pixels", "half_width_mm", "source"},
    "fidelity": {"omega_tau_min", "omega_tau_max", "n_points", "values"},
    "fit": {"input", "model", "tau_x_ms"},
}

_PER_MS_MM = 1e6  # rad/(s m) per (ms mm)^-1


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description, SI units throughout."""

    kind: str
    out: str | None
    ensemble: EnsembleConfig
    fmap: FieldMap
    drive_frequency: float          # rad/s in the splitting-at-origin frame
    sigma_i: float                  # imaging resolution, m; 0 disables
    pixel: float                    # pixel pitch, m
    t_max: float | None             # s; None means 2.5x the predicted decay
    n_samples: int
    x_probe: float                  # m
    bin_width: float                # m
    min_bin_count: int
    sweep_axis: str
    sweep_values: tuple
    sweep_tolerance: float
    image_time: float               # s
    strip_pixels: int
    image_half_width: float | None  # m
    image_source: str
    fidelity_values: tuple
    fit_input: str | None
    fit_model: str
    fit_tau_x: float                # s
    config_hash: str
    resolved: dict = field(repr=False, default_factory=dict)


def _line_of(raw: str, token: str) -> str:
    pattern = re.compile(rf"^\s*(\[\s*)?{re.escape(token)}\b", re.IGNORECASE)
    for i, line in enumerate(raw.splitlines(), start=1):
        if pattern.match(line):
            return f" (line {i})"
    return ""


class _Section:
    """One schema-checked config section with typed, unit-aware getters."""

    def __init__(self, parser: configparser.ConfigParser, raw: str, name: str):
        self._parser = parser
        self._raw = raw
        self.name = name

    def _get(self, key: str):
        if self._parser.has_option(self.name, key):
            return self._parser.get(self.name, key).strip()
        return None

    def has(self, key: str) -> bool:
        return self._parser.has_option(self.name, key)

    def str(self, key: str, default=None, choices=None):
        value = self._get(key)
        if value is None:
            if default is None and choices is not None:
                raise ConfigError(f"[{self.name}] missing required key {key}")
            return default
        if choices is not None and value not in choices:
            raise ConfigError(f"[{self.name}] {key} must be one of {sorted(choices)}, "
                              f"got {value!r}{_line_of(self._raw, key)}")
        return value

    def float(self, key: str, default=None, scale: float = 1.0):
        # default is in the key's own unit; scale converts either path to SI
        value = self._get(key)
        if value is None:
            return None if default is None else default * scale
        try:
            return float(value) * scale
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} is not a number: "
                              f"{value!r}{_line_of(self._raw, key)}") from None

    def int(self, key: str, default=None):
        value = self._get(key)
        if value is None:
            return default
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} is not an integer: "
                              f"{value!r}{_line_of(self._raw, key)}") from None

    def floats(self, key: str, scale: float = 1.0) -> tuple:
        value = self._get(key)
        if value is None:
            return ()
        try:
            return tuple(float(v) * scale for v in value.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} must be a list of numbers: "
                              f"{value!r}{_line_of(self._raw, key)}") from None


def _check_schema(parser: configparser.ConfigParser, raw: str) -> None:
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]{_line_of(raw, section)}")
        for key in parser.options(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key} in [{section}]"
                                  f"{_line_of(raw, key)}")


def _build_field_map(sec: _Section, raw: str) -> FieldMap:
    has_rabi, has_b = sec.has("rabi_at_origin_khz"), sec.has("b_field_at_origin_ut")
    if has_rabi and has_b:
        raise ConfigError("[field] give rabi_at_origin_kHz or b_field_at_origin_uT, "
                          "not both")
    if has_b:
        constants = CONSTANTS
        g_s, g_i = sec.float("g_s"), sec.float("g_i")
        if g_s is not None or g_i is not None:
            from dataclasses import replace
            constants = replace(CONSTANTS,
                                g_S=g_s if g_s is not None else CONSTANTS.g_S,
                                g_I=g_i if g_i is not None else CONSTANTS.g_I)
        omega0 = rabi_from_B_field(sec.float("b_field_at_origin_ut", scale=1e-6),
                                   constants)
    else:
        if sec.has("g_s") or sec.has("g_i"):
            raise ConfigError("[field] g-factor overrides only apply to "
                              "b_field_at_origin_uT input")
        omega0 = sec.float("rabi_at_origin_khz", default=1.0,
                           scale=2.0 * math.pi * 1e3)
    static = sec.float("static_gradient_per_ms_mm", 0.0, scale=_PER_MS_MM)
    profile = sec.str("profile", "linear", choices={"linear", "inverse_r"})
    if profile == "inverse_r":
        if not sec.has("antenna_distance_cm"):
            raise ConfigError("[field] inverse_r profile needs antenna_distance_cm")
        if sec.has("gradient_per_ms_mm"):
            raise ConfigError("[field] inverse_r fixes the gradient at "
                              "-amplitude/antenna_distance; drop gradient_per_ms_mm"
                              + _line_of(raw, "gradient_per_ms_mm"))
        return FieldMap.inverse_r(reference_amplitude=omega0,
                                  antenna_distance=sec.float("antenna_distance_cm",
                                                             scale=1e-2),
                                  grad_omega12=static)
    gradient = sec.float("gradient_per_ms_mm", -1.74, scale=_PER_MS_MM)
    return FieldMap.linear(omega_drive_at_origin=omega0, grad_omega_drive=gradient,
                           grad_omega12=static)


def load_config(path, seed_override: int | None = None,
                out_override: str | None = None) -> RunConfig:
    """Parse, validate and convert one config file."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#",))
    try:
        parser.read_string(raw, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    _check_schema(parser, raw)

    def section(name: str) -> _Section:
        if not parser.has_section(name):
            parser.add_section(name)
        return _Section(parser, raw, name)

    run = section("run")
    kind = run.str("kind", choices=set(KINDS))
    out = out_override if out_override is not None else run.str("out")

    ens_sec = section("ensemble")
    seed = seed_override if seed_override is not None else ens_sec.int("seed", 1)
    try:
        ensemble = EnsembleConfig(
            temperature=ens_sec.float("temperature_uk", 43.0, scale=1e-6),
            cloud_width=ens_sec.float("cloud_width_mm", 1.1, scale=1e-3),
            n_atoms=ens_sec.int("n_atoms", 200_000),
            seed=seed)
        fmap = _build_field_map(section("field"), raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    sim = section("simulate")
    detuning = sim.float("detuning_hz", 0.0, scale=2.0 * math.pi)
    drive_frequency = fmap.omega12_at_origin + detuning

    img_sec = section("imaging")
    sigma_i = img_sec.float("sigma_i_um", 0.0, scale=1e-6)
    pixel = img_sec.float("pixel_um", 10.0, scale=1e-6)
    if sigma_i < 0.0 or pixel <= 0.0:
        raise ConfigError("[imaging] sigma_I_um must be >= 0 and pixel_um > 0")

    sweep = section("sweep")
    axis = sweep.str("axis", "temperature", choices={"temperature", "gradient"})
    axis_scale = 1e-6 if axis == "temperature" else _PER_MS_MM
    sweep_values = sweep.floats("values", scale=axis_scale)
    if kind == "sweep" and len(sweep_values) < 2:
        raise ConfigError("[sweep] needs at least two values")

    image = section("image")
    fid = section("fidelity")
    fid_values = fid.floats("values")
    if not fid_values:
        lo = fid.float("omega_tau_min", 0.05)
        hi = fid.float("omega_tau_max", 20.0)
        n = fid.int("n_points", 60)
        if not (0.0 < lo < hi) or n < 2:
            raise ConfigError("[fidelity] needs 0 < omega_tau_min < omega_tau_max "
                              "and n_points >= 2")
        fid_values = tuple(np.geomspace(lo, hi, n).tolist())
    elif any(v <= 0.0 for v in fid_values):
        raise ConfigError("[fidelity] values must be > 0")

    fit = section("fit")
    fit_input = fit.str("input")
    if kind == "fit" and fit_input is None:
        raise ConfigError("[fit] input CSV path is required for kind = fit")
    fit_tau_x_ms = fit.float("tau_x_ms")
    if fit_tau_x_ms is not None and fit_tau_x_ms <= 0.0:
        raise ConfigError("[fit] tau_x_ms must be > 0")

    n_samples = sim.int("n_samples", 60)
    min_bin = sim.int("min_bin_count", 100)
    strip = image.int("strip_pixels", 100)
    if n_samples < 2 or min_bin < 1 or strip < 1:
        raise ConfigError("sample, bin and strip counts must be positive")
    t_max = sim.float("t_max_ms", scale=1e-3)
    if t_max is not None and t_max <= 0.0:
        raise ConfigError("[simulate] t_max_ms must be > 0")

    cfg = RunConfig(
        kind=kind,
        out=out,
        ensemble=ensemble,
        fmap=fmap,
        drive_frequency=drive_frequency,
        sigma_i=sigma_i,
        pixel=pixel,
        t_max=t_max,
        n_samples=n_samples,
        x_probe=sim.float("x_probe_mm", 0.0, scale=1e-3),
        bin_width=sim.float("bin_width_um", 50.0, scale=1e-6),
        min_bin_count=min_bin,
        sweep_axis=axis,
        sweep_values=sweep_values,
        sweep_tolerance=sweep.float("tolerance", 0.10),
        image_time=image.float("time_ms", 3.5, scale=1e-3),
        strip_pixels=strip,
        image_half_width=image.float("half_width_mm", scale=1e-3),
        image_source=image.str("source", "closed_form",
                               choices={"closed_form", "monte_carlo"}),
        fidelity_values=fid_values,
        fit_input=fit_input,
        fit_model=fit.str("model", "quartic_t4",
                          choices={"quartic_t4", "gaussian_t2", "exponential_t",
                                   "free_exponent"}),
        fit_tau_x=math.inf if fit_tau_x_ms is None else fit_tau_x_ms * 1e-3,
        config_hash=hashlib.sha256(raw.encode()).hexdigest(),
    )
    object.__setattr__(cfg, "resolved", _resolve_manifest(cfg))
    return cfg


def _resolve_manifest(cfg: RunConfig) -> dict:
    """Flatten the SI-resolved config for the run manifest."""
    entries = {
        "version": VERSION,
        "config_sha256": cfg.config_hash,
        "run.kind": cfg.kind,
        "ensemble.temperature_K": cfg.ensemble.temperature,
        "ensemble.cloud_width_m": cfg.ensemble.cloud_width,
        "ensemble.n_atoms": cfg.ensemble.n_atoms,
        "ensemble.seed": cfg.ensemble.seed,
        "ensemble.mass_kg": cfg.ensemble.mass,
        "field.profile": cfg.fmap.profile_kind,
        "field.omega_drive_at_origin_rad_s": cfg.fmap.omega_drive_at_origin,
        "field.grad_omega_drive_rad_sm": cfg.fmap.grad_omega_drive,
        "field.grad_omega12_rad_sm": cfg.fmap.grad_omega12,
        "field.drive_frequency_rad_s": cfg.drive_frequency,
        "imaging.sigma_i_m": cfg.sigma_i,
        "imaging.pixel_m": cfg.pixel,
    }
    if cfg.fmap.antenna_distance is not None:
        entries["field.antenna_distance_m"] = cfg.fmap.antenna_distance
    if cfg.kind in SIMULATE_KINDS or cfg.kind == "sweep":
        entries.update({
            "simulate.t_max_s": "auto" if cfg.t_max is None else cfg.t_max,
            "simulate.n_samples": cfg.n_samples,
            "simulate.x_probe_m": cfg.x_probe,
            "simulate.bin_width_m": cfg.bin_width,
            "simulate.min_bin_count": cfg.min_bin_count,
        })
    if cfg.kind == "sweep":
        entries["sweep.axis"] = cfg.sweep_axis
        entries["sweep.values_si"] = ",".join(repr(v) for v in cfg.sweep_values)
        entries["sweep.tolerance"] = cfg.sweep_tolerance
    if cfg.kind == "image":
        entries.update({
            "image.time_s": cfg.image_time,
            "image.strip_pixels": cfg.strip_pixels,
            "image.half_width_m": cfg.image_half_width or "auto",
            "image.source": cfg.image_source,
        })
    if cfg.kind == "fidelity":
        entries["fidelity.n_points"] = len(cfg.fidelity_values)
    if cfg.kind == "fit":
        entries.update({
            "fit.input": cfg.fit_input,
            "fit.model": cfg.fit_model,
            "fit.tau_x_s": cfg.fit_tau_x,
        })
    return entries
