"""Command-line front end.

Verbs: simulate (rabi / ramsey / spin_echo time series), sweep
(temperature or gradient scan), image (synthetic frame + fringe fit),
fit (decay model on an external CSV), fidelity (pi/2 fidelity table).
Every run writes a manifest with the fully resolved SI config, the
code version, and the seed, so reruns are bit-exact.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 sweep
tolerance failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import SIMULATE_KINDS, VERSION, RunConfig, load_config
from .ensemble import (_resonant_angle, coherence_envelope, derive_seed,
                       sample_phase_space, sequence_population_closed_form,
                       simulate_local_population, tau_v_value)
from .errors import ConfigError
from .fields import LINEAR
from .fitting import (DecayFitResult, DecayModel, ModelKind, fit_decay,
                      pi_half_fidelity)
from .imaging import (ResolutionModel, convolve_profile, fit_spatial_fringes,
                      horizontal_strip, render_image, tau_x)
from .io import read_table, write_csv, write_manifest, write_pgm16

_VERB_KINDS = {
    "simulate": SIMULATE_KINDS,
    "sweep": ("sweep",),
    "image": ("image",),
    "fit": ("fit",),
    "fidelity": ("fidelity",),
}


def _theory_tau(delta_v: float, gradient: float, echo: bool = False) -> float:
    """Predicted coherence time; infinite when the mechanism is absent."""
    try:
        value = tau_v_value(delta_v, gradient)
    except ValueError:
        return math.inf
    return value * math.sqrt(2.0) if echo else value


def _time_grid(cfg: RunConfig, tau_theory: float) -> np.ndarray:
    if cfg.t_max is not None:
        t_max = cfg.t_max
    elif math.isfinite(tau_theory):
        t_max = 2.5 * tau_theory
    else:
        t_max = 0.01
    return np.linspace(0.0, t_max, cfg.n_samples)


def _fit_series(t: np.ndarray, y: np.ndarray, model: DecayModel,
                hold: dict | None) -> tuple[DecayFitResult | None, str]:
    valid = np.isfinite(y)
    if np.count_nonzero(valid) < 8:
        return None, "too few valid samples to fit"
    try:
        return fit_decay(t[valid], y[valid], model=model, hold=hold), ""
    except (ValueError, RuntimeError) as exc:
        return None, str(exc)


def _imaged_series(cfg: RunConfig, grid: np.ndarray):
    """Blurred excited fraction at the probe pixel for each drive time."""
    ens, fmap = cfg.ensemble, cfg.fmap
    atoms = sample_phase_space(ens)
    half = 4.0 * ens.width_at(grid[-1]) + 6.0 * cfg.sigma_i + abs(cfg.x_probe)
    npix = int(math.ceil(half / cfg.pixel))
    xs = np.arange(-npix, npix + 1) * cfg.pixel
    edges = np.concatenate([xs - 0.5 * cfg.pixel, [xs[-1] + 0.5 * cfg.pixel]])
    probe = int(np.argmin(np.abs(xs - cfg.x_probe)))
    res = ResolutionModel(cfg.sigma_i)
    ratio = np.empty(grid.size)
    counts = np.empty(grid.size, dtype=int)
    for i, t in enumerate(grid):
        theta = _resonant_angle(atoms.x0, atoms.v, fmap, 0.0, float(t))
        excited = np.sin(0.5 * theta) ** 2
        x_t = atoms.x0 + atoms.v * t
        n2, _ = np.histogram(x_t, bins=edges, weights=excited)
        n_tot, _ = np.histogram(x_t, bins=edges)
        blurred2 = convolve_profile(xs, n2, res)
        blurred_tot = convolve_profile(xs, n_tot.astype(float), res)
        ratio[i] = blurred2[probe] / blurred_tot[probe] \
            if blurred_tot[probe] > 0.0 else float("nan")
        counts[i] = int(n_tot[probe])
    return ratio, counts


def run_simulate(cfg: RunConfig, out: Path) -> int:
    ens, fmap, kind = cfg.ensemble, cfg.fmap, cfg.kind
    detuned = cfg.drive_frequency != fmap.omega12_at_origin
    imaging = cfg.sigma_i > 0.0
    if imaging and (kind != "rabi" or detuned):
        raise ConfigError("imaging applies to resonant rabi runs only")
    echo = kind == "spin_echo"
    gradient = fmap.drive_gradient(cfg.x_probe) if kind == "rabi" \
        else fmap.grad_omega12
    tau_theory = _theory_tau(ens.delta_v, gradient, echo=echo)
    grid = _time_grid(cfg, tau_theory)

    envelope = coherence_envelope(ens, gradient, grid, echo=echo)
    if kind == "rabi" and detuned:
        population = np.full(grid.size, float("nan"))  # no closed form off resonance
    else:
        population = np.asarray(sequence_population_closed_form(
            ens, fmap, cfg.x_probe, grid, kind, drive_frequency=cfg.drive_frequency))

    tau_x_theory = None
    if imaging:
        tau_x_theory = tau_x(cfg.sigma_i, fmap.drive_gradient(cfg.x_probe))
        attenuation = np.exp(-(grid / tau_x_theory) ** 2)
        envelope = envelope * attenuation
        population = 0.5 + (population - 0.5) * attenuation
        mc, counts = _imaged_series(cfg, grid)
    else:
        records = simulate_local_population(
            ens, fmap, kind, grid, x_probe=cfg.x_probe, bin_width=cfg.bin_width,
            drive_frequency=cfg.drive_frequency, min_bin_count=cfg.min_bin_count)
        mc = np.array([r.rho22 for r in records])
        counts = np.array([r.count for r in records])

    hold = {"omega": 0.0, "phi": 0.0} \
        if kind in ("ramsey", "spin_echo") and not detuned else None
    model = DecayModel(ModelKind.QUARTIC_T4, delta_v=ens.delta_v,
                       delta_x=ens.cloud_width,
                       tau_x=tau_x_theory if imaging else math.inf)
    fit, fit_note = (None, "undamped series, nothing to fit") \
        if not math.isfinite(tau_theory) else _fit_series(grid, mc, model, hold)

    write_csv(out / "series.csv", {
        "t_s": grid, "population": population, "envelope_analytic": envelope,
        "mc_population": mc, "bin_count": counts})
    summary = {
        "kind": kind,
        "tau_v_theory_s": tau_theory if math.isfinite(tau_theory) else "infinite",
    }
    if imaging:
        summary["tau_x_s"] = tau_x_theory
    if fit is not None:
        summary.update({
            "tau_fit_s": fit.params["tau"],
            "tau_fit_stderr_s": fit.stderr.get("tau", float("nan")),
            "omega_fit_rad_s": fit.params["omega"],
            "r_squared": fit.r_squared,
            "fit_converged": fit.converged,
        })
    else:
        summary["fit_skipped"] = fit_note
    write_manifest(out / "summary.txt", summary)
    write_manifest(out / "manifest.txt", {**cfg.resolved,
                                          "out.series": "series.csv",
                                          "out.summary": "summary.txt"})
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0


def _sweep_point(cfg: RunConfig, index: int, value: float):
    ens = replace(cfg.ensemble, seed=derive_seed(cfg.ensemble.seed, index))
    fmap = cfg.fmap
    if cfg.sweep_axis == "temperature":
        ens = replace(ens, temperature=value)
    else:
        fmap = replace(fmap, grad_omega_drive=value)
    tau_theory = _theory_tau(ens.delta_v, fmap.drive_gradient(cfg.x_probe))
    if not math.isfinite(tau_theory):
        return value, float("nan"), float("nan"), tau_theory, "undamped point"
    grid = _time_grid(cfg, tau_theory)
    records = simulate_local_population(
        ens, fmap, "rabi", grid, x_probe=cfg.x_probe, bin_width=cfg.bin_width,
        drive_frequency=cfg.drive_frequency, min_bin_count=cfg.min_bin_count)
    mc = np.array([r.rho22 for r in records])
    model = DecayModel(ModelKind.QUARTIC_T4, delta_v=ens.delta_v,
                       delta_x=ens.cloud_width)
    fit, note = _fit_series(grid, mc, model, hold=None)
    if fit is None:
        return value, float("nan"), float("nan"), tau_theory, note
    if not fit.converged:
        note = "fit did not converge"
    return value, fit.params["tau"], fit.stderr.get("tau", float("nan")), \
        tau_theory, note


def run_sweep(cfg: RunConfig, out: Path, workers: int) -> int:
    if cfg.sweep_axis == "gradient" and cfg.fmap.profile_kind != LINEAR:
        raise ConfigError("gradient sweeps need the linear field profile")
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        rows = list(pool.map(lambda iv: _sweep_point(cfg, *iv),
                             enumerate(cfg.sweep_values)))

    axis_name = "temperature_K" if cfg.sweep_axis == "temperature" \
        else "gradient_rad_sm"
    values = np.array([r[0] for r in rows])
    fitted = np.array([r[1] for r in rows])
    theory = np.array([r[3] for r in rows])
    rel_err = np.abs(fitted - theory) / theory
    write_csv(out / "sweep.csv", {
        axis_name: values, "tau_v_fit_s": fitted,
        "tau_v_fit_stderr_s": np.array([r[2] for r in rows]),
        "tau_v_theory_s": theory, "rel_error": rel_err})

    ok = np.isfinite(rel_err)
    summary = {"axis": cfg.sweep_axis, "points": len(rows),
               "failed_points": int(np.count_nonzero(~ok))}
    for row in rows:
        if row[4]:
            summary[f"note_{row[0]:g}"] = row[4]
    if np.count_nonzero(ok) >= 2:
        # power-law check: straight line in log-log coordinates
        slope, intercept = np.polyfit(np.log(values[ok]), np.log(fitted[ok]), 1)
        summary["log_log_slope"] = float(slope)
    tolerance_met = bool(ok.all() and (rel_err <= cfg.sweep_tolerance).all())
    summary["tolerance"] = cfg.sweep_tolerance
    summary["within_tolerance"] = tolerance_met
    write_manifest(out / "summary.txt", summary)
    write_manifest(out / "manifest.txt", {**cfg.resolved, "sweep.workers": workers,
                                          "out.table": "sweep.csv"})
    for key, value in summary.items():
        print(f"{key} = {value}")
    return 0 if tolerance_met else 3


def run_image(cfg: RunConfig, out: Path) -> int:
    resolution = ResolutionModel(cfg.sigma_i)
    image = render_image(cfg.ensemble, cfg.fmap, cfg.image_time,
                         resolution=resolution, pixel_pitch=cfg.pixel,
                         half_width=cfg.image_half_width,
                         source=cfg.image_source)
    scale = write_pgm16(out / "image.pgm", image.grid)
    write_manifest(out / "image.meta", {
        "pixel_pitch_m": image.pixel_pitch,
        "origin_x_m": image.origin[0], "origin_y_m": image.origin[1],
        "time_s": cfg.image_time, "counts_per_density": scale,
        "config_sha256": cfg.config_hash, "version": VERSION})

    x, profile = horizontal_strip(image, cfg.strip_pixels)
    write_csv(out / "profile.csv", {"x_m": x, "density": profile})
    fringes = fit_spatial_fringes(x, profile)
    # the fit only sees |k|; the sign of the gradient comes from the config
    sign = 1.0 if cfg.fmap.grad_omega_drive >= 0.0 else -1.0
    gradient = sign * fringes.k / cfg.image_time
    record = {
        "k_rad_m": fringes.k, "k_stderr_rad_m": fringes.stderr["k"],
        "fringe_period_m": 2.0 * math.pi / fringes.k if fringes.k else math.inf,
        "gradient_rad_sm": gradient,
        "gradient_stderr_rad_sm": fringes.stderr["k"] / cfg.image_time,
        "visibility": fringes.visibility,
        "visibility_stderr": fringes.stderr["visibility"],
        "phase_rad": fringes.phase, "phase_stderr_rad": fringes.stderr["phi"],
        "r_squared": fringes.r_squared, "converged": fringes.converged,
        "low_confidence": fringes.low_confidence,
        "unconstrained_phase": fringes.unconstrained_phase,
    }
    write_manifest(out / "fringes.txt", record)
    write_manifest(out / "manifest.txt", {**cfg.resolved, "out.image": "image.pgm",
                                          "out.fringes": "fringes.txt",
                                          "out.profile": "profile.csv"})
    for key, value in record.items():
        print(f"{key} = {value}")
    return 0 if fringes.converged else 2


def run_fit(cfg: RunConfig, out: Path) -> int:
    table = read_table(cfg.fit_input)
    try:
        t, y = table["t_s"], table["population"]
    except KeyError:
        raise ConfigError(f"{cfg.fit_input}: need t_s and population columns, "
                          f"found {sorted(table)}") from None
    sigma = table.get("sigma")
    model = DecayModel(ModelKind(cfg.fit_model), delta_v=cfg.ensemble.delta_v,
                       delta_x=cfg.ensemble.cloud_width, tau_x=cfg.fit_tau_x)
    result = fit_decay(t, y, model=model, sigma=sigma)
    record = {"model": cfg.fit_model, "n_points": result.n_points}
    for name in model.param_names:
        record[name] = result.params[name]
        record[f"{name}_stderr"] = result.stderr.get(name, float("nan"))
    record.update({"r_squared": result.r_squared,
                   "reduced_chi_square": result.reduced_chi_square,
                   "converged": result.converged,
                   "iterations": result.iterations})
    write_manifest(out / "fit.txt", record)
    write_csv(out / "residuals.csv", {
        "t_s": np.asarray(t), "population": np.asarray(y),
        "model": result.predict(t),
        "residual": np.asarray(y) - result.predict(t)})
    write_manifest(out / "manifest.txt", {**cfg.resolved, "out.fit": "fit.txt",
                                          "out.residuals": "residuals.csv"})
    for key, value in record.items():
        print(f"{key} = {value}")
    return 0 if result.converged else 2


def run_fidelity(cfg: RunConfig, out: Path) -> int:
    values = np.array(cfg.fidelity_values, dtype=float)
    table = pi_half_fidelity(values, 1.0)  # omega0 tau_v is one dimensionless knob
    write_csv(out / "fidelity.csv", {"omega0_tau_v": values, "fidelity": table})
    write_manifest(out / "manifest.txt", {**cfg.resolved,
                                          "out.table": "fidelity.csv"})
    print(f"points = {values.size}")
    print(f"fidelity_range = [{table.min()}, {table.max()}]")
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors, which is reserved for
    # numerical failures here; route them through the config-error path
    def error(self, message):
        raise ConfigError(message)


def main(argv=None) -> int:
    parser = _Parser(prog="rabidamp",
                     description="Two-level ensemble dynamics in gradient fields: "
                                 "simulate, sweep, image, fit, fidelity.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in _VERB_KINDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="INI config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="concurrent sweep points")
        p.add_argument("--seed", type=int, default=None, help="override the seed")

    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, seed_override=args.seed,
                          out_override=args.out)
        if cfg.kind not in _VERB_KINDS[args.verb]:
            raise ConfigError(f"kind = {cfg.kind} does not belong to the "
                              f"{args.verb} verb")
        out = Path(cfg.out) if cfg.out else Path(f"rabidamp_{cfg.kind}")
        out.mkdir(parents=True, exist_ok=True)
        if args.verb == "simulate":
            return run_simulate(cfg, out)
        if args.verb == "sweep":
            return run_sweep(cfg, out, args.workers)
        if args.verb == "image":
            return run_image(cfg, out)
        if args.verb == "fit":
            return run_fit(cfg, out)
        return run_fidelity(cfg, out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
