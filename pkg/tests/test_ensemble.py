import math

import numpy as np
import pytest

from rabidamp import (
    EnsembleConfig,
    FieldMap,
    PulseSequence,
    Segment,
    SegmentKind,
    Trajectory,
    coherence_envelope,
    derive_seed,
    gaussian_density,
    local_population_closed_form,
    rho11_closed_form,
    rho12_closed_form,
    rho22_closed_form,
    sample_phase_space,
    sequence_population_closed_form,
    simulate_local_population,
    tau_v,
    tau_v_value,
)


class TestSampling:
    def test_frozen_cloud_has_zero_velocity(self):
        cfg = EnsembleConfig(temperature=0.0, cloud_width=1e-3,
                             n_atoms=1000, seed=7)
        sample = sample_phase_space(cfg)
        assert np.all(sample.v == 0.0)
        assert np.std(sample.x0) == pytest.approx(1e-3, rel=0.1)

    def test_velocity_spread_matches_temperature(self):
        cfg = EnsembleConfig(temperature=43e-6, cloud_width=1.1e-3,
                             n_atoms=100_000, seed=3)
        sample = sample_phase_space(cfg)
        dv = cfg.delta_v
        assert dv == pytest.approx(0.0641, rel=1e-2)
        # sampling error of the std is dv/sqrt(2N)
        se = dv / math.sqrt(2 * cfg.n_atoms)
        assert abs(np.std(sample.v) - dv) < 3 * se
        assert abs(np.mean(sample.v)) < 3 * dv / math.sqrt(cfg.n_atoms)

    def test_same_seed_reproduces_bitwise(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 5000, seed=99)
        s1, s2 = sample_phase_space(cfg), sample_phase_space(cfg)
        assert np.array_equal(s1.x0, s2.x0)
        assert np.array_equal(s1.v, s2.v)

    def test_different_seed_differs(self):
        a = sample_phase_space(EnsembleConfig(43e-6, 1.1e-3, 100, seed=1))
        b = sample_phase_space(EnsembleConfig(43e-6, 1.1e-3, 100, seed=2))
        assert not np.array_equal(a.v, b.v)

    def test_atom_draws_independent_of_ensemble_size(self):
        # counter-based generator: atom i is the same draw for any n >= i
        small = sample_phase_space(EnsembleConfig(43e-6, 1.1e-3, 100, seed=5))
        large = sample_phase_space(EnsembleConfig(43e-6, 1.1e-3, 10_000, seed=5))
        assert np.array_equal(small.x0, large.x0[:100])
        assert np.array_equal(small.v, large.v[:100])

    def test_sample_iterates_as_trajectories(self):
        sample = sample_phase_space(EnsembleConfig(43e-6, 1.1e-3, 3, seed=11))
        assert len(sample) == 3
        records = list(sample)
        assert all(isinstance(r, Trajectory) for r in records)
        assert records[1].x0 == sample.x0[1]

    def test_validation(self):
        with pytest.raises(ValueError):
            EnsembleConfig(-1e-6, 1e-3, 10, 1)
        with pytest.raises(ValueError):
            EnsembleConfig(1e-6, 0.0, 10, 1)
        with pytest.raises(ValueError):
            EnsembleConfig(1e-6, 1e-3, 0, 1)
        with pytest.raises(ValueError):
            EnsembleConfig(1e-6, 1e-3, 10, -1)


class TestDerivedSeeds:
    def test_deterministic(self):
        assert derive_seed(42, 7) == derive_seed(42, 7)

    def test_collision_free_over_small_range(self):
        seeds = {derive_seed(1, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_stays_in_64_bits(self):
        for i in (0, 1, 500, 10 ** 6):
            assert 0 <= derive_seed(2 ** 63, i) < 2 ** 64

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            derive_seed(-1, 0)
        with pytest.raises(ValueError):
            derive_seed(1, -2)


class TestBallisticExpansion:
    def test_alpha_starts_at_one(self, warm_cloud):
        assert warm_cloud.alpha(0.0) == 1.0

    def test_alpha_identity(self, warm_cloud):
        t = 4e-3
        lhs = warm_cloud.alpha(t) ** 2 - 1.0
        rhs = (warm_cloud.delta_v * t / warm_cloud.cloud_width) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_phase_space_area_conserved(self, warm_cloud):
        for t in (0.0, 1e-3, 5e-3, 50e-3):
            area = warm_cloud.width_at(t) * warm_cloud.velocity_width_at(t)
            assert area == pytest.approx(
                warm_cloud.cloud_width * warm_cloud.delta_v, rel=1e-14)

    def test_width_approaches_ballistic_cone(self, warm_cloud):
        t = 1e3 * warm_cloud.cloud_width / warm_cloud.delta_v
        assert warm_cloud.width_at(t) == pytest.approx(
            warm_cloud.delta_v * t, rel=1e-5)


class TestCoherenceTime:
    def test_reference_cloud_value(self, warm_cloud):
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        assert tau_v(warm_cloud, fm) == pytest.approx(5.03e-3, rel=1e-3)

    def test_value_helper_agrees(self, warm_cloud):
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        assert tau_v(warm_cloud, fm) == tau_v_value(warm_cloud.delta_v, -1.74e6)

    def test_colder_cloud_value(self):
        cold = EnsembleConfig(8e-6, 1.1e-3, 1000, 1)
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        assert tau_v(cold, fm) == pytest.approx(7.665e-3, rel=1e-3)

    def test_quarter_power_temperature_scaling(self, warm_cloud):
        cold = EnsembleConfig(8e-6, 1.1e-3, 1000, 1)
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        assert tau_v(cold, fm) / tau_v(warm_cloud, fm) == pytest.approx(
            (43.0 / 8.0) ** 0.25, rel=1e-12)

    def test_product_invariant_over_grid(self):
        for dv in (0.01, 0.064, 0.3):
            for g in (2e5, 1.74e6, 9e6):
                prod = tau_v_value(dv, g) * math.sqrt(dv * g)
                assert prod == pytest.approx(8.0 ** 0.25, rel=1e-12)

    def test_quadrupled_gradient_halves_tau(self):
        assert tau_v_value(0.064, 4 * 1.74e6) == pytest.approx(
            0.5 * tau_v_value(0.064, 1.74e6), rel=1e-12)

    def test_sign_of_gradient_irrelevant(self):
        assert tau_v_value(0.064, -1.74e6) == tau_v_value(0.064, 1.74e6)

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(ValueError):
            tau_v_value(0.0, 1e6)
        with pytest.raises(ValueError):
            tau_v_value(0.064, 0.0)
        frozen = EnsembleConfig(0.0, 1.1e-3, 10, 1)
        with pytest.raises(ValueError):
            tau_v(frozen, FieldMap.linear(1e4, 1e6))


class TestEnvelope:
    def test_unit_value_at_tau_v(self, warm_cloud):
        g = 1.74e6
        t = tau_v_value(warm_cloud.delta_v, g)
        env = coherence_envelope(warm_cloud, g, t)
        # exponent is exactly 1/alpha^2 at t = tau_v
        assert env == pytest.approx(
            math.exp(-1.0 / warm_cloud.alpha(t) ** 2), rel=1e-12)
        assert env == pytest.approx(0.398, abs=5e-3)

    def test_echo_coefficient_is_quarter(self, warm_cloud):
        g, t = 1.74e6, 3e-3
        plain = coherence_envelope(warm_cloud, g, t)
        echo = coherence_envelope(warm_cloud, g, t, echo=True)
        assert math.log(echo) == pytest.approx(0.25 * math.log(plain), rel=1e-12)

    def test_echo_buys_sqrt_two_in_time(self):
        # with negligible expansion the echo curve is the plain curve
        # stretched by sqrt(2)
        cfg = EnsembleConfig(43e-6, 10.0, 10, 1)
        g, t = 1.74e6, 4e-3
        assert coherence_envelope(cfg, g, math.sqrt(2) * t, echo=True) == \
            pytest.approx(coherence_envelope(cfg, g, t), rel=1e-9)

    def test_quartic_exponent_slope(self):
        cfg = EnsembleConfig(43e-6, 1.0, 10, 1)  # huge cloud: alpha ~ 1
        g = 1.74e6
        tau = tau_v_value(cfg.delta_v, g)
        t = np.geomspace(0.3 * tau, 1.2 * tau, 40)
        env = coherence_envelope(cfg, g, t)
        slope = np.polyfit(np.log(t), np.log(-np.log(env)), 1)[0]
        assert slope == pytest.approx(4.00, abs=0.05)


class TestClosedForms:
    def test_population_at_origin(self, warm_cloud):
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        t = 1.3e-3
        env = coherence_envelope(warm_cloud, -1.74e6, t)
        expect = 0.5 * (1.0 - math.cos(2 * math.pi * 1e3 * t) * env)
        assert local_population_closed_form(warm_cloud, fm, 0.0, t) == \
            pytest.approx(expect, rel=1e-12)

    def test_population_after_one_drive_period(self, warm_cloud):
        # cos term returns to +1, leaving half the envelope deficit
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        value = local_population_closed_form(warm_cloud, fm, 0.0, 1e-3)
        assert value == pytest.approx(7.75e-4, rel=2e-3)

    def test_off_center_frequency_shift(self, warm_cloud):
        # at finite x the apparent frequency is pulled by the expansion
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        x, t = 0.8e-3, 2e-3
        shift = (0.5 * x * (-1.74e6) * warm_cloud.delta_v ** 2 * t ** 2
                 / warm_cloud.width_at(t) ** 2)
        env = coherence_envelope(warm_cloud, -1.74e6, t)
        expect = 0.5 * (1.0 - math.cos((fm.drive(x) - shift) * t) * env)
        assert local_population_closed_form(warm_cloud, fm, x, t) == \
            pytest.approx(expect, rel=1e-12)

    def test_joint_densities_sum_to_cloud_profile(self, warm_cloud):
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        t = 2e-3
        x = np.linspace(-8 * warm_cloud.width_at(t), 8 * warm_cloud.width_at(t),
                        4001)
        total = (rho11_closed_form(warm_cloud, fm, x, t)
                 + rho22_closed_form(warm_cloud, fm, x, t))
        assert total == pytest.approx(gaussian_density(warm_cloud, x, t),
                                      rel=1e-14)
        assert np.trapezoid(total, x) == pytest.approx(1.0, abs=1e-6)

    def test_coherence_magnitude_tracks_envelope(self, warm_cloud):
        fm = FieldMap.linear(0.0, 0.0, omega12_at_origin=1e4, grad_omega12=1e6)
        t = 2.5e-3
        for x in (-1e-3, 0.0, 0.7e-3):
            c = rho12_closed_form(warm_cloud, fm, x, t)
            ratio = abs(c) / gaussian_density(warm_cloud, x, t)
            assert ratio == pytest.approx(
                coherence_envelope(warm_cloud, 1e6, t), rel=1e-12)

    def test_echo_coherence_position_independent(self, warm_cloud):
        fm = FieldMap.linear(0.0, 0.0, omega12_at_origin=1e4, grad_omega12=1e6)
        t = 3e-3
        vals = [rho12_closed_form(warm_cloud, fm, x, t, echo=True)
                / gaussian_density(warm_cloud, x, t)
                for x in (-1.2e-3, 0.0, 1.2e-3)]
        assert vals[0] == pytest.approx(vals[1], rel=1e-12)
        assert vals[1] == pytest.approx(vals[2], rel=1e-12)
        assert complex(vals[1]).imag == pytest.approx(0.0, abs=1e-15)

    def test_named_sequence_wrappers(self, warm_cloud):
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6,
                             omega12_at_origin=1e4, grad_omega12=1e6)
        t = 2e-3
        assert sequence_population_closed_form(warm_cloud, fm, 0.3e-3, t, "rabi") == \
            local_population_closed_form(warm_cloud, fm, 0.3e-3, t)
        echo = sequence_population_closed_form(warm_cloud, fm, 0.0, t, "spin_echo")
        assert echo == pytest.approx(
            0.5 * (1.0 - coherence_envelope(warm_cloud, 1e6, t, echo=True)),
            rel=1e-12)
        # resonant at the origin: the fringe term reduces to the envelope
        ram = sequence_population_closed_form(warm_cloud, fm, 0.0, t, "ramsey")
        assert ram == pytest.approx(
            0.5 * (1.0 + coherence_envelope(warm_cloud, 1e6, t)), rel=1e-12)
        with pytest.raises(ValueError):
            sequence_population_closed_form(warm_cloud, fm, 0.0, t, "carr_purcell")


class TestMonteCarlo:
    def test_uniform_drive_is_undamped(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 2000, seed=4)
        fm = FieldMap.linear(2 * math.pi * 1e3, 0.0)
        t_grid = [0.25e-3, 0.5e-3, 1.7e-3]
        out = simulate_local_population(cfg, fm, "rabi", t_grid,
                                        bin_width=20e-3, min_bin_count=10)
        for rec, t in zip(out, t_grid):
            assert rec.valid
            assert rec.rho22 == pytest.approx(
                math.sin(math.pi * 1e3 * t) ** 2, abs=1e-12)

    def test_damped_drive_matches_closed_form(self, warm_cloud):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 50_000, seed=21)
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        tau = tau_v(cfg, fm)
        t_grid = np.linspace(0.1 * tau, 2.0 * tau, 8)
        out = simulate_local_population(cfg, fm, "rabi", t_grid)
        for rec, t in zip(out, t_grid):
            assert rec.valid
            expect = local_population_closed_form(cfg, fm, 0.0, t)
            assert abs(rec.rho22 - expect) < 4.0 / math.sqrt(rec.count)

    def test_ramsey_matches_closed_form(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 50_000, seed=8)
        fm = FieldMap.linear(0.0, 0.0, omega12_at_origin=1e4, grad_omega12=1e6)
        t_grid = [1e-3, 2.5e-3, 4e-3]
        out = simulate_local_population(cfg, fm, "ramsey", t_grid)
        for rec, t in zip(out, t_grid):
            expect = sequence_population_closed_form(cfg, fm, 0.0, t, "ramsey")
            assert abs(rec.rho22 - expect) < 4.0 / math.sqrt(rec.count)

    def test_free_interval_coherence_matches_closed_form(self):
        # stop before the closing pi/2 so the coherence is still on the
        # equator; the pulse leaves it at -i/2 times the damping factor
        cfg = EnsembleConfig(43e-6, 1.1e-3, 50_000, seed=13)
        fm = FieldMap.linear(0.0, 0.0, omega12_at_origin=1e4, grad_omega12=1e6)
        t = 2e-3
        half_open = lambda tt: PulseSequence((Segment(SegmentKind.PI_HALF),
                                              Segment(SegmentKind.FREE, tt)))
        rec = simulate_local_population(cfg, fm, half_open, [t])[0]
        factor = (rho12_closed_form(cfg, fm, 0.0, t)
                  / gaussian_density(cfg, 0.0, t))
        assert abs(rec.rho12 - (-0.5j) * factor) < 4.0 / math.sqrt(rec.count)
        assert 2 * abs(rec.rho12) == pytest.approx(
            coherence_envelope(cfg, 1e6, t), abs=4.0 / math.sqrt(rec.count))

    def test_echo_population_position_independent(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 60_000, seed=17)
        fm = FieldMap.linear(0.0, 0.0, omega12_at_origin=1e4, grad_omega12=1e6)
        t = 3e-3
        expect = sequence_population_closed_form(cfg, fm, 0.0, t, "spin_echo")
        w = cfg.width_at(t)
        for probe in (-1.2 * w, 0.0, 1.2 * w):
            rec = simulate_local_population(cfg, fm, "spin_echo", [t],
                                            x_probe=probe,
                                            bin_width=0.3e-3,
                                            min_bin_count=50)[0]
            assert rec.valid
            assert abs(rec.rho22 - expect) < 4.0 / math.sqrt(rec.count)

    def test_detuned_uniform_drive_generalized_rabi(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 400, seed=6)
        omega0, delta = 2 * math.pi * 1e3, 2.0e3
        fm = FieldMap.linear(omega0, 0.0, omega12_at_origin=1.0e4)
        t = 1e-3
        rec = simulate_local_population(cfg, fm, "rabi", [t],
                                        bin_width=20e-3, min_bin_count=10,
                                        drive_frequency=1.0e4 + delta)[0]
        gen = math.hypot(omega0, delta)
        expect = (omega0 / gen) ** 2 * math.sin(0.5 * gen * t) ** 2
        assert rec.rho22 == pytest.approx(expect, abs=1e-6)

    def test_underfilled_bin_flagged(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 5000, seed=9)
        fm = FieldMap.linear(2 * math.pi * 1e3, -1.74e6)
        rec = simulate_local_population(cfg, fm, "rabi", [1e-3],
                                        x_probe=8e-3)[0]
        assert not rec.valid
        assert math.isnan(rec.rho22)
        assert rec.count < 100

    def test_fixed_sequence_requires_matching_time(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 200, seed=2)
        fm = FieldMap.linear(2 * math.pi * 1e3, 0.0)
        seq = PulseSequence.rabi(1e-3)
        out = simulate_local_population(cfg, fm, seq, [1e-3],
                                        bin_width=20e-3, min_bin_count=10)
        assert out[0].valid
        with pytest.raises(ValueError):
            simulate_local_population(cfg, fm, seq, [2e-3],
                                      bin_width=20e-3, min_bin_count=10)

    def test_unknown_sequence_name(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 200, seed=2)
        fm = FieldMap.linear(2 * math.pi * 1e3, 0.0)
        with pytest.raises(ValueError):
            simulate_local_population(cfg, fm, "hahn", [1e-3])

    def test_bad_bin_width_rejected(self):
        cfg = EnsembleConfig(43e-6, 1.1e-3, 200, seed=2)
        fm = FieldMap.linear(2 * math.pi * 1e3, 0.0)
        with pytest.raises(ValueError):
            simulate_local_population(cfg, fm, "rabi", [1e-3], bin_width=0.0)
