import numpy as np
import pytest

from qdcascade.cascade import (
    DetectorParams,
    cascade_decay_curve,
    rabi_population,
    reference_emitter,
)
from qdcascade.correlate import CoincidenceHistogram
from qdcascade.fitting import (
    SpectrumSeries,
    ensemble_yield,
    fit_decay,
    fit_fss,
    fit_lorentzian,
    fit_rabi,
    folded_normal_parameters,
    levenberg_marquardt,
    lorentzian_halfwidth_uev,
    sample_stats,
)
from qdcascade.fitting import _decay_model

REP = 13157.9


def decay_histogram(species, t1_xx=112.0, t1_x=134.0, fwhm=100.0, amplitude=2e6,
                    floor=5.0, t0=800.0, bin_width=10.0, rng=None):
    from qdcascade.cascade import EmitterParams

    emitter = EmitterParams(fss_uev=0.0, t1_xx_ps=t1_xx, t1_x_ps=t1_x, k=1.0)
    det = DetectorParams(irf_fwhm_ps=fwhm)
    t = np.arange(0.0, REP, bin_width)
    curve = amplitude * bin_width * cascade_decay_curve(
        t + bin_width / 2 - t0, emitter, det, species
    ) + floor
    counts = curve if rng is None else rng.poisson(curve)
    return CoincidenceHistogram(
        bin_width_ps=bin_width, origin_ps=0.0, counts=np.rint(counts).astype(np.int64)
    )


class TestFitDecay:
    def test_noiseless_xx_recovery(self):
        hist = decay_histogram("XX")
        result = fit_decay(hist, 100.0, species="XX")
        assert result.converged
        assert result.params["t1_xx_ps"] == pytest.approx(112.0, rel=0.005)

    def test_noiseless_x_recovery(self):
        hist = decay_histogram("X")
        result = fit_decay(hist, 100.0, species="X")
        assert result.params["t1_xx_ps"] == pytest.approx(112.0, rel=0.005)
        assert result.params["t1_x_ps"] == pytest.approx(134.0, rel=0.005)

    def test_poisson_noise_recovery_within_5_percent(self, rng):
        hist = decay_histogram("X", amplitude=1e5, rng=rng)
        result = fit_decay(hist, 100.0, species="X")
        assert result.params["t1_x_ps"] == pytest.approx(134.0, rel=0.05)

    def test_no_irf_matches_log_slope(self, rng):
        hist = decay_histogram("XX", fwhm=0.0, floor=0.0)
        result = fit_decay(hist, 0.0, species="XX")
        # closed-form slope of log counts on the pure-exponential tail
        t = hist.delay_centers()
        window = (t > 1000.0) & (t < 2200.0) & (hist.counts > 0)
        slope = np.polyfit(t[window], np.log(hist.counts[window]), 1)[0]
        assert result.params["t1_xx_ps"] == pytest.approx(-1.0 / slope, rel=1e-3)

    def test_amplitude_rescaling_invariance(self):
        a = fit_decay(decay_histogram("XX", amplitude=4e5), 100.0, "XX")
        b = fit_decay(decay_histogram("XX", amplitude=4e6), 100.0, "XX")
        assert a.params["t1_xx_ps"] == pytest.approx(b.params["t1_xx_ps"], rel=1e-3)

    def test_refit_is_fixed_point(self):
        hist = decay_histogram("XX")
        first = fit_decay(hist, 100.0, "XX")
        again = fit_decay(hist, 100.0, "XX")
        for key in first.params:
            assert first.params[key] == pytest.approx(again.params[key], abs=1e-8)

    def test_too_few_bins_rejected(self):
        hist = CoincidenceHistogram(bin_width_ps=10.0, origin_ps=0.0, counts=np.ones(5, dtype=np.int64))
        with pytest.raises(ValueError, match="bins"):
            fit_decay(hist, 100.0, "XX")

    def test_jacobian_matches_finite_differences(self, rng):
        t = np.linspace(0.0, 3000.0, 400)
        for species, n_params in (("XX", 4), ("X", 5)):
            for _ in range(50):
                if species == "XX":
                    p = np.array([rng.uniform(1e3, 1e6), rng.uniform(200, 900),
                                  rng.uniform(60, 300), rng.uniform(0, 20)])
                else:
                    p = np.array([rng.uniform(1e3, 1e6), rng.uniform(200, 900),
                                  rng.uniform(60, 200), rng.uniform(210, 400), rng.uniform(0, 20)])
                _, jac = _decay_model(t, p, 42.0, species)
                for idx in range(n_params):
                    eps = max(1e-7 * abs(p[idx]), 1e-7)
                    up, dn = p.copy(), p.copy()
                    up[idx] += eps
                    dn[idx] -= eps
                    numeric = (_decay_model(t, up, 42.0, species)[0]
                               - _decay_model(t, dn, 42.0, species)[0]) / (2 * eps)
                    scale = np.max(np.abs(jac[:, idx])) + 1e-12
                    np.testing.assert_allclose(jac[:, idx] / scale, numeric / scale, atol=1e-6)


class TestFitRabi:
    def make_data(self, gamma=0.0, scale=2.7, amplitude=1.0, noise=0.0, rng=None, n=80):
        x = np.linspace(0.05, 7.6 / scale, n)
        y = amplitude * rabi_population(scale * x * np.pi, gamma) if False else None
        # the abscissa is "area in arbitrary units": theta = scale * x
        y = amplitude * rabi_population(scale * x, gamma)
        if noise and rng is not None:
            y = y + rng.normal(0.0, noise * amplitude, x.size)
        return x, y

    def test_noiseless_maxima_at_odd_pi(self):
        x, y = self.make_data(gamma=0.0, scale=np.pi / 0.9)
        result = fit_rabi(x, y)
        for m in (1, 3, 5, 7):
            assert result.params[f"theta_max_{m}"] == pytest.approx(m, abs=1e-9)
        assert result.params["area_scale"] == pytest.approx(np.pi / 0.9, rel=1e-9)

    def test_damping_recovery(self, rng):
        x, y = self.make_data(gamma=0.1, scale=3.3, noise=0.05, rng=rng, n=120)
        result = fit_rabi(x, y)
        assert result.params["gamma"] == pytest.approx(0.1, rel=0.2)

    def test_monotone_data_rejected(self):
        x = np.linspace(0, 1, 30)
        with pytest.raises(ValueError, match="oscillate"):
            fit_rabi(x, x**2)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match="10 points"):
            fit_rabi(np.linspace(0, 7, 9), np.zeros(9))

    def test_small_span_rejected(self):
        x = np.linspace(0.05, 1.2, 30)  # first max at 1.0 -> span barely over pi
        y = rabi_population(np.pi * x)
        with pytest.raises(ValueError, match="2 pi"):
            fit_rabi(x, y)

    def test_jacobian_matches_finite_differences(self, rng):
        x = np.linspace(0.1, 8.0, 60)

        def model(p):
            amp, s, gamma = p
            return amp * rabi_population(s * x, gamma)

        from qdcascade.fitting import fit_rabi as _  # noqa: F401

        for _i in range(50):
            p = np.array([rng.uniform(0.5, 2.0), rng.uniform(0.8, 1.3), rng.uniform(0.0, 0.3)])
            # reuse the internal model via a tiny LM run with 0 iterations
            amp, s, gamma = p
            theta = s * x
            c = gamma / np.pi
            damp = np.exp(-c * theta)
            pop = 0.5 * (1.0 - np.cos(theta) * damp)
            dpop_dtheta = 0.5 * damp * (np.sin(theta) + c * np.cos(theta))
            jac = np.stack(
                [pop, amp * dpop_dtheta * x, amp * 0.5 * np.cos(theta) * (theta / np.pi) * damp],
                axis=1,
            )
            for idx in range(3):
                eps = 1e-7
                up, dn = p.copy(), p.copy()
                up[idx] += eps
                dn[idx] -= eps
                numeric = (model(up) - model(dn)) / (2 * eps)
                scale = np.max(np.abs(jac[:, idx])) + 1e-12
                np.testing.assert_allclose(jac[:, idx] / scale, numeric / scale, atol=1e-6)


class TestFitFss:
    def make_series(self, s_uev, phase=0.4, offset=3210.0, noise=0.0, rng=None, n=24):
        alpha = np.linspace(0.0, np.pi, n)
        swing = (s_uev / 4.0) * np.cos(4 * alpha + phase)
        x = offset / 2 + swing
        xx = -offset / 2 - swing
        if noise and rng is not None:
            x = x + rng.normal(0, noise, n)
            xx = xx + rng.normal(0, noise, n)
        return SpectrumSeries(alpha, x, xx)

    def test_noiseless_recovery(self):
        result = fit_fss(self.make_series(4.8))
        assert result.params["fss_uev"] == pytest.approx(4.8, abs=1e-6)
        assert not result.degenerate

    def test_zero_splitting_flagged_degenerate(self, rng):
        result = fit_fss(self.make_series(0.0, noise=0.05, rng=rng))
        assert result.degenerate
        assert result.params["fss_uev"] <= result.stderrs["fss_uev"]

    def test_noisy_recovery_within_two_sigma(self, rng):
        result = fit_fss(self.make_series(2.3, noise=0.5, rng=rng, n=48))
        err = result.stderrs["fss_uev"]
        assert abs(result.params["fss_uev"] - 2.3) < 2 * max(err, 1e-6)

    def test_offset_invariance(self):
        base = self.make_series(3.1)
        shifted = SpectrumSeries(
            base.hwp_angles_rad, base.x_centers_uev + 77.7, base.xx_centers_uev + 77.7
        )
        a = fit_fss(base)
        b = fit_fss(shifted)
        assert a.params["fss_uev"] == pytest.approx(b.params["fss_uev"], abs=1e-9)

    def test_semi_amplitude_convention(self):
        series = self.make_series(4.0)
        pk = fit_fss(series, convention="peak-to-peak")
        semi = fit_fss(series, convention="semi-amplitude")
        assert semi.params["fss_uev"] == pytest.approx(pk.params["fss_uev"] / 2, rel=1e-9)

    def test_splitting_never_negative(self, rng):
        for _ in range(20):
            result = fit_fss(self.make_series(rng.uniform(0, 6), noise=0.3, rng=rng))
            assert result.params["fss_uev"] >= 0.0

    def test_series_validation(self):
        with pytest.raises(ValueError, match="at least 8"):
            SpectrumSeries(np.linspace(0, np.pi, 5), np.zeros(5), np.zeros(5))
        with pytest.raises(ValueError, match="span"):
            SpectrumSeries(np.linspace(0, 0.3, 12), np.zeros(12), np.zeros(12))


class TestFitLorentzian:
    def test_exact_recovery(self):
        s = np.linspace(0.0, 10.0, 40)
        f = 0.25 + 0.5 / (1.0 + (s / 1.5) ** 2)
        result = fit_lorentzian(s, f)
        assert result.params["amplitude"] == pytest.approx(0.5, abs=1e-6)
        assert result.params["width_uev"] == pytest.approx(1.5, abs=1e-6)
        assert result.params["floor"] == pytest.approx(0.25, abs=1e-6)

    def test_flat_data_degenerate(self, rng):
        s = np.linspace(0.0, 10.0, 30)
        f = 0.6 + rng.normal(0, 1e-3, 30)
        result = fit_lorentzian(s, f)
        assert abs(result.params["amplitude"]) <= 3 * max(result.stderrs["amplitude"], 1e-6)

    def test_width_matches_fidelity_model(self):
        # the fidelity-versus-splitting trend is Lorentzian with width hbar/T1
        from qdcascade.cascade import fidelity_vs_splitting

        s = np.linspace(0.0, 25.0, 60)
        f = fidelity_vs_splitting(s, 134.0, k=0.97)
        result = fit_lorentzian(s, f)
        expected = lorentzian_halfwidth_uev(134.0)
        assert expected == pytest.approx(4.912, abs=2e-3)
        assert result.params["width_uev"] == pytest.approx(expected, rel=0.10)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError, match="5 points"):
            fit_lorentzian(np.arange(4), np.arange(4.0))

    def test_jacobian_matches_finite_differences(self, rng):
        s = np.linspace(0.0, 12.0, 50)

        def model(p):
            return p[2] + p[0] / (1.0 + (s / p[1]) ** 2)

        for _ in range(50):
            p = np.array([rng.uniform(0.1, 1.0), rng.uniform(0.5, 6.0), rng.uniform(0.0, 0.5)])
            u = s / p[1]
            denom = 1.0 + u * u
            jac = np.stack(
                [1.0 / denom, p[0] * (2.0 * u * u / p[1]) / denom**2, np.ones_like(s)], axis=1
            )
            for idx in range(3):
                eps = 1e-7
                up, dn = p.copy(), p.copy()
                up[idx] += eps
                dn[idx] -= eps
                numeric = (model(up) - model(dn)) / (2 * eps)
                scale = np.max(np.abs(jac[:, idx])) + 1e-12
                np.testing.assert_allclose(jac[:, idx] / scale, numeric / scale, atol=1e-6)


class TestLevenbergMarquardt:
    def test_linear_problem_one_step(self):
        x = np.linspace(0, 1, 20)
        y = 3.0 * x + 1.0

        def model_jac(p):
            return p[0] * x + p[1], np.stack([x, np.ones_like(x)], axis=1)

        p, cov, chi2, iters, ok = levenberg_marquardt(model_jac, np.array([1.0, 0.0]), y)
        assert ok
        assert p[0] == pytest.approx(3.0, abs=1e-9)
        assert p[1] == pytest.approx(1.0, abs=1e-9)
        assert chi2 == pytest.approx(0.0, abs=1e-12)


class TestEnsembleYield:
    def test_folded_normal_moments(self, rng):
        mu, sigma = folded_normal_parameters(4.8, 2.4)
        draws = np.abs(rng.normal(mu, sigma, 2_000_000))
        assert draws.mean() == pytest.approx(4.8, abs=0.01)
        assert draws.std(ddof=1) == pytest.approx(2.4, abs=0.01)

    def test_infeasible_moments_rejected(self):
        with pytest.raises(ValueError, match="folded normal"):
            folded_normal_parameters(1.0, 2.0)

    def test_zero_splitting_full_yield(self):
        assert ensemble_yield(mean_uev=0.0, sd_uev=0.0, seed=1) == 1.0

    def test_reference_distribution_yield(self):
        fraction = ensemble_yield(seed=42)
        assert fraction >= 0.999

    def test_no_dot_signal_zero_yield(self):
        assert ensemble_yield(k=0.0, seed=3) == 0.0

    def test_deterministic(self):
        assert ensemble_yield(seed=9) == ensemble_yield(seed=9)

    def test_minimum_samples_enforced(self):
        with pytest.raises(ValueError, match="10000"):
            ensemble_yield(n_samples=100, seed=0)


class TestSampleStats:
    def test_constant(self):
        assert sample_stats([1.0, 1.0, 1.0]) == (1.0, 0.0)

    def test_two_values(self):
        mean, sd = sample_stats([0.0, 2.0])
        assert mean == pytest.approx(1.0)
        assert sd == pytest.approx(np.sqrt(2.0))

    def test_gaussian_draws(self, rng):
        values = rng.normal(779.8, 1.6, 10_000)
        mean, sd = sample_stats(values)
        assert mean == pytest.approx(779.8, abs=0.05)
        assert sd == pytest.approx(1.6, abs=0.05)

    def test_single_value_rejected(self):
        with pytest.raises(ValueError, match="2 values"):
            sample_stats([1.0])
