import math

import numpy as np
import pytest
from scipy import integrate

from concord.genesis import (
    GenesisSpec,
    NormalPrior,
    PointMassPrior,
    ScaledInvChi2Prior,
    SimSpec,
    UnfoundErrorPrior,
    bounds_effect,
    deconvolve,
    genesis_tail_exponent,
    mixture_density,
    simulate_dataset,
    unfound_error_density,
)
from concord.statfun import DistSpec, student_t_pdf
from concord.tfit import FitConfig, fit_report


class TestSimulateDataset:
    def test_determinism(self):
        spec = SimSpec(20, 4, DistSpec("normal"), seed=7)
        assert simulate_dataset(spec) == simulate_dataset(spec)

    def test_different_seed_differs(self):
        a = simulate_dataset(SimSpec(20, 4, DistSpec("normal"), seed=7))
        b = simulate_dataset(SimSpec(20, 4, DistSpec("normal"), seed=8))
        assert a != b

    def test_shape_and_uncertainties(self):
        d = simulate_dataset(SimSpec(10, [3, 5], DistSpec("normal"), reported_u=0.4, seed=1))
        assert len(d) == 10
        counts = sorted({len(q) for q in d.quantities})
        assert counts == [3, 5]
        assert all(m.u_plus == 0.4 for q in d.quantities for m in q.measurements)

    def test_bounds_respected(self):
        spec = SimSpec(
            50,
            4,
            DistSpec("student_t", nu=2.0),
            reported_u=0.3,
            true_value=(0.2, 0.8),
            bounds=(0.0, 1.0),
            seed=3,
        )
        d = simulate_dataset(spec)
        for q in d.quantities:
            assert (q.lower_bound, q.upper_bound) == (0.0, 1.0)
            for m in q.measurements:
                assert 0.0 <= m.value <= 1.0

    def test_relative_uncertainty(self):
        d = simulate_dataset(
            SimSpec(5, 3, DistSpec("normal"), reported_u=0.1, u_relative=True, true_value=(5.0, 10.0), seed=2)
        )
        for q in d.quantities:
            u = q.measurements[0].u_plus
            assert 0.5 <= u <= 1.0

    def test_date_range(self):
        d = simulate_dataset(SimSpec(5, 3, DistSpec("normal"), date_range=(1990, 2000), seed=4))
        for q in d.quantities:
            for m in q.measurements:
                assert 1990 <= m.date.year <= 2000

    def test_rejects_small_quantities(self):
        with pytest.raises(ValueError):
            SimSpec(5, 1, DistSpec("normal"))

    def test_rejects_impossible_bounds(self):
        with pytest.raises(ValueError):
            SimSpec(5, 3, DistSpec("normal"), bounds=(1.0, 0.0))


class TestMixtureDensity:
    def test_point_mass_is_normal(self):
        for x in (0.0, 1.0, 2.5):
            expected = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
            assert mixture_density(PointMassPrior(1.0), x) == pytest.approx(expected, rel=1e-12)

    def test_scaled_inv_chi2_gives_student_t(self):
        prior = ScaledInvChi2Prior(3.0, 1.2)
        for x in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
            assert mixture_density(prior, x) == pytest.approx(
                student_t_pdf(x, 3.0, 1.2), abs=1e-6, rel=1e-6
            )

    def test_broad_normal_prior_gives_exponential_tail(self):
        prior = NormalPrior(1.0, 1.0)
        xs = np.linspace(5.0, 15.0, 11)
        logd = np.log([mixture_density(prior, x) for x in xs])
        slopes = np.diff(logd) / np.diff(xs)
        assert np.all(np.abs(slopes / slopes.mean() - 1.0) < 0.02)

    @pytest.mark.parametrize(
        "prior",
        [ScaledInvChi2Prior(3.0, 1.0), UnfoundErrorPrior(GenesisSpec(3, 1.0))],
    )
    def test_normalized_prior_gives_normalized_mixture(self, prior):
        val, _ = integrate.quad(lambda x: mixture_density(prior, x), 0.0, np.inf, limit=300)
        assert 2.0 * val == pytest.approx(1.0, abs=1e-6)


class TestUnfoundErrorDensity:
    def test_tail_slope(self):
        g = GenesisSpec(3, 1.0, chi2_max=2.0, sigma_floor=1.0)
        t1, t2 = 1e2, 1e4
        slope = math.log(unfound_error_density(t2, g) / unfound_error_density(t1, g)) / math.log(t2 / t1)
        assert slope == pytest.approx(-(g.n_m - 1 + g.alpha), rel=0.01)

    def test_floor_limit_power_law(self):
        g = GenesisSpec(3, 1.0, chi2_max=50.0, sigma_floor=1.0)
        for t in (1.0, 1.05, 1.1):
            assert unfound_error_density(t, g) == pytest.approx(t**-g.alpha, rel=1e-3)

    def test_below_floor_is_zero(self):
        g = GenesisSpec(3, 1.0)
        assert unfound_error_density(0.5, g) == 0.0

    def test_chi2max_doubling_substitution(self):
        # F(2c/t^2) = F(c/(t/sqrt2)^2), so doubling chi2_max rescales t by sqrt2
        alpha = 0.7
        g1 = GenesisSpec(4, alpha, chi2_max=3.0, sigma_floor=1.0)
        g2 = GenesisSpec(4, alpha, chi2_max=6.0, sigma_floor=1.0)
        for t in (2.0, 3.0, 10.0):
            lhs = unfound_error_density(t, g2)
            rhs = 2.0 ** (-alpha / 2.0) * unfound_error_density(t / math.sqrt(2.0), g1)
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_rejects_nonpositive_t(self):
        with pytest.raises(ValueError):
            unfound_error_density(0.0, GenesisSpec(3, 1.0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GenesisSpec(1, 1.0)
        with pytest.raises(ValueError):
            GenesisSpec(3, -1.0)
        with pytest.raises(ValueError):
            GenesisSpec(2, 1.0, sigma_floor=0.0)

    def test_chi2max_default(self):
        assert GenesisSpec(4, 1.0).chi2_max == 3.0


class TestGenesisTailExponent:
    def test_three_measurements(self):
        nu = genesis_tail_exponent(GenesisSpec(3, 1.0, chi2_max=2.0, sigma_floor=1.0))
        assert nu == pytest.approx(3.0, rel=0.15)

    def test_large_n_m_approaches_normal(self):
        assert genesis_tail_exponent(GenesisSpec(20, 1.0)) > 10.0

    def test_monotonic_in_n_m(self):
        nus = [genesis_tail_exponent(GenesisSpec(n, 1.0)) for n in (2, 3, 5, 8)]
        assert nus == sorted(nus)
        assert all(b > a for a, b in zip(nus, nus[1:]))


def observed_histogram(error_law, n_quantities=4000, seed=10, replicas=200):
    d = simulate_dataset(SimSpec(n_quantities, 4, error_law, seed=seed))
    rep = fit_report(d, FitConfig(replicas=replicas, seed=seed))
    mult = [len(q) for q in d.quantities if len(q) >= 2]
    return rep, mult


class TestDeconvolve:
    def test_determinism(self):
        rep, mult = observed_histogram(DistSpec("student_t", nu=2.0), n_quantities=500, seed=6)
        a = deconvolve(rep.histogram, mult, seed=3, n_pairs=20_000)
        b = deconvolve(rep.histogram, mult, seed=3, n_pairs=20_000)
        assert (a.nu_x, a.sigma_x, a.objective) == (b.nu_x, b.sigma_x, b.objective)

    def test_normal_errors_hit_grid_top(self):
        rep, mult = observed_histogram(DistSpec("normal"), n_quantities=3000, seed=9)
        res = deconvolve(rep.histogram, mult, seed=4, n_pairs=50_000)
        assert res.nu_x > 10.0
        assert res.sigma_x == pytest.approx(1.0, abs=0.15)
        assert res.on_boundary

    def test_requires_bin_uncertainties(self):
        rep, mult = observed_histogram(DistSpec("normal"), n_quantities=100, seed=2)
        rep.histogram.bin_uncertainty = np.zeros_like(rep.histogram.bin_uncertainty)
        with pytest.raises(ValueError):
            deconvolve(rep.histogram, mult, seed=1)

    @pytest.mark.parametrize("nu_x", [1.5, 2.0, 3.0, 5.0])
    def test_round_trip_t_laws(self, nu_x):
        rep, mult = observed_histogram(DistSpec("student_t", nu=nu_x), seed=int(nu_x * 10))
        res = deconvolve(rep.histogram, mult, seed=5, n_pairs=100_000)
        assert res.nu_x == pytest.approx(nu_x, abs=0.45 + 0.15 * nu_x)
        assert res.sigma_x == pytest.approx(1.0, abs=0.12)
        # individual-error tails are heavier than the fitted pair law
        assert res.nu_x < rep.fit.nu

    def test_round_trip_cauchy(self):
        rep, mult = observed_histogram(DistSpec("cauchy"), seed=15)
        res = deconvolve(rep.histogram, mult, seed=5, n_pairs=100_000)
        assert res.nu_x == pytest.approx(1.0, abs=0.25)
        assert res.sigma_x == pytest.approx(1.0, abs=0.12)


class TestBoundsEffect:
    def test_unbounded_is_exact_zero(self):
        d = simulate_dataset(SimSpec(300, 4, DistSpec("normal"), seed=12))
        dn, ds = bounds_effect(d, seed=2, replicas=100)
        assert dn == 0.0 and ds == 0.0

    def test_distant_bounds_no_shift(self):
        d = simulate_dataset(
            SimSpec(300, 4, DistSpec("normal"), true_value=(0.4, 0.6), reported_u=0.01, bounds=(-100.0, 100.0), seed=12)
        )
        dn, ds = bounds_effect(d, seed=2, replicas=100)
        assert dn == 0.0 and ds == 0.0
