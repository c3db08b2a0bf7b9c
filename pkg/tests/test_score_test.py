import math

import numpy as np
import pytest

from ctgest import (
    Cohort,
    DGPConfig,
    NoEventsError,
    SimpleAFT,
    SingularityError,
    Trajectory,
    chi_square_sf,
    confidence_region_by_inversion,
    norm_ppf,
    run_test,
    simulate_cohort,
    solve,
    stacked,
    run_test_at_shift,
    weibull_mle,
)


class TestChiSquareSf:
    def test_at_zero(self):
        for k in (1, 2, 5, 10):
            assert chi_square_sf(0.0, k) == 1.0

    def test_frozen_quantiles(self):
        # 95th percentiles; the k=2 case has the closed form exp(-x/2).
        assert chi_square_sf(3.8414588, 1) == pytest.approx(0.05, abs=1e-6)
        assert chi_square_sf(5.9914645, 2) == pytest.approx(0.05, abs=1e-6)
        assert chi_square_sf(5.9914645, 2) == pytest.approx(
            math.exp(-5.9914645 / 2.0), abs=1e-12
        )

    def test_k1_closed_form(self, rng):
        # sf(x, 1) = erfc(sqrt(x/2)).
        for x in rng.uniform(0.01, 20.0, size=25):
            assert chi_square_sf(float(x), 1) == pytest.approx(
                math.erfc(math.sqrt(x / 2.0)), abs=1e-12
            )

    def test_domain(self):
        with pytest.raises(ValueError):
            chi_square_sf(-0.1, 1)
        with pytest.raises(ValueError):
            chi_square_sf(1.0, 0)
        with pytest.raises(ValueError):
            chi_square_sf(1.0, 1.5)

    def test_monotone_in_statistic(self):
        xs = np.linspace(0.0, 30.0, 200)
        vals = [chi_square_sf(float(x), 3) for x in xs]
        assert np.all(np.diff(vals) <= 0)


class TestNormPpf:
    def test_frozen_value(self):
        assert norm_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_symmetry(self, rng):
        for p in rng.uniform(1e-6, 0.5, size=30):
            assert norm_ppf(float(p)) == pytest.approx(-norm_ppf(1.0 - float(p)),
                                                       abs=1e-10)

    def test_round_trip_with_cdf(self, rng):
        from ctgest.special import norm_cdf

        for p in rng.uniform(1e-8, 1.0 - 1e-8, size=50):
            assert norm_cdf(norm_ppf(float(p))) == pytest.approx(float(p),
                                                                 abs=1e-12)

    def test_domain(self):
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                norm_ppf(bad)


@pytest.fixture(scope="module")
def null_cohort():
    cohort, _ = simulate_cohort(DGPConfig(n=2500, seed=61, psi0=0.0))
    return cohort


@pytest.fixture(scope="module")
def effect_cohort():
    cohort, _ = simulate_cohort(DGPConfig(n=2500, seed=62))
    return cohort


class TestRunTest:
    def test_null_data_not_rejected_typically(self, null_cohort):
        tr = run_test(null_cohort)
        assert tr.dof == 1 and tr.extra_dim == 1
        assert tr.p_value == pytest.approx(chi_square_sf(tr.statistic, 1))
        assert tr.statistic >= 0.0

    def test_effect_data_rejected(self, effect_cohort):
        tr = run_test(effect_cohort)
        assert tr.p_value < 1e-6

    def test_statistic_matches_reconstruction(self, null_cohort):
        # The default extra weight is the observed outcome, which is the
        # effect component of the estimating vector at a null effect, and
        # the variance is the influence-adjusted one.  Rebuild both from
        # public pieces and compare.
        from ctgest import jacobian_stacked

        theta = weibull_mle(null_cohort)
        st = stacked(null_cohort, theta, 0.0, SimpleAFT())
        g = st.per_patient[:, 4]
        gtilde = st.per_patient[:, :4]
        jac = jacobian_stacked(null_cohort, theta, 0.0, SimpleAFT())
        nuis_jac = jac[:4, :4]
        dg_dtheta = jac[4, :4]
        adjusted = g - gtilde @ np.linalg.solve(nuis_jac.T, dg_dtheta)
        sigma = adjusted.var()
        n = len(null_cohort)
        expected = n * st.mean[4] ** 2 / sigma
        tr = run_test(null_cohort)
        assert tr.statistic == pytest.approx(expected, rel=1e-9)
        # The adjustment removes the nuisance-fit noise, so the adjusted
        # variance is smaller than the raw component variance.
        assert sigma < g.var()

    def test_custom_weight_callable(self, null_cohort):
        tr = run_test(null_cohort, h_extra=lambda traj, t: traj.y**2)
        assert 0.0 <= tr.p_value <= 1.0

    def test_vector_weight(self, null_cohort):
        tr = run_test(
            null_cohort,
            h_extra=[lambda traj, t: traj.y, lambda traj, t: traj.y**2],
        )
        assert tr.dof == 2

    def test_zero_weight_singular(self, null_cohort):
        with pytest.raises(SingularityError, match="h_extra"):
            run_test(null_cohort, h_extra=lambda traj, t: 0.0)

    def test_no_events_error(self):
        cohort = Cohort(
            tuple(Trajectory(f"p{i}", 0, None, None, 3.0, 10.0) for i in range(5))
        )
        with pytest.raises(NoEventsError):
            run_test(cohort)

    def test_empty_cohort(self):
        with pytest.raises(ValueError):
            run_test(Cohort(()))


class TestInversion:
    def test_point_estimate_not_rejected(self, effect_cohort):
        res = solve(effect_cohort, SimpleAFT())
        tr = run_test_at_shift(effect_cohort, SimpleAFT(), res.params[4])
        assert tr.p_value > 0.05

    def test_truth_in_region(self, effect_cohort):
        grid = np.linspace(0.0, 1.4, 29)
        region = confidence_region_by_inversion(
            effect_cohort, SimpleAFT(), grid, level=0.05
        )
        assert region.size > 0
        assert region.min() <= math.log(2.0) <= region.max()

    def test_region_excludes_far_values(self, effect_cohort):
        region = confidence_region_by_inversion(
            effect_cohort, SimpleAFT(), [-2.0, -1.0], level=0.05
        )
        assert region.size == 0

    def test_empty_grid(self, effect_cohort):
        region = confidence_region_by_inversion(effect_cohort, SimpleAFT(), [])
        assert region.size == 0

    def test_unsorted_grid_rejected(self, effect_cohort):
        with pytest.raises(ValueError):
            confidence_region_by_inversion(effect_cohort, SimpleAFT(), [1.0, 0.0])

    def test_null_shift_matches_run_test(self, null_cohort):
        a = run_test(null_cohort)
        b = run_test_at_shift(null_cohort, SimpleAFT(), 0.0)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
