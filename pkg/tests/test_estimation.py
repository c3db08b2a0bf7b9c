import math

import numpy as np
import pytest

from ctgest import (
    Cohort,
    DGPConfig,
    NonConvergenceError,
    SimpleAFT,
    StratifiedAFT,
    Trajectory,
    WeibullPHParams,
    WindowRestricted,
    alpha_diagnostic,
    g_patient,
    jacobian_stacked,
    sandwich,
    simulate_cohort,
    solve,
    stacked,
)
from ctgest.estimation import (
    SolveOptions,
    result_csv_header,
    result_to_csv_row,
    result_to_json_dict,
)
from conftest import random_cohort

LOG2 = math.log(2.0)
UNIT_WEIBULL = WeibullPHParams(1.0, 1.0, 0.0, 0.0)


def worked_patient():
    return Trajectory("p1", 1, None, 2.0, 5.0, 10.0)


class TestGPatient:
    def test_worked_components(self):
        gv = g_patient(worked_patient(), UNIT_WEIBULL, LOG2, SimpleAFT())
        expected = np.array([-1.0, 1.0 - math.log(2.0), -1.0, 0.0, -8.0])
        assert gv.components == pytest.approx(expected, abs=1e-12)
        assert gv.components == pytest.approx(gv.jump_part - gv.drift_part)

    def test_untreated_patient_is_pure_drift(self, rng):
        t = Trajectory("p1", 0, 1.0, None, 4.0, 10.0)
        gv = g_patient(t, UNIT_WEIBULL, 0.7, SimpleAFT())
        assert np.all(gv.jump_part == 0.0)
        assert gv.components == pytest.approx(-gv.drift_part)

    def test_rejects_augmented_hazard(self):
        bad = WeibullPHParams(1.0, 1.0, 0.0, 0.0, alpha=0.1)
        with pytest.raises(ValueError, match="alpha"):
            g_patient(worked_patient(), bad, 0.0, SimpleAFT())

    def test_window_model_quadrature_matches_plain(self, rng):
        # A window far beyond any outcome reduces to the closed-form variant,
        # exercising the backward-sweep quadrature path against closed forms.
        w = WeibullPHParams(0.3, 1.3, 0.4, -0.2)
        model = WindowRestricted(SimpleAFT(), window=1e9)
        for _ in range(12):
            cohort = random_cohort(rng, 1)
            t = cohort[0]
            a = g_patient(t, w, 0.4, model)
            b = g_patient(t, w, 0.4, SimpleAFT())
            assert a.components == pytest.approx(b.components, abs=1e-7)


class TestStacked:
    def test_single_patient_equals_g(self):
        t = worked_patient()
        st = stacked(Cohort((t,)), UNIT_WEIBULL, LOG2, SimpleAFT())
        gv = g_patient(t, UNIT_WEIBULL, LOG2, SimpleAFT())
        assert st.mean == pytest.approx(gv.components)

    def test_duplication_invariance(self, rng):
        base = random_cohort(rng, 40)
        doubled = Cohort(
            tuple(base)
            + tuple(
                Trajectory(f"q{i}", t.i_azt, t.pcp_time, t.treat_start, t.y, t.tau)
                for i, t in enumerate(base)
            )
        )
        w = WeibullPHParams(0.2, 1.1, 0.3, 0.5)
        a = stacked(base, w, 0.3, SimpleAFT()).mean
        b = stacked(doubled, w, 0.3, SimpleAFT()).mean
        assert a == pytest.approx(b, rel=1e-12)

    def test_vectorized_matches_scalar(self, rng):
        w = WeibullPHParams(0.25, 1.4, -0.3, 0.6)
        cohort = random_cohort(rng, 30)
        for model, psi in ((SimpleAFT(), [0.4]), (StratifiedAFT(), [0.3, -0.2, 0.1])):
            st = stacked(cohort, w, psi, model)
            per = np.stack(
                [g_patient(t, w, psi, model).components for t in cohort]
            )
            assert st.per_patient == pytest.approx(per, abs=1e-11)

    def test_unbiased_at_truth_moderate_n(self):
        cfg = DGPConfig(n=20000, seed=77)
        cohort, _ = simulate_cohort(cfg)
        truth = WeibullPHParams(cfg.xi0, cfg.gamma0, *cfg.theta0)
        st = stacked(cohort, truth, cfg.psi0, SimpleAFT())
        se = st.per_patient.std(axis=0, ddof=1) / math.sqrt(len(cohort))
        assert np.all(np.abs(st.mean) <= 3.0 * se)


class TestJacobian:
    def test_matches_finite_differences_at_random_points(self, rng):
        cfg = DGPConfig(n=500, seed=5)
        cohort, _ = simulate_cohort(cfg)
        model = SimpleAFT()
        for _ in range(5):
            w = WeibullPHParams(
                xi=float(rng.uniform(0.02, 0.2)),
                gamma=float(rng.uniform(0.7, 1.6)),
                theta1=float(rng.uniform(-0.5, 1.0)),
                theta2=float(rng.uniform(-0.5, 1.2)),
            )
            psi = float(rng.uniform(-0.8, 1.2))
            jac = jacobian_stacked(cohort, w, psi, model)
            z0 = np.array([w.xi, w.gamma, w.theta1, w.theta2, psi])

            def f(z):
                wp = WeibullPHParams(z[0], z[1], z[2], z[3])
                return stacked(cohort, wp, [z[4]], model).mean

            base = f(z0)
            fd = np.empty((5, 5))
            for j in range(5):
                h = 1e-6 * (1.0 + abs(z0[j]))
                zp = z0.copy()
                zp[j] += h
                zm = z0.copy()
                zm[j] -= h
                fd[:, j] = (f(zp) - f(zm)) / (2.0 * h)
            scale = np.maximum(np.abs(fd), 1e-3)
            assert np.max(np.abs(jac - fd) / scale) < 1e-4


class TestSolve:
    def test_recovers_null_effect(self):
        cfg = DGPConfig(n=4000, seed=21, psi0=0.0)
        cohort, _ = simulate_cohort(cfg)
        res = solve(cohort, SimpleAFT())
        psi, se = res.params[4], res.se[4]
        assert abs(psi) <= 3.0 * se
        assert res.diagnostics["method"] == "profile"
        assert res.diagnostics["residual_norm"] <= 1e-8

    def test_recovers_positive_effect(self):
        cfg = DGPConfig(n=4000, seed=22)
        cohort, _ = simulate_cohort(cfg)
        res = solve(cohort, SimpleAFT())
        assert abs(res.params[4] - LOG2) <= 3.0 * res.se[4]

    def test_duplication_invariance(self):
        cfg = DGPConfig(n=500, seed=23)
        cohort, _ = simulate_cohort(cfg)
        doubled = Cohort(
            tuple(cohort)
            + tuple(
                Trajectory(f"d{i}", t.i_azt, t.pcp_time, t.treat_start, t.y, t.tau)
                for i, t in enumerate(cohort)
            )
        )
        a = solve(cohort, SimpleAFT())
        b = solve(doubled, SimpleAFT())
        assert a.params == pytest.approx(b.params, rel=1e-7)

    def test_permutation_equivariance(self):
        cfg = DGPConfig(n=400, seed=24)
        cohort, _ = simulate_cohort(cfg)
        perm = Cohort(tuple(reversed(tuple(cohort))))
        a = solve(cohort, SimpleAFT())
        b = solve(perm, SimpleAFT())
        assert a.params == pytest.approx(b.params, rel=1e-9)

    def test_empty_cohort_rejected(self):
        with pytest.raises(ValueError):
            solve(Cohort(()), SimpleAFT())

    def test_bad_bracket_falls_back_to_newton(self):
        cfg = DGPConfig(n=300, seed=25)
        cohort, _ = simulate_cohort(cfg)
        res = solve(
            cohort,
            SimpleAFT(),
            opts=SolveOptions(psi_bracket=(-3.0, -2.5), scan_points=5),
        )
        assert res.diagnostics["method"] == "newton"
        base = solve(cohort, SimpleAFT())
        assert res.params == pytest.approx(base.params, rel=1e-6)

    def test_no_almost_zero_reported_with_residual(self):
        cfg = DGPConfig(n=300, seed=25)
        cohort, _ = simulate_cohort(cfg)
        with pytest.raises(NonConvergenceError, match="almost-zero") as exc_info:
            solve(
                cohort,
                SimpleAFT(),
                opts=SolveOptions(psi_bracket=(-3.0, -2.5), scan_points=5,
                                  tol=1e-30),
            )
        assert exc_info.value.trace is not None
        assert exc_info.value.residual_norm > 0

    def test_stratified_reduces_to_simple_truth(self):
        # The generator uses a single log time-ratio, so the stratified fit
        # should find (psi0, 0, 0) up to noise.
        cfg = DGPConfig(n=4000, seed=26)
        cohort, _ = simulate_cohort(cfg)
        res = solve(cohort, StratifiedAFT())
        est = res.params[4:]
        se = res.se[4:]
        truth = np.array([cfg.psi0, 0.0, 0.0])
        assert np.all(np.abs(est - truth) <= 3.5 * se)
        assert res.diagnostics["method"] == "newton"

    def test_window_model_matches_plain_when_window_huge(self):
        cfg = DGPConfig(n=250, seed=27)
        cohort, _ = simulate_cohort(cfg)
        plain = solve(cohort, SimpleAFT())
        windowed = solve(cohort, WindowRestricted(SimpleAFT(), window=1e9))
        assert windowed.params == pytest.approx(plain.params, rel=1e-5)
        assert windowed.se == pytest.approx(plain.se, rel=5e-3)


@pytest.fixture(scope="module")
def fitted():
    cfg = DGPConfig(n=3000, seed=31)
    cohort, _ = simulate_cohort(cfg)
    res = solve(cohort, SimpleAFT())
    return cohort, res


class TestSandwich:

    def test_first_four_rows_of_effect_column_vanish(self, fitted):
        _, res = fitted
        assert np.all(res.v0[:4, 4] == 0.0)

    def test_block_identity_off_diagonal_zero(self, fitted):
        # With matching blocks the nuisance/effect covariance cancels
        # algebraically, not just asymptotically.
        _, res = fitted
        off = res.cov[:4, 4]
        assert np.max(np.abs(off)) <= 1e-10

    def test_cov_symmetric_psd(self, fitted):
        _, res = fitted
        assert res.cov == pytest.approx(res.cov.T)
        assert np.linalg.eigvalsh(res.cov).min() >= -1e-10

    def test_w0_matches_outer_product_second_moment(self, fitted):
        # Martingale second-moment identity at the fitted point: the mean
        # outer product of per-patient vectors estimates the same matrix as
        # the closed-form predictable variation.
        cohort, res = fitted
        w = WeibullPHParams(*res.params[:4])
        st = stacked(cohort, w, res.params[4:], SimpleAFT())
        outer = st.per_patient.T @ st.per_patient / len(cohort)
        scale = np.sqrt(np.outer(np.diag(res.w0), np.diag(res.w0))) + 1e-12
        rel = np.abs(outer - res.w0) / scale
        # Monte Carlo agreement, not exact: allow a few percent at n=3000.
        assert np.max(rel) < 0.15

    def test_jacobian_equals_plugin_v0_at_fit(self, fitted):
        cohort, res = fitted
        w = WeibullPHParams(*res.params[:4])
        jac = jacobian_stacked(cohort, w, res.params[4:], SimpleAFT())
        assert jac == pytest.approx(res.v0, abs=1e-9)


class TestAlphaDiagnostic:
    def test_zero_at_truth(self):
        cfg = DGPConfig(n=4000, seed=41)
        cohort, _ = simulate_cohort(cfg)
        a, se = alpha_diagnostic(cohort, cfg.psi0, SimpleAFT())
        assert abs(a) <= 3.0 * se

    def test_detects_wrong_effect(self):
        cfg = DGPConfig(n=4000, seed=42)
        cohort, _ = simulate_cohort(cfg)
        a, se = alpha_diagnostic(cohort, 0.0, SimpleAFT())
        assert abs(a) > 3.0 * se

    def test_no_events_error(self):
        cohort = Cohort(
            tuple(Trajectory(f"p{i}", 0, None, None, 3.0, 10.0) for i in range(4))
        )
        from ctgest import NoEventsError

        with pytest.raises(NoEventsError):
            alpha_diagnostic(cohort, 0.0, SimpleAFT())


class TestResultSerialization:
    def test_json_keys(self):
        cfg = DGPConfig(n=400, seed=51)
        cohort, _ = simulate_cohort(cfg)
        res = solve(cohort, SimpleAFT())
        payload = result_to_json_dict(res)
        assert set(payload) == {
            "params", "se", "ci", "ci_level", "cov", "v0", "w0", "diagnostics"
        }
        assert list(payload["params"]) == ["xi", "gamma", "theta1", "theta2", "psi"]
        assert len(payload["cov"]) == 5

    def test_csv_row_alignment(self):
        cfg = DGPConfig(n=400, seed=52)
        cohort, _ = simulate_cohort(cfg)
        res = solve(cohort, SimpleAFT())
        header = result_csv_header(res.names)
        row = result_to_csv_row(res)
        assert len(header) == len(row)
        assert header[0] == "n" and row[0] == 400
