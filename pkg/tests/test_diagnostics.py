import numpy as np
import pandas as pd
import pytest
from scipy import stats

from pseudopanel import (
    FitResult,
    ModelSpec,
    dfbetas_filter,
    hausman,
    het_test_and_reweight,
    ols,
)
from pseudopanel.diagnostics import inverse_residual_reweight

SPEC = ModelSpec("y", ("x",))


def manual_fit(names, params, cov):
    return FitResult(
        params=pd.Series(params, index=names),
        cov=np.asarray(cov, dtype=float),
        residuals=pd.Series(dtype=float),
        df=10, n_used=20, method="manual",
    )


class TestHausman:
    def test_equal_estimates_statistic_zero(self):
        a = manual_fit(["x"], [0.4], [[0.01]])
        b = manual_fit(["x"], [0.4], [[0.02]])
        out = hausman(a, b)
        assert out.statistic == pytest.approx(0.0, abs=1e-15)
        assert out.p_value == pytest.approx(1.0)

    def test_scalar_hand_arithmetic(self):
        # (0.2 - 0.4)^2 / (0.03^2 + 0.04^2) = 0.04 / 0.0025 = 16.0
        a = manual_fit(["ly"], [0.2], [[0.0009]])
        b = manual_fit(["ly"], [0.4], [[0.0016]])
        out = hausman(a, b)
        assert out.statistic == pytest.approx(16.0, abs=1e-12)
        assert out.dof == 1
        assert out.p_value < 0.001

    def test_published_scale_statistic_rejects_at_one_percent(self):
        # a chi2(1) of 107.7 is far beyond the 1% critical value 6.63
        critical = stats.chi2.ppf(0.99, 1)
        assert critical == pytest.approx(6.63, abs=0.01)
        assert 107.7 > critical
        assert stats.chi2.sf(107.7, 1) < 0.001

    def test_invariant_to_coefficient_order(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(2, 2))
        Vb = A @ A.T + np.eye(2)
        B = rng.normal(size=(2, 2))
        Vw = B @ B.T + np.eye(2)
        a = manual_fit(["p", "q"], [0.1, 0.5], Vb)
        b = manual_fit(["p", "q"], [0.3, 0.2], Vw)
        a_flip = manual_fit(["q", "p"], [0.5, 0.1], Vb[::-1, ::-1])
        b_flip = manual_fit(["q", "p"], [0.2, 0.3], Vw[::-1, ::-1])
        out = hausman(a, b)
        out_flip = hausman(a_flip, b_flip)
        assert out.statistic == pytest.approx(out_flip.statistic, abs=1e-12)

    def test_subset_uses_full_variance_not_subset_block(self):
        # correlated V: the conditional (full-V) statistic differs from the
        # subset-only shortcut, which is flagged as naive
        V = np.array([[0.04, 0.03], [0.03, 0.04]])
        a = manual_fit(["ly", "z"], [0.2, 0.1], V / 2)
        b = manual_fit(["ly", "z"], [0.5, 0.1], V / 2)
        full = hausman(a, b, subset=("ly",))
        naive = hausman(a, b, subset=("ly",), naive=True)
        assert full.dof == naive.dof == 1
        assert full.statistic != pytest.approx(naive.statistic, rel=1e-6)
        # oracle: conditional variance = Schur complement of V
        schur = V[0, 0] - V[0, 1] ** 2 / V[1, 1]
        assert full.statistic == pytest.approx(0.3**2 / schur, abs=1e-10)
        assert naive.statistic == pytest.approx(0.3**2 / V[0, 0], abs=1e-10)

    def test_singular_v_repaired_and_flagged(self):
        V = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank one
        a = manual_fit(["p", "q"], [0.1, 0.2], V)
        b = manual_fit(["p", "q"], [0.1, 0.2], np.zeros((2, 2)))
        out = hausman(a, b)
        assert out.v_psd_repaired
        assert out.statistic >= 0.0


class TestDfbetas:
    def test_threshold_formula(self):
        rng = np.random.default_rng(1)
        frame = pd.DataFrame({"x": rng.normal(size=400)})
        frame["y"] = 0.5 * frame["x"] + rng.normal(size=400)
        res = dfbetas_filter(SPEC, frame)
        assert res.threshold == pytest.approx(2.0 / 20.0, abs=1e-15)
        assert res.threshold == pytest.approx(0.1)

    def test_injected_outlier_uniquely_flagged(self):
        rng = np.random.default_rng(2)
        n = 120
        x = rng.normal(size=n)
        y = 1.0 + 0.5 * x  # exact line
        y[17] += 1.0
        frame = pd.DataFrame({"x": x, "y": y})
        res = dfbetas_filter(SPEC, frame)
        assert list(res.flagged) == [17]

    def test_matches_leave_one_out_refit_oracle(self):
        rng = np.random.default_rng(3)
        n = 30
        x = rng.normal(size=n)
        y = 1.0 + 0.5 * x + rng.normal(size=n)
        frame = pd.DataFrame({"x": x, "y": y})
        res = dfbetas_filter(SPEC, frame)

        X = np.column_stack([np.ones(n), x])
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        xtx_inv = np.linalg.inv(X.T @ X)
        for i in (0, 7, 19):
            mask = np.arange(n) != i
            Xi, yi = X[mask], y[mask]
            beta_i = np.linalg.lstsq(Xi, yi, rcond=None)[0]
            resid_i = yi - Xi @ beta_i
            s_i = np.sqrt(resid_i @ resid_i / (n - 1 - 2))
            for j, name in enumerate(["const", "x"]):
                expected = (beta[j] - beta_i[j]) / (s_i * np.sqrt(xtx_inv[j, j]))
                assert res.dfbetas.loc[i, name] == pytest.approx(expected, abs=1e-10)

    def test_duplicated_centroid_row_has_no_influence(self):
        rng = np.random.default_rng(4)
        n = 40
        x = rng.normal(size=n)
        y = 1.0 + 0.5 * x + rng.normal(size=n)
        X = np.column_stack([np.ones(n), x])
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        x_new = np.append(x, x.mean())
        y_new = np.append(y, beta[0] + beta[1] * x.mean())
        frame = pd.DataFrame({"x": x_new, "y": y_new})
        res = dfbetas_filter(SPEC, frame)
        assert np.max(np.abs(res.dfbetas.loc[n])) < 1e-8

    def test_flag_share_near_published_rate(self):
        # equal-leverage design: flag rate = P(|t| > ~2) ~ 4.6%
        rates = []
        for rep in range(50):
            rng = np.random.default_rng([99, rep])
            x = rng.choice([-1.0, 1.0], size=400)
            y = 0.5 * x + rng.normal(size=400)
            frame = pd.DataFrame({"x": x, "y": y})
            res = dfbetas_filter(ModelSpec("y", ("x",), intercept=False), frame)
            rates.append(res.flags.mean())
        assert np.mean(rates) == pytest.approx(0.04, abs=0.02)


class TestHetTest:
    def test_size_under_homoscedasticity(self):
        rejections = 0
        reps = 1000
        for rep in range(reps):
            rng = np.random.default_rng([55, rep])
            x = rng.normal(size=200)
            y = 1 + 0.5 * x + rng.normal(size=200)
            frame = pd.DataFrame({"x": x, "y": y})
            out = het_test_and_reweight(ols(SPEC, frame), SPEC, frame)
            rejections += out.rejected
        assert rejections / reps == pytest.approx(0.05, abs=0.02)

    def test_power_under_variance_proportional_to_x2(self):
        rejections = 0
        reps = 100
        for rep in range(reps):
            rng = np.random.default_rng([56, rep])
            x = rng.normal(size=500)
            y = 1 + 0.5 * x + np.abs(x) * rng.normal(size=500)
            frame = pd.DataFrame({"x": x, "y": y})
            out = het_test_and_reweight(ols(SPEC, frame), SPEC, frame)
            rejections += out.rejected
        assert rejections / reps > 0.90

    def test_reweighting_exact_fit_is_identity(self):
        x = np.arange(1.0, 9.0)
        frame = pd.DataFrame({"x": x, "y": 2.0 * x - 1.0})
        fit = ols(SPEC, frame)
        assert np.max(np.abs(fit.residuals)) < 1e-12
        refit = inverse_residual_reweight(SPEC, frame, fit.residuals)
        assert np.max(np.abs(refit.params - fit.params)) < 1e-10

    def test_refit_returned_on_rejection(self):
        rng = np.random.default_rng(57)
        x = rng.normal(size=500)
        y = 1 + 0.5 * x + np.abs(x) * rng.normal(size=500)
        frame = pd.DataFrame({"x": x, "y": y})
        out = het_test_and_reweight(ols(SPEC, frame), SPEC, frame)
        assert out.rejected
        assert out.refit is not None
        assert out.refit.method == "wls"
