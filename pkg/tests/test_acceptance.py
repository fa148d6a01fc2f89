"""Acceptance suite: one test per release criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion
lines; every tolerance is fixed here, not configurable.
"""

import json

import numpy as np
import pandas as pd
import pytest

from pseudopanel import (
    DgpConfig,
    InstrumentSet,
    ModelSpec,
    PseudoPanel,
    VarianceComponents,
    aggregate,
    between_fit,
    dfbetas_filter,
    error_components_omega,
    fd_instrument,
    first_difference_fit,
    generate,
    gls,
    hausman,
    ols,
    qaids_fit,
    run_study,
    shadow_price_elasticity,
    spectral_check,
    sur,
    thin_waves,
    within_annihilator,
    within_fit,
)
from pseudopanel.cli import main
from tests.test_demand import STONE_W, TRUE, demand_spec, synth_shares
from tests.test_estimators import make_pseudo

SPEC = ModelSpec("y", ("x",))


def criterion(number, label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {number}: {label} {detail}")
    assert ok, f"criterion {number} failed: {label} {detail}"


def test_01_shadow_price_golden_values():
    cases = [
        (0.19, 0.38, 1.00, -0.19),
        (1.00, 0.39, -3.13, -0.19),
        (0.49, 0.76, 0.71, -0.38),
        (1.22, 0.36, -4.78, -0.18),
    ]
    ok = True
    details = []
    for cs, ts, expected, printed_gamma in cases:
        out = shadow_price_elasticity(cs, ts)
        ok &= abs(out.shadow_income_elasticity - expected) <= 0.01
        ok &= abs(out.gamma_ii - printed_gamma) <= 0.005 + 1e-12
        details.append(f"({cs},{ts})->{out.shadow_income_elasticity:.3f}")
    criterion(1, "shadow-price golden quadruple", ok, "; ".join(details))


def test_02_annihilator_algebra_suite():
    rng = np.random.default_rng(2024)
    ok = True

    # Delta kills the cell dummies for arbitrary positive delta patterns
    worst = 0.0
    for n_cells in (2, 11, 29, 50):
        deltas = rng.uniform(0.01, 1.0, size=(n_cells, 4))
        delta_mat = within_annihilator(deltas)
        Z = np.kron(np.eye(n_cells), np.ones((4, 1)))
        worst = max(worst, float(np.max(np.abs(delta_mat @ Z))))
    ok &= worst < 1e-10

    # B Omega symmetry holds iff delta is constant over time
    sigma = VarianceComponents(0.5, 1.2)
    const = np.tile(rng.uniform(0.1, 0.9, 6)[:, None], (1, 4))
    varying = const.copy()
    varying[0, 0] *= 2.0
    sym = spectral_check(const, sigma)
    asym = spectral_check(varying, sigma)
    ok &= sym.asymmetry < 1e-12 and sym.decomposable
    ok &= not asym.decomposable

    # exact within with D = c I equals the ordinary within estimator
    pp = make_pseudo(np.full((8, 4), 0.3), seed=22)
    exact = within_fit(SPEC, pp, correction="exact")
    plain = within_fit(SPEC, pp, correction="none")
    gap = float(np.max(np.abs(exact.params - plain.params)))
    ok &= gap < 1e-9

    criterion(2, "annihilator algebra (kill dummies, symmetry iff, D=cI)", ok,
              f"worst |Delta Z|={worst:.2e}, D=cI gap={gap:.2e}")


def test_03_gls_spectral_decomposition():
    rng = np.random.default_rng(3)
    n_cells, T = 10, 4
    delta_c = rng.uniform(0.1, 0.6, n_cells)
    deltas = np.tile(delta_c[:, None], (1, T))
    x = rng.normal(size=(n_cells, T))
    y = 1.0 + 0.5 * x + rng.normal(size=(n_cells, T))
    pp = make_pseudo(deltas, x=x, y=y)
    sigma = VarianceComponents(0.8, 1.7)

    fit_b = between_fit(SPEC, pp, correction="exact", sigma=sigma)
    fit_w = within_fit(SPEC, pp, correction="exact")
    frame = pp.frame.sort_values(["key", "wave"]).reset_index(drop=True)
    omega, _, _ = error_components_omega(deltas, sigma)
    fit_gls = gls(SPEC, frame, omega)

    means = frame.groupby("key")[["x", "y"]].mean()
    Xb = np.column_stack([np.ones(n_cells), means["x"]])
    w_b = 1.0 / (sigma.sigma_mu2 + sigma.sigma_eps2 * delta_c / T)
    A_b = Xb.T @ np.diag(w_b) @ Xb
    delta_mat = within_annihilator(deltas)
    Xw = frame["x"].to_numpy()
    A_w = np.zeros((2, 2))
    A_w[1, 1] = (Xw @ delta_mat @ Xw) / sigma.sigma_eps2
    combo = np.linalg.solve(
        A_b + A_w,
        A_b @ fit_b.params.to_numpy() + A_w @ np.array([0.0, fit_w.params["x"]]),
    )
    gap = float(np.max(np.abs(fit_gls.params.to_numpy() - combo)))
    criterion(3, "GLS equals between/within matrix-weighted mix", gap < 1e-8,
              f"gap={gap:.2e}")


def test_04_endogeneity_bias_pattern():
    config = DgpConfig(n_units=2000, T=4, n_cells=10, beta=0.4,
                       delta_endog=-0.2, reliability=1.0, seed=4)
    report = run_study(config, ("between", "within"), reps=200)
    mean_b = report.row("between")["mean"]
    mean_w = report.row("within")["mean"]
    ok = abs(mean_b - 0.2) <= 0.03 and abs(mean_w - 0.4) <= 0.03
    criterion(4, "between ~ beta+delta, within ~ beta", ok,
              f"between={mean_b:.3f}, within={mean_w:.3f}")


def test_05_measurement_error_and_fd_iv():
    config = DgpConfig(n_units=2000, T=4, n_cells=10, beta=0.4,
                       delta_endog=0.0, reliability=0.5, seed=5)
    fd_raw, fd_iv = [], []
    for rep in range(200):
        table = generate(config, seed=[5, rep])
        fd_raw.append(first_difference_fit(SPEC, table).params["x"])
        fd_iv.append(
            fd_instrument(SPEC, table, InstrumentSet("x", ("z",))).params["x"])
    mean_raw, mean_iv = float(np.mean(fd_raw)), float(np.mean(fd_iv))
    ok = mean_raw < 0.25 and abs(mean_iv - 0.4) <= 0.05
    criterion(5, "FD attenuated, FD-IV recovers the slope", ok,
              f"fd={mean_raw:.3f}, fd_iv={mean_iv:.3f}")


def test_06_correction_variant_contrast():
    config = DgpConfig(n_units=1000, T=4, n_cells=10, beta=0.4,
                       delta_endog=-0.3, x_sd_cell=0.3, seed=600)

    # time-varying cell sizes: the false correction drifts away
    false_v, approx_v, exact_v = [], [], []
    for rep in range(60):
        table = generate(config, seed=[600, rep])
        table = thin_waves(table, (1.0, 0.5, 1.0, 0.75), seed=[600, rep, 1])
        pp = aggregate(table, weighting="equal", min_cell_size=1)
        false_v.append(within_fit(SPEC, pp, correction="false").params["x"])
        approx_v.append(within_fit(SPEC, pp, correction="approx").params["x"])
        exact_v.append(within_fit(SPEC, pp, correction="exact").params["x"])
    false_v, approx_v, exact_v = map(np.asarray, (false_v, approx_v, exact_v))
    margins = []
    ok = True
    for other in (approx_v, exact_v):
        d = false_v - other
        se = d.std(ddof=1) / np.sqrt(len(d))
        margins.append(abs(d.mean()) / se)
        ok &= abs(d.mean()) > 5.0 * se

    # constant cell sizes under equal weights: delta is time-invariant and
    # the false correction coincides with the approximate one
    table = generate(config, seed=[600, 999])
    pp = aggregate(table, weighting="equal", min_cell_size=1)
    fa = within_fit(SPEC, pp, correction="approx")
    ff = within_fit(SPEC, pp, correction="false")
    gap = float(np.max(np.abs(fa.params - ff.params)))
    ok &= gap < 1e-8
    criterion(6, "false correction detectably wrong iff sizes vary", ok,
              f"margins_vs_se={margins[0]:.0f}x/{margins[1]:.0f}x, const gap={gap:.1e}")


def test_07_hausman_calibration():
    # hand-arithmetic scalar case
    from pseudopanel import FitResult

    a = FitResult(params=pd.Series([0.2], index=["ly"]), cov=np.array([[0.0009]]),
                  residuals=pd.Series(dtype=float), df=1, n_used=1, method="m")
    b = FitResult(params=pd.Series([0.4], index=["ly"]), cov=np.array([[0.0016]]),
                  residuals=pd.Series(dtype=float), df=1, n_used=1, method="m")
    scalar = hausman(a, b).statistic
    ok = abs(scalar - 16.0) < 1e-12

    config = DgpConfig(n_units=500, T=4, n_cells=5, beta=0.4, delta_endog=0.0,
                       sigma_mu2=0.0, sigma_upsilon2=0.01, reliability=1.0, seed=700)
    rejections = 0
    for rep in range(1000):
        table = generate(config, seed=[700, rep])
        out = hausman(between_fit(SPEC, table), within_fit(SPEC, table),
                      subset=("x",))
        rejections += out.p_value < 0.05
    size = rejections / 1000
    ok &= abs(size - 0.05) <= 0.02

    config_alt = DgpConfig(n_units=500, T=4, n_cells=5, beta=0.4, delta_endog=-0.2,
                           sigma_mu2=0.0, sigma_upsilon2=0.01, reliability=1.0,
                           seed=701)
    power_rej = 0
    for rep in range(200):
        table = generate(config_alt, seed=[701, rep])
        out = hausman(between_fit(SPEC, table), within_fit(SPEC, table),
                      subset=("x",))
        power_rej += out.p_value < 0.05
    power = power_rej / 200
    ok &= power > 0.95
    criterion(7, "Hausman: exact scalar, 5% size, >95% power", ok,
              f"scalar={scalar:.1f}, size={size:.3f}, power={power:.3f}")


def test_08_qaids_recovery():
    frame = synth_shares(5000, seed=8)
    res = qaids_fit(demand_spec(), frame, stone_weights=STONE_W)
    ok = res.converged and res.iterations <= 20
    worst = 0.0
    for g in ("g1", "g2"):
        worst = max(worst, abs(res.coefficient(g, "lny") - TRUE["b"][g]))
        worst = max(worst, abs(res.coefficient(g, "lny2") - TRUE["c"][g]))
    ok &= worst <= 0.02

    # the linear path is one pass and matches a direct system fit
    frame_lin = synth_shares(1500, seed=9, quadratic=False)
    res_lin = qaids_fit(demand_spec(quadratic=False), frame_lin,
                        stone_weights=STONE_W)
    work = frame_lin.copy()
    work["lny"] = frame_lin["ln_y"] - res_lin.stone
    direct = sur([ModelSpec("w1", ("lny",)), ModelSpec("w2", ("lny",))], work)
    gap = max(
        float(np.max(np.abs(res_lin.fits["g1"].params - direct.fits[0].params))),
        float(np.max(np.abs(res_lin.fits["g2"].params - direct.fits[1].params))),
    )
    ok &= gap < 1e-10
    criterion(8, "quadratic system recovered, linear path exact", ok,
              f"worst coef err={worst:.4f}, iters={res.iterations}, linear gap={gap:.1e}")


def test_09_sur_equals_ols_identical_regressors():
    rng = np.random.default_rng(9)
    n = 500
    x = rng.normal(size=n)
    frame = pd.DataFrame({
        "x": x,
        "w1": 0.3 - 0.05 * x + 0.02 * rng.normal(size=n),
        "w2": 0.05 + 0.03 * x + 0.01 * rng.normal(size=n),
    })
    specs = [ModelSpec("w1", ("x",)), ModelSpec("w2", ("x",))]
    res = sur(specs, frame)
    gap = max(
        float(np.max(np.abs(res.fits[i].params - ols(specs[i], frame).params)))
        for i in range(2)
    )
    criterion(9, "SUR equals OLS for identical regressor matrices", gap < 1e-8,
              f"gap={gap:.2e}")


def test_10_dfbetas():
    rng = np.random.default_rng(10)
    n = 400
    x = rng.normal(size=n)
    frame = pd.DataFrame({"x": x, "y": 1.0 + 0.5 * x})
    frame.loc[123, "y"] += 1.0
    res = dfbetas_filter(SPEC, frame)
    ok = res.threshold == pytest.approx(0.1, abs=1e-15)
    ok &= list(res.flagged) == [123]

    rates = []
    for rep in range(50):
        rng = np.random.default_rng([10, rep])
        xs = rng.choice([-1.0, 1.0], size=400)
        ys = 0.5 * xs + rng.normal(size=400)
        out = dfbetas_filter(ModelSpec("y", ("x",), intercept=False),
                             pd.DataFrame({"x": xs, "y": ys}))
        rates.append(out.flags.mean())
    rate = float(np.mean(rates))
    ok &= abs(rate - 0.04) <= 0.02
    criterion(10, "DFBETAS threshold, unique outlier, ~4% share", ok,
              f"threshold={res.threshold}, rate={rate:.3f}")


def test_11_cli_determinism(tmp_path):
    config = tmp_path / "dgp.json"
    config.write_text(json.dumps(
        {"n_units": 400, "T": 4, "n_cells": 4, "beta": 0.4, "seed": 0}),
        encoding="utf-8")
    sim1, sim2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
    argv = ["simulate", "--config", str(config), "--reps", "10", "--seed", "42",
            "--estimators", "between,within", "--quiet"]
    assert main(argv + ["--out", str(sim1)]) == 0
    assert main(argv + ["--out", str(sim2)]) == 0
    sim_ok = sim1.read_bytes() == sim2.read_bytes()

    rng = np.random.default_rng(11)
    rows = ["unit_id,wave,age,edu,w_food,ln_y"]
    ages = rng.integers(25, 75, 300)
    edus = rng.choice(["low", "high"], 300)
    for i in range(300):
        for w in (1, 2, 3, 4):
            ln_y = 10.0 + 0.4 * rng.normal()
            share = min(max(0.3 - 0.02 * (ln_y - 10) + 0.05 * rng.normal(), 0.0), 1.0)
            rows.append(f"u{i},{w},{ages[i]},{edus[i]},{share:.6f},{ln_y:.6f}")
    micro = tmp_path / "micro.csv"
    micro.write_text("\n".join(rows) + "\n", encoding="utf-8")
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps(
        {"w_food": "share", "ln_y": "log_outlay", "edu": "cohort_key"}),
        encoding="utf-8")
    est1, est2 = tmp_path / "e1.json", tmp_path / "e2.json"
    argv = ["estimate", "--input", str(micro), "--schema", str(schema),
            "--group", "--estimator", "within", "--correction", "approx",
            "--dependent", "w_food", "--regressors", "ln_y", "--seed", "3",
            "--quiet"]
    assert main(argv + ["--out", str(est1)]) == 0
    assert main(argv + ["--out", str(est2)]) == 0
    est_ok = est1.read_bytes() == est2.read_bytes()
    criterion(11, "simulate and estimate are byte-identical under a fixed seed",
              sim_ok and est_ok, f"simulate={sim_ok}, estimate={est_ok}")
