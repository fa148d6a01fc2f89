import json

import numpy as np
import pandas as pd
import pytest

from pseudopanel import (
    FitResult,
    ModelSpec,
    PseudoPanel,
    ols,
    within_fit,
)
from pseudopanel.cli import main

SCHEMA = {"w_food": "share", "ln_y": "log_outlay", "edu": "cohort_key"}


def write_micro_csv(tmp_path, n_units=60, waves=(1, 2, 3), name="micro.csv",
                    age_offset=0):
    rng = np.random.default_rng(0)
    rows = ["unit_id,wave,age,edu,w_food,ln_y"]
    ages = rng.integers(22, 80, n_units) + age_offset
    edus = rng.choice(["low", "high"], n_units)
    for i in range(n_units):
        for w in waves:
            ln_y = 10.0 + 0.4 * rng.normal()
            share = min(max(0.3 - 0.02 * (ln_y - 10) + 0.05 * rng.normal(), 0.0), 1.0)
            rows.append(f"u{i},{w},{ages[i]},{edus[i]},{share:.6f},{ln_y:.6f}")
    path = tmp_path / name
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(SCHEMA), encoding="utf-8")
    return path, schema_path


class TestGroupCommand:
    def test_emits_expected_columns(self, tmp_path):
        micro, schema = write_micro_csv(tmp_path)
        out = tmp_path / "pp.csv"
        code = main(["group", "--input", str(micro), "--schema", str(schema),
                     "--out", str(out), "--quiet"])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame.columns[:5]) == ["key", "wave", "size", "delta", "delta_bar"]

    def test_uncovered_age_exits_2(self, tmp_path):
        micro, schema = write_micro_csv(tmp_path, age_offset=-20)  # ages can dip below 0
        scheme = tmp_path / "scheme.json"
        scheme.write_text(json.dumps({"age_bands": [[30, 40]]}), encoding="utf-8")
        code = main(["group", "--input", str(micro), "--schema", str(schema),
                     "--cohorts", str(scheme), "--out", str(tmp_path / "x.csv"),
                     "--quiet"])
        assert code == 2

    def test_split_runs_are_deterministic(self, tmp_path):
        micro, schema = write_micro_csv(tmp_path, n_units=600, waves=(1, 2, 3, 4))
        scheme = tmp_path / "wide.json"
        scheme.write_text(json.dumps({"age_bands": [[None, 50], [50, None]]}),
                          encoding="utf-8")
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["group", "--input", str(micro), "--schema", str(schema),
                "--cohorts", str(scheme), "--split", "4", "--seed", "7", "--quiet"]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_report_written(self, tmp_path):
        micro, schema = write_micro_csv(tmp_path)
        report = tmp_path / "report.csv"
        code = main(["group", "--input", str(micro), "--schema", str(schema),
                     "--out", str(tmp_path / "pp.csv"), "--report", str(report),
                     "--quiet"])
        assert code == 0
        assert "size_min" in report.read_text()


class TestEstimateCommand:
    def make_pseudo_csv(self, tmp_path):
        micro, schema = write_micro_csv(tmp_path, n_units=200, waves=(1, 2, 3, 4))
        out = tmp_path / "pp.csv"
        main(["group", "--input", str(micro), "--schema", str(schema),
              "--out", str(out), "--quiet"])
        return out

    def test_cli_matches_library(self, tmp_path):
        pp_csv = self.make_pseudo_csv(tmp_path)
        out = tmp_path / "fit.json"
        code = main(["estimate", "--pseudo-input", str(pp_csv),
                     "--dependent", "w_food", "--regressors", "ln_y",
                     "--estimator", "within", "--correction", "exact",
                     "--out", str(out), "--quiet"])
        assert code == 0
        payload = json.loads(out.read_text())
        pp = PseudoPanel.from_csv(pp_csv)
        fit = within_fit(ModelSpec("w_food", ("ln_y",)), pp, correction="exact")
        assert float(payload["coef"]["ln_y"]) == pytest.approx(
            fit.params["ln_y"], rel=1e-10)

    def test_all_grid_shape(self, tmp_path):
        pp_csv = self.make_pseudo_csv(tmp_path)
        out = tmp_path / "grid.json"
        code = main(["estimate", "--pseudo-input", str(pp_csv),
                     "--dependent", "w_food", "--regressors", "ln_y",
                     "--all", "--out", str(out), "--quiet"])
        assert code == 0
        grid = json.loads(out.read_text())["grid"]
        assert set(grid) == {"between", "cs", "within", "fd"}
        assert all("raw" in grid[e] for e in grid)

    def test_iv_without_instruments_exits_2(self, tmp_path):
        pp_csv = self.make_pseudo_csv(tmp_path)
        code = main(["estimate", "--pseudo-input", str(pp_csv),
                     "--dependent", "w_food", "--regressors", "ln_y",
                     "--iv", "--quiet"])
        assert code == 2

    def test_missing_input_exits_2(self, tmp_path):
        code = main(["estimate", "--input", str(tmp_path / "nope.csv"),
                     "--schema", str(tmp_path / "nope.json"),
                     "--dependent", "w", "--regressors", "x", "--quiet"])
        assert code == 2


class TestSimulateCommand:
    def test_same_seed_byte_identical(self, tmp_path):
        config = tmp_path / "dgp.json"
        config.write_text(json.dumps({
            "n_units": 200, "T": 3, "n_cells": 4, "beta": 0.4, "seed": 0,
        }), encoding="utf-8")
        out1, out2 = tmp_path / "mc1.csv", tmp_path / "mc2.csv"
        argv = ["simulate", "--config", str(config), "--reps", "5",
                "--seed", "42", "--estimators", "between,within", "--quiet"]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_json_summary(self, tmp_path):
        config = tmp_path / "dgp.json"
        config.write_text(json.dumps({
            "n_units": 100, "T": 3, "n_cells": 4, "seed": 1,
        }), encoding="utf-8")
        out = tmp_path / "mc.csv"
        js = tmp_path / "mc.json"
        code = main(["simulate", "--config", str(config), "--reps", "2",
                     "--estimators", "between", "--out", str(out),
                     "--json-out", str(js), "--quiet"])
        assert code == 0
        payload = json.loads(js.read_text())
        assert payload["reps"] == 2


class TestHausmanCommand:
    def test_identical_fits_statistic_zero(self, tmp_path):
        rng = np.random.default_rng(1)
        frame = pd.DataFrame({"x": rng.normal(size=40)})
        frame["y"] = 0.5 * frame["x"] + rng.normal(size=40)
        fit = ols(ModelSpec("y", ("x",)), frame)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        fit.to_json(a)
        fit.to_json(b)
        out = tmp_path / "h.json"
        code = main(["hausman", "--fit-a", str(a), "--fit-b", str(b),
                     "--subset", "x", "--out", str(out), "--quiet"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert float(payload["statistic"]) == pytest.approx(0.0, abs=1e-12)


class TestShadowPriceCommand:
    def test_frisch_benchmark(self, tmp_path, capsys):
        code = main(["shadow-price", "--cs", "0.19", "--ts", "0.38", "--frisch"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert float(payload["shadow_price_income_elasticity"]) == pytest.approx(1.0, abs=0.01)

    def test_explicit_gamma(self, capsys):
        code = main(["shadow-price", "--cs", "1.0", "--ts", "0.39",
                     "--gamma", "-0.195"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert float(payload["shadow_price_income_elasticity"]) == pytest.approx(-3.13, abs=0.01)


class TestElasticityCommand:
    def test_from_saved_fit(self, tmp_path, capsys):
        fit = FitResult(
            params=pd.Series([0.3, 0.05], index=["const", "lny"]),
            cov=np.eye(2), residuals=pd.Series(dtype=float),
            df=10, n_used=20, method="manual",
        )
        path = tmp_path / "fit.json"
        fit.to_json(path)
        code = main(["elasticity", "--fit", str(path), "--share", "0.25",
                     "--coef", "lny"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert float(payload["elasticity"]) == pytest.approx(1.2, abs=1e-10)
